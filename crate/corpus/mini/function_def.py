def scale(points, factor):
    return [p * factor for p in points]

scaled = scale(coords, ratio)
print(scaled[0])
