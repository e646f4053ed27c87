try:
    ratio = numerator / denominator
except ZeroDivisionError:
    ratio = 0
print(ratio)
