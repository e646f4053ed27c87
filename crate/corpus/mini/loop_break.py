for candidate in candidates:
    if candidate.score > threshold:
        winner = candidate
        break
else:
    winner = None
print(winner)
