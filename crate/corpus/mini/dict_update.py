counts = {}
for word in words:
    counts[word] = counts.get(word, 0) + 1
best = max(counts, key=counts.get)
print(best)
