first = items[0]
last = items[-1]
print(first, last)
