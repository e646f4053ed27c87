with open(path) as f:
    lines = f.readlines()
print(len(lines))
