pairs = list(zip(keys, vals))
lookup = dict(pairs)
print(lookup.get(target, "none"))
