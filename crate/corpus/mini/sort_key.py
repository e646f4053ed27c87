ordered = sorted(records, key=lambda r: r.age)
youngest = ordered[0]
print(youngest.name)
