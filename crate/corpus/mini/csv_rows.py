import csv
reader = csv.reader(handle)
header = next(reader)
rows = [row for row in reader]
print(header, len(rows))
