attempts = 0
while attempts < max_attempts:
    attempts += 1
    if connection.ready():
        break
print(attempts)
