try:
    value = int(field)
    if value < 0:
        raise ValueError("negative")
    print(value)
except ValueError:
    print("bad value")
