if verbose:
    print("starting")
result = compute(values)
if result is None:
    result = default
print(result)
