message = template.format(name=username, n=count)
print(message)
