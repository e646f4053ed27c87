cleaned = text.strip().lower()
tokens = cleaned.split()
print(len(tokens))
