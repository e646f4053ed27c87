if '@' in user.email:
    domain = user.email.split('@')[1]
    print(domain)
else:
    print("invalid address")
