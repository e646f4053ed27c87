response = client.get(url)
data = response.json()
for item in data:
    print(item)
