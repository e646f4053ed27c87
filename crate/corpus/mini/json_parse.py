import json
payload = json.loads(raw)
name = payload["name"]
print(name.upper())
