import os
full = os.path.join(base_dir, filename)
if os.path.exists(full):
    print("found")
else:
    print("missing", full)
