self.count += 1
if self.count > self.limit:
    self.reset()
print(self.count)
