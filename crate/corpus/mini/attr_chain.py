total = order.price * order.quantity
if total > limit:
    print("over limit")
else:
    print(total)
