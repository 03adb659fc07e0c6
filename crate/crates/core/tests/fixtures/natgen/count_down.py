def f(n):
    acc = []
    for i in range(n, 0, -1):
        acc.append(i * 10)
    return acc
