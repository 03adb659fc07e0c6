def f(n):
    out = []
    for k in range(1, n + 1):
        if k % 3 == 0:
            out.append(0)
        else:
            out.append(k)
    return out
