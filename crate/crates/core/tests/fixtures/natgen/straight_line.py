def f(a, b):
    c = a * 2
    d = c - b
    return d
