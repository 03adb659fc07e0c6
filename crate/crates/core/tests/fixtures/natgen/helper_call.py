def square(v):
    return v * v


def f(a, b):
    return square(a) + 1 > square(b)
