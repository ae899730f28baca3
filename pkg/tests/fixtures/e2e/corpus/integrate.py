from scipy.integrate import simpson


def area(y, x):
    y = list(y)
    return simpson(y, x=x)


def area_dx(y):
    dx = 0.5
    total = simpson(y, dx=dx)
    return total
