import numpy as np


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return x.mean(), x.std(ddof=1) / np.sqrt(x.size)


def var_se(x):
    """Sample variance and its large-sample standard error sqrt((m4 - s^4) / n)."""
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    s2 = c @ c / (x.size - 1)
    m4 = np.mean(c**4)
    return s2, np.sqrt(max(m4 - s2**2, 0.0) / x.size)


def within(value, target, se, k=3.0):
    return abs(value - target) <= k * se
