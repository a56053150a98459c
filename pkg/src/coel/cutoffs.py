"""C^2 quintic smoothstep cut-offs and the dyadic partition of unity."""
import numpy as np


def smoothstep(x):
    """10x^3 - 15x^4 + 6x^5 on [0,1], clamped outside; returns (S, S', S'')."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    s = x * x * x * (10 - 15 * x + 6 * x * x)
    ds = 30 * x * x * (1 - x) ** 2
    dds = 60 * x * (1 - x) * (1 - 2 * x)
    return s, ds, dds


def cutoff(r, a, b):
    """Equal to 1 for r <= a and 0 for r >= b; returns (chi, chi', chi'')."""
    w = b - a
    s, ds, dds = smoothstep((np.asarray(r, dtype=float) - a) / w)
    return 1.0 - s, -ds / w, -dds / w**2


def partition_bump(r):
    """chi with supp in [1,3], chi = 1 on [1.5,2] and sum_k chi(r/2^k) = 1.

    Built as eta(r) - eta(2r) with eta = cutoff(., 2, 3).  Returns (chi, chi', chi'').
    """
    r = np.asarray(r, dtype=float)
    e1, d1, dd1 = cutoff(r, 2.0, 3.0)
    e2, d2, dd2 = cutoff(2 * r, 2.0, 3.0)
    return e1 - e2, d1 - 2 * d2, dd1 - 4 * dd2
