"""Independent reference values.

Closed forms are evaluated in mpmath at 50 digits; the grid functionals are
re-implemented face by face with plain Python loops, sharing no code with
the vectorized kernels under test.
"""

import math

import mpmath

mpmath.mp.dps = 50


# ---- closed forms -----------------------------------------------------
def t_w_power(norm_w, sum_p, p):
    """Ray maximum of t*norm - t^p/p * sum_p (1-Laplacian, Power(p))."""
    return float((mpmath.mpf(norm_w) / mpmath.mpf(sum_p)) ** (1 / (mpmath.mpf(p) - 1)))


def psi_power(norm_w, sum_p, p):
    t = (mpmath.mpf(norm_w) / mpmath.mpf(sum_p)) ** (1 / (mpmath.mpf(p) - 1))
    return float(t * norm_w - t ** p / p * sum_p)


def one_cell_amplitude(p, lam=1.0, h=1.0):
    """Critical amplitude on a single cell: 4 h = lam h^2 c^(p-1)."""
    return float((4 * mpmath.mpf(h) / (lam * mpmath.mpf(h) ** 2)) ** (1 / (mpmath.mpf(p) - 1)))


# Frozen values, recomputed by the functions above in test_oracles.py.
T_W_NORM4_P15 = 16.0           # (4 / 1)^(1 / 0.5)
ONE_CELL_C_P15 = 16.0          # 4^(1/0.5)
ONE_CELL_C_P11 = 1048575.9999999871  # 4^(1/(1.1 - 1)) with the float value of 1.1
ONE_CELL_C_P19 = 4.666116158304467   # 4^(1/0.9)
F_POWER15_AT_1 = 2.0 / 3.0     # |1|^1.5 / 1.5


# ---- loop reference for the grid functionals --------------------------
def tv_loops(a, h, anisotropic=False):
    nx, ny = len(a), len(a[0])
    total = 0.0
    for i in range(nx):
        for j in range(ny):
            dx = (a[i + 1][j] - a[i][j]) / h if i + 1 < nx else 0.0
            dy = (a[i][j + 1] - a[i][j]) / h if j + 1 < ny else 0.0
            total += (abs(dx) + abs(dy)) if anisotropic else math.hypot(dx, dy)
    return h * h * total


def trace_loops(a, h):
    nx, ny = len(a), len(a[0])
    total = 0.0
    for j in range(ny):
        total += abs(a[0][j]) + abs(a[nx - 1][j])
    for i in range(nx):
        total += abs(a[i][0]) + abs(a[i][ny - 1])
    return h * total
