"""Fibering maps and the Nehari projection
==========================================

Along a ray t -> t*w the energy of the 1-Laplacian problem with a power
nonlinearity rises from zero, peaks once and falls to minus infinity.  The
peak t_w is where the ray meets the Nehari set, and for a pure power it has
a closed form that the bracketed bisection should reproduce.
"""

# %%
import numpy as np

from nehari_bv import (DiscreteDomain, FiberingMap, Functional, Power, ProblemSpec,
                       ScalarField, bv_norm, count_sign_changes, gamma, nehari_project)

domain = DiscreteDomain.unit_square(16)
p = 1.5
spec = ProblemSpec(Functional.ONE_LAPLACIAN, Power(p), domain)
w = ScalarField(domain, np.random.default_rng(0).standard_normal(domain.shape))

# %% The projected amplitude, numerically and in closed form.
root = nehari_project(FiberingMap(spec, w))
sum_p = domain.cell_area * np.sum(np.abs(w.values) ** p)
closed = (bv_norm(w) / sum_p) ** (1 / (p - 1))
print(f"t_w by bisection  {root.t_w:.12g}")
print(f"t_w closed form   {closed:.12g}")

# %% gamma along a log grid: one maximum, located at t_w.
fib = FiberingMap(spec, w)
ts = root.t_w * np.logspace(-2, 1, 13)
for t in ts:
    marker = "  <- t_w" if np.isclose(t, root.t_w) else ""
    print(f"t/t_w = {t / root.t_w:8.3f}   gamma = {gamma(fib, t):12.6f}{marker}")
print("sign changes of gamma' on the dyadic sweep:",
      count_sign_changes(FiberingMap(spec, closed * w)))
