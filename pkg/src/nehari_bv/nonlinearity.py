"""Nonlinearities ``f`` with primitive ``F`` and numerical hypothesis audits.

Built-ins:

* ``Power(p)``:  f(s) = |s|^(p-2) s,  F(s) = |s|^p / p
* ``PowerSum(p, q, c1, c2)``:  f(s) = c1 |s|^(q-2) s + c2 |s|^(p-2) s,
  with 1 < q <= p (``p`` is the growth exponent)
* ``Custom(f, p, ...)``: user callables; ``F`` defaults to adaptive quadrature.

The audit checks continuity/smallness at zero, subcritical growth
``|f(s)| <= c1 + c2 |s|^(p-1)`` with ``p`` in ``(1, 2)`` (the plane, where the
critical exponent is 2), superlinearity of ``F(t)/t``, monotonicity of ``f``
and produces an (eps, C_eps) pair with ``|F(s)| <= eps |s| + C_eps |s|^p``
on the sampled grid.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .bv_calculus import ScalarField

CRITICAL_EXPONENT = 2.0  # N / (N - 1) with N = 2


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    kind: str
    p: float
    f: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    F: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    fprime: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    params: dict = field(default_factory=dict)
    strict: bool = True

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, **self.params}

    @property
    def picklable(self) -> bool:
        return self.kind in ("power", "power_sum")

    def __reduce__(self):
        # built-in kinds are rebuilt from their parameters; closures do not pickle
        if not self.picklable:
            raise TypeError(f"a {self.kind!r} nonlinearity cannot be sent to worker processes")
        return from_config, (self.to_dict(),)


def _spow(s, e):
    """|s|^e * sign(s) elementwise with the value 0 at s = 0."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 0, np.sign(s) * a**e, 0.0)
    return out


def _apow(s, e):
    """|s|^e for e > 0, or the convention 0 at s = 0 when e < 0."""
    a = np.abs(np.asarray(s, dtype=float))
    with np.errstate(divide="ignore"):
        return np.where(a > 0, a**e, 0.0)


def Power(p: float) -> Nonlinearity:
    """``f(s) = |s|^(p-2) s``.  ``f'(0)`` is taken as 0 (it is infinite for p < 2)."""
    p = float(p)
    if not p > 1:
        raise ValueError(f"Power exponent must exceed 1, got {p}")
    return Nonlinearity(
        kind="power",
        p=p,
        f=lambda s: _spow(s, p - 1.0),
        F=lambda s: _apow(s, p) / p,
        fprime=lambda s: (p - 1.0) * _apow(s, p - 2.0),
    )


def PowerSum(p: float, q: float, c1: float = 1.0, c2: float = 1.0) -> Nonlinearity:
    p, q, c1, c2 = float(p), float(q), float(c1), float(c2)
    if not (1 < q <= p):
        raise ValueError(f"PowerSum needs 1 < q <= p, got p={p}, q={q}")
    if c1 <= 0 or c2 <= 0:
        raise ValueError("PowerSum coefficients must be positive")
    return Nonlinearity(
        kind="power_sum",
        p=p,
        f=lambda s: c1 * _spow(s, q - 1.0) + c2 * _spow(s, p - 1.0),
        F=lambda s: c1 * _apow(s, q) / q + c2 * _apow(s, p) / p,
        fprime=lambda s: c1 * (q - 1.0) * _apow(s, q - 2.0) + c2 * (p - 1.0) * _apow(s, p - 2.0),
        params={"q": q, "c1": c1, "c2": c2},
    )


def Custom(f, p: float, F=None, fprime=None, name: str = "custom", strict: bool = True) -> Nonlinearity:
    """Wrap user callables.

    ``f`` must accept scalars; it is vectorized here.  Without ``F`` the
    primitive is computed cell by cell with ``scipy.integrate.quad``, which is
    fine for audits but slow inside the solver.  ``strict=False`` accepts a
    merely nondecreasing ``f`` (the audit then warns instead of failing).
    """
    fv = np.vectorize(f, otypes=[float])
    if F is None:
        def _prim(t):
            return integrate.quad(f, 0.0, t, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        Fv = np.vectorize(_prim, otypes=[float])
    else:
        Fv = np.vectorize(F, otypes=[float])
    fp = None if fprime is None else np.vectorize(fprime, otypes=[float])
    return Nonlinearity(kind="custom", p=float(p), f=fv, F=Fv, fprime=fp, params={"name": name}, strict=strict)


def from_config(d: dict) -> Nonlinearity:
    kind = d.get("kind", "power")
    if kind == "power":
        return Power(d["p"])
    if kind == "power_sum":
        return PowerSum(d["p"], d["q"], d.get("c1", 1.0), d.get("c2", 1.0))
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


def f_eval(nl: Nonlinearity, s):
    out = nl.f(s)
    return float(out) if np.ndim(out) == 0 else out


def F_eval(nl: Nonlinearity, s):
    out = nl.F(s)
    return float(out) if np.ndim(out) == 0 else out


def i_functional(u: ScalarField, nl: Nonlinearity) -> float:
    """``h^2 * sum F(u)``."""
    return u.domain.cell_area * float(np.sum(nl.F(u.values)))


def i_dirderiv_ray(u: ScalarField, t: float, nl: Nonlinearity) -> float:
    """``h^2 * sum f(t u) u``, the derivative of ``I`` at ``t u`` along ``u``."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    a = u.values
    return u.domain.cell_area * float(np.sum(nl.f(t * a) * a))


# ----------------------------------------------------------------------
# audit
@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    detail: str
    witness: dict = field(default_factory=dict)


@dataclass
class AuditReport:
    nonlinearity: dict
    checks: list[HypothesisCheck]
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "nonlinearity": self.nonlinearity,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "warnings": list(self.warnings),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def default_grid(smax: float = 1e3, n: int = 400) -> np.ndarray:
    pos = np.logspace(-6, np.log10(smax), n)
    return np.concatenate([-pos[::-1], [0.0], pos])


def _num(x) -> float:
    x = float(x)
    return x if np.isfinite(x) else (1e308 if x > 0 else -1e308)


def audit(nl: Nonlinearity, s_grid=None, tol: float = 1e-9, eps: float = 0.1) -> AuditReport:
    """Falsification tests for the structural hypotheses on ``f``.

    Checks are named ``f1`` ... ``f5``, ``fepsilon`` and ``antiderivative``.
    Failing checks carry a witness (the offending sample points).
    """
    s = np.asarray(default_grid() if s_grid is None else s_grid, dtype=float)
    if s.size == 0:
        raise ValueError("s_grid must be nonempty")
    if np.any(np.diff(s) < 0):
        raise ValueError("s_grid must be sorted")
    fs = np.asarray(nl.f(s), dtype=float)
    Fs = np.asarray(nl.F(s), dtype=float)
    checks: list[HypothesisCheck] = []
    warns: list[str] = []

    # f1: finite values, no jumps between grid neighbours beyond what the
    # local slope predicts is not testable on a grid; finiteness is.
    bad = ~np.isfinite(fs)
    checks.append(HypothesisCheck(
        "f1", not bad.any(), "f finite on the grid",
        {"nonfinite_at": s[bad][:5].tolist()} if bad.any() else {}))

    # f2: f(0) = 0 and |f| shrinks monotonically along s = +-10^-k.
    ks = 10.0 ** -np.arange(1, 13)
    f0 = abs(float(nl.f(0.0)))
    ok2, wit2 = f0 <= tol, {"f(0)": f0}
    for sign in (1.0, -1.0):
        seq = np.abs(np.asarray(nl.f(sign * ks), dtype=float))
        if not (np.all(np.diff(seq) <= tol) and seq[-1] < seq[0]):
            ok2 = False
            wit2[f"|f({'+' if sign > 0 else '-'}10^-k)|"] = seq.tolist()
    checks.append(HypothesisCheck("f2", ok2, "f(s) -> 0 as s -> 0", {} if ok2 else wit2))

    # f3: subcritical exponent and a finite growth fit.
    p = nl.p
    a = np.abs(s)
    inner = a <= 1.0
    c1 = float(np.max(np.abs(fs[inner]))) if inner.any() else 0.0
    outer = a > 1.0
    ratio = np.abs(fs[outer]) / a[outer] ** (p - 1.0) if outer.any() else np.zeros(0)
    c2 = float(np.max(ratio)) if ratio.size else 0.0
    c1, c2 = max(c1, tol), max(c2, tol)
    subcrit = 1.0 < p < CRITICAL_EXPONENT
    tail_ok = True
    for side in (s > 1.0, s < -1.0):
        # the fitted bound must not be set by a still-rising tail
        if side.sum() >= 4:
            r = np.abs(fs[side]) / a[side] ** (p - 1.0)
            top = r[np.argsort(a[side])][-4:]
            if np.all(np.diff(top) > 1e-12 * top[-1]):
                tail_ok = False
    ok3 = subcrit and tail_ok and np.isfinite(c1) and np.isfinite(c2)
    detail3 = f"|f(s)| <= c1 + c2|s|^(p-1) with p={p}"
    wit3 = {"c1": _num(c1), "c2": _num(c2), "p": p}
    if not subcrit:
        detail3 += f"; p must lie in (1, {CRITICAL_EXPONENT:g}) for N = 2"
    if not tail_ok:
        detail3 += "; growth ratio still rising at the largest samples"
    checks.append(HypothesisCheck("f3", bool(ok3), detail3, wit3))

    # f4: F(t)/t -> +-inf, audited as strict monotone growth along t = 2^k.
    t = 2.0 ** np.arange(1, 21)
    up = np.asarray(nl.F(t), dtype=float) / t
    dn = np.asarray(nl.F(-t), dtype=float) / (-t)
    ok4 = bool(np.all(np.diff(up) > 0) and np.all(np.diff(dn) < 0))
    checks.append(HypothesisCheck("f4", ok4, "F(t)/t -> +-inf along t = +-2^k",
                                  {} if ok4 else {"F(t)/t": up.tolist(), "F(-t)/(-t)": dn.tolist()}))

    # f5: f increasing on the grid.
    d = np.diff(fs)
    strict_bad = d <= 0
    weak_bad = d < 0
    if weak_bad.any():
        idx = np.nonzero(weak_bad)[0][:5]
        checks.append(HypothesisCheck("f5", False, "f is not monotone",
                                      {"decreasing_between": [[float(s[i]), float(s[i + 1])] for i in idx]}))
    elif strict_bad.any():
        idx = np.nonzero(strict_bad)[0][:5]
        wit = {"flat_between": [[float(s[i]), float(s[i + 1])] for i in idx]}
        if nl.strict:
            checks.append(HypothesisCheck("f5", False, "f is not strictly increasing", wit))
        else:
            warns.append("f is nondecreasing but not strictly increasing; Nehari roots may not be unique")
            warnings.warn(warns[-1], stacklevel=2)
            checks.append(HypothesisCheck("f5", True, "f nondecreasing (non-strict accepted)", wit))
    else:
        checks.append(HypothesisCheck("f5", True, "f strictly increasing on the grid"))

    # (eps, C_eps) pair: |F(s)| <= eps|s| + C_eps|s|^p.
    nz = a > 0
    excess = np.maximum(np.abs(Fs[nz]) - eps * a[nz], 0.0)
    c_eps = float(np.max(excess / a[nz] ** p)) if nz.any() else 0.0
    ok_e = bool(np.isfinite(c_eps))
    checks.append(HypothesisCheck("fepsilon", ok_e, f"|F(s)| <= {eps}|s| + C_eps|s|^p",
                                  {"eps": eps, "C_eps": _num(c_eps)}))

    # F(0) = 0 and F' = f by central differences.
    F0 = abs(float(nl.F(0.0)))
    probe = s[(a >= 1e-3)]
    if probe.size:
        hstep = 1e-6 * np.maximum(1.0, np.abs(probe))
        slope = (np.asarray(nl.F(probe + hstep)) - np.asarray(nl.F(probe - hstep))) / (2 * hstep)
        fp = np.asarray(nl.f(probe))
        err = float(np.max(np.abs(slope - fp) / np.maximum(1.0, np.abs(fp))))
    else:
        err = 0.0
    ok_a = F0 <= tol and err <= 1e-5
    checks.append(HypothesisCheck("antiderivative", bool(ok_a), "F(0) = 0 and F' = f",
                                  {"F(0)": F0, "max_rel_slope_error": err}))

    return AuditReport(nl.to_dict(), checks, warns)
