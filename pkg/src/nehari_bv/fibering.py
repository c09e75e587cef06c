"""Fibering maps ``gamma_w(t) = Phi(t w)`` and the Nehari projection.

The energy is ``Phi = i0 - I`` (1-Laplacian) or ``Phi = i0_tilde - lam*I``
(prescribed mean curvature).  Along a ray the one-sided derivative is

    g(t) = I0'(t w) w - lam * I'(t w) w,

and the Nehari point of the ray is the ``t_w > 0`` where ``g`` changes sign
from positive to negative, i.e. where ``gamma_w`` peaks.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bv_calculus import (
    DiscreteDomain,
    ScalarField,
    TvFlavor,
    _grad_sq,
    _i0,
    _i0_tilde,
    _i0_tilde_ray,
    _trace,
)
from .errors import BracketFailureHigh, BracketFailureLow, ZeroDirection
from .nonlinearity import Nonlinearity

MAX_BRACKET_STEPS = 200


class Functional(str, Enum):
    ONE_LAPLACIAN = "one_laplacian"
    MEAN_CURVATURE = "mean_curvature"


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    functional: Functional
    nl: Nonlinearity
    domain: DiscreteDomain
    flavor: TvFlavor = TvFlavor.ISOTROPIC
    lam: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "functional", Functional(self.functional))
        object.__setattr__(self, "flavor", TvFlavor(self.flavor))
        lam = float(self.lam)
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        if self.functional is Functional.ONE_LAPLACIAN and lam != 1.0:
            raise ValueError("the 1-Laplacian problem carries no lambda; lam must be 1")
        if self.functional is Functional.MEAN_CURVATURE and self.flavor is not TvFlavor.ISOTROPIC:
            raise ValueError("the area functional uses the Euclidean gradient; flavor must be isotropic")
        object.__setattr__(self, "lam", lam)

    @property
    def is_mean_curvature(self) -> bool:
        return self.functional is Functional.MEAN_CURVATURE

    def phi0(self) -> float:
        """Energy of the zero field: 0, or |Omega| for the area functional."""
        return self.domain.area() if self.is_mean_curvature else 0.0

    def with_lambda(self, lam: float) -> "ProblemSpec":
        return ProblemSpec(self.functional, self.nl, self.domain, self.flavor, lam)

    def to_dict(self) -> dict:
        return {
            "functional": self.functional.value,
            "lambda": self.lam,
            "flavor": self.flavor.value,
            "nonlinearity": self.nl.to_dict(),
            "grid": {"nx": self.domain.nx, "ny": self.domain.ny, "h": self.domain.h},
        }


# ----------------------------------------------------------------------
# array-level kernels
def _principal(spec: ProblemSpec, a: np.ndarray) -> float:
    if spec.is_mean_curvature:
        return _i0_tilde(spec.domain, a)
    return _i0(spec.domain, a, spec.flavor)


def _phi(spec: ProblemSpec, a: np.ndarray) -> float:
    dom = spec.domain
    return _principal(spec, a) - spec.lam * dom.cell_area * float(np.sum(spec.nl.F(a)))


def _principal_ray(spec: ProblemSpec, a: np.ndarray, s: float = 1.0) -> float:
    """``I0'(s a) a`` for the principal part of the problem."""
    if spec.is_mean_curvature:
        return _i0_tilde_ray(spec.domain, a, s)
    return _i0(spec.domain, a, spec.flavor)


class _Ray:
    """Cached evaluator of ``gamma`` and ``g`` along one direction."""

    def __init__(self, spec: ProblemSpec, w: np.ndarray):
        self.spec = spec
        self.w = w
        dom = spec.domain
        self.area_w = dom.cell_area
        if spec.is_mean_curvature:
            self.g2 = _grad_sq(dom, w)
            self.trace = _trace(dom, w)
        else:
            self.i0w = _i0(dom, w, spec.flavor)

    def principal_deriv(self, t: float) -> float:
        if self.spec.is_mean_curvature:
            return _i0_tilde_ray(self.spec.domain, self.w, t, self.g2, self.trace)
        return self.i0w

    def nonlinear_deriv(self, t: float) -> float:
        return self.area_w * float(np.sum(self.spec.nl.f(t * self.w) * self.w))

    def g(self, t: float) -> float:
        return self.principal_deriv(t) - self.spec.lam * self.nonlinear_deriv(t)

    def gamma(self, t: float) -> float:
        return _phi(self.spec, t * self.w)


# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class FiberingMap:
    spec: ProblemSpec
    w: ScalarField

    def __post_init__(self):
        if self.w.domain != self.spec.domain:
            raise ValueError("direction lives on a different grid than the problem")
        if self.w.is_zero():
            raise ZeroDirection("fibering direction must not vanish identically")

    def _ray(self) -> _Ray:
        return _Ray(self.spec, self.w.values)


@dataclass(frozen=True)
class NehariRoot:
    t_w: float
    residual: float
    bracket: tuple[float, float]
    iterations: int

    def to_dict(self) -> dict:
        return {"t_w": self.t_w, "residual": self.residual,
                "bracket": list(self.bracket), "iterations": self.iterations}


def phi(spec: ProblemSpec, u: ScalarField) -> float:
    """Energy ``i0(u) - I(u)`` or ``i0_tilde(u) - lam*I(u)``."""
    return _phi(spec, u.values)


def gamma(fib: FiberingMap, t: float) -> float:
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return _phi(fib.spec, t * fib.w.values)


def g_deriv(fib: FiberingMap, t: float) -> float:
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    return fib._ray().g(t)


def _bracket(ray: _Ray) -> tuple[float, float, float, float, int]:
    """Return ``(t_lo, t_hi, g_lo, g_hi, evaluations)`` with g_lo > 0 > g_hi."""
    g = ray.g
    n = 1
    t_lo = t_hi = 1.0
    g_lo = g_hi = g(1.0)
    if g_lo <= 0:
        for _ in range(MAX_BRACKET_STEPS):
            t_lo *= 0.5
            g_lo = g(t_lo)
            n += 1
            if g_lo > 0:
                break
            t_hi, g_hi = t_lo, g_lo
        else:
            t_lo, g_lo, extra = _scan_up(ray)
            n += extra
            t_hi, g_hi = t_lo, g_lo
    if g_hi >= 0:
        for _ in range(MAX_BRACKET_STEPS):
            t_hi *= 2.0
            g_hi = g(t_hi)
            n += 1
            if g_hi < 0:
                break
            if g_hi > 0:
                t_lo, g_lo = t_hi, g_hi
        else:
            raise BracketFailureHigh(
                f"g(t) still nonnegative at t = 2^{MAX_BRACKET_STEPS}; is F superlinear?")
    return t_lo, t_hi, g_lo, g_hi, n


def _scan_up(ray: _Ray) -> tuple[float, float, int]:
    """Smallest dyadic t with g(t) > 0, for rays whose g vanishes at 0+.

    Happens for the area functional along directions with zero boundary
    trace: g dips below zero first and may come back up only for small lambda.
    """
    n = 0
    for k in range(-MAX_BRACKET_STEPS, MAX_BRACKET_STEPS + 1):
        t = 2.0 ** k
        gt = ray.g(t)
        n += 1
        if gt > 0:
            return t, gt, n
    raise BracketFailureLow(
        "g(t) never positive on t = 2^k, |k| <= 200: the ray has no mountain-pass "
        "geometry (lambda too large for this direction?)")


def _project(ray: _Ray, tol_root: float = 1e-10) -> NehariRoot:
    t_lo, t_hi, g_lo, g_hi, n = _bracket(ray)
    bracket = (t_lo, t_hi)
    while t_hi - t_lo > tol_root * t_lo:
        mid = 0.5 * (t_lo + t_hi)
        if mid <= t_lo or mid >= t_hi:
            break
        gm = ray.g(mid)
        n += 1
        if gm > 0:
            t_lo = mid
        elif gm < 0:
            t_hi = mid
        else:
            t_lo = t_hi = mid
            break
    t_w = 0.5 * (t_lo + t_hi)
    return NehariRoot(t_w, abs(ray.g(t_w)), bracket, n)


def nehari_project(fib: FiberingMap, tol_root: float = 1e-10) -> NehariRoot:
    """Locate ``t_w`` with ``t_w * w`` on the Nehari set by bracketed bisection.

    The bracket starts at ``t = 1``; ``t_lo`` is halved until ``g > 0`` and
    ``t_hi`` doubled until ``g < 0`` (200 steps each).  Bisection stops when
    ``t_hi - t_lo <= tol_root * t_lo``; ``tol_root = 0`` bisects to machine
    precision.

    Raises
    ------
    ZeroDirection, BracketFailureLow, BracketFailureHigh
    """
    return _project(fib._ray(), tol_root)


def nehari_residual(spec: ProblemSpec, u: ScalarField) -> float:
    """``|I0'(u)u - lam*I'(u)u| / max(1, I0'(u)u)``."""
    if u.is_zero():
        raise ZeroDirection("the Nehari residual is undefined at u = 0")
    return _nehari_residual(spec, u.values)


def _nehari_residual(spec: ProblemSpec, a: np.ndarray) -> float:
    lead = _principal_ray(spec, a, 1.0)
    rhs = spec.lam * spec.domain.cell_area * float(np.sum(spec.nl.f(a) * a))
    return abs(lead - rhs) / max(1.0, lead)


def count_sign_changes(fib: FiberingMap, exponents=range(-20, 21)) -> int:
    """Sign changes of g along the dyadic sweep ``t = 2^k`` (zeros skipped)."""
    ray = fib._ray()
    signs = [np.sign(ray.g(2.0 ** k)) for k in exponents]
    signs = [s for s in signs if s != 0]
    return int(sum(1 for a, b in zip(signs, signs[1:]) if a != b))
