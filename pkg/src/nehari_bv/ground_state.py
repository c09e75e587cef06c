"""Ground states: minimizers of the energy over the Nehari set.

The solver works on the reduced functional

    psi(w) = Phi(t_w * w),    ||w|| = 1,

which is the fibering maximum along the ray through ``w``.  Each restart
draws a Gaussian direction, runs a smoothed descent on ``psi`` through a
decreasing schedule of smoothing levels and then refines the result on the
unsmoothed functional:

* 1-Laplacian: nonlinear inverse-power iterations.  Each step maximizes the
  linear form ``<h^2 f(u), v>`` over the unit ball of the BV norm (a small
  second-order cone program).  Because ``I`` is convex, every step lowers
  ``psi``, and a fixed point is exactly a critical point.
* mean curvature: a modified Newton method on the smooth part of ``Phi``,
  kept on the Nehari set and monotone in the energy.

Smoothing levels are measured at the scale of the unit-norm direction: the
field ``u = t_w w`` is smoothed with ``eps * t_w``.  This keeps the schedule
meaningful no matter how large the Nehari amplitude is.
"""

from __future__ import annotations

import functools
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.optimize import minimize

from .bv_calculus import DiscreteDomain, ScalarField, TvFlavor, _i0
from .errors import (
    AllRestartsFailed,
    AuditFailed,
    BracketFailureHigh,
    BracketFailureLow,
    ZeroDirection,
)
from .fibering import (
    Functional,
    ProblemSpec,
    _nehari_residual,
    _phi,
    _project,
    _Ray,
    count_sign_changes,
    FiberingMap,
)
from .nonlinearity import audit
from .verification import CriticalityReport, certify

DEFAULT_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
_BRACKET_ERRORS = (BracketFailureLow, BracketFailureHigh)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of :func:`solve`.

    ``step`` is the length of the first trial step of each stage relative to
    ``max|w| / max|d|``; later trial steps come from the quasi-Newton model.
    A stage ends when a step lowers ``psi`` by less than ``stop_tol``
    (relative) or after ``max_iter`` accepted steps.
    """

    restarts: int = 16
    seed: int = 0
    eps_schedule: tuple[float, ...] = DEFAULT_SCHEDULE
    step: float = 0.05
    backtrack: float = 0.5
    max_iter: int = 300
    stop_tol: float = 1e-12
    memory: int = 10
    tol_root: float = 1e-10
    refine: bool = True
    refine_iter: int = 200
    refine_tol: float = 1e-10
    n_probes: int = 512
    workers: int = 1

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_schedule)
        object.__setattr__(self, "eps_schedule", eps)
        if int(self.restarts) < 1:
            raise ValueError("restarts must be at least 1")
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("smoothing levels must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("smoothing schedule must be strictly decreasing")
        if eps[-1] >= 1e-5:
            raise ValueError("smoothing schedule must end below 1e-5")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if self.step <= 0 or self.max_iter < 1 or self.memory < 0:
            raise ValueError("step must be positive, max_iter >= 1, memory >= 0")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class TraceRow:
    restart: int
    stage: str
    eps: float
    iteration: int
    psi: float


@dataclass(frozen=True, eq=False)
class GroundStateResult:
    u_star: ScalarField
    energy: float
    nehari_residual: float
    t_w: float
    best_restart: int
    restart_energies: tuple[float, ...]
    certificate: CriticalityReport
    trace: tuple[TraceRow, ...] = field(repr=False)
    failures: dict = field(default_factory=dict)

    def summary(self) -> dict:
        finite = [e for e in self.restart_energies if math.isfinite(e)]
        return {
            "energy": self.energy,
            "nehari_residual": self.nehari_residual,
            "t_w": self.t_w,
            "best_restart": self.best_restart,
            "restart_energies": [e if math.isfinite(e) else None for e in self.restart_energies],
            "top_half_spread": top_half_spread(finite) if finite else None,
            "failures": {str(k): v for k, v in self.failures.items()},
            "certificate": self.certificate.to_dict(),
        }


def top_half_spread(energies) -> float:
    """Relative spread ``(max - min) / min`` over the best half of the energies."""
    e = np.sort(np.asarray(list(energies), dtype=float))
    top = e[: max(1, (len(e) + 1) // 2)]
    return float((top[-1] - top[0]) / abs(top[0]))


# ----------------------------------------------------------------------
# smoothed energy
def _soft(x, eps):
    # sqrt(eps^2 + x^2) - eps, written to avoid cancellation for |x| << eps
    x2 = x * x
    return x2 / (np.sqrt(eps * eps + x2) + eps)


def _smoothed(spec: ProblemSpec, a: np.ndarray, eps: float, want_grad: bool = True):
    """Value (and gradient) of the smoothed energy at the cell array ``a``."""
    dom = spec.domain
    h, h2 = dom.h, dom.cell_area
    fc = dom.face_count
    gx, gy = dom.grad(a)
    lam = spec.lam
    if spec.is_mean_curvature:
        r = np.sqrt(1.0 + gx * gx + gy * gy)
        val = h2 * float(np.sum(r))
        zx, zy = gx / r, gy / r
    elif spec.flavor is TvFlavor.ANISOTROPIC:
        if eps > 0:
            val = h2 * float(np.sum(_soft(gx, eps) + _soft(gy, eps)))
            zx, zy = gx / np.sqrt(eps * eps + gx * gx), gy / np.sqrt(eps * eps + gy * gy)
        else:
            val = h2 * float(np.sum(np.abs(gx) + np.abs(gy)))
            zx, zy = np.sign(gx), np.sign(gy)
    else:
        g2 = gx * gx + gy * gy
        if eps > 0:
            val = h2 * float(np.sum(_soft(np.sqrt(g2), eps)))
            r = np.sqrt(eps * eps + g2)
        else:
            r = np.sqrt(g2)
            val = h2 * float(np.sum(r))
            r = np.where(r > 0, r, np.inf)
        zx, zy = gx / r, gy / r
    if eps > 0:
        val += h * float(np.sum(fc * _soft(a, eps)))
        tr_grad = a / np.sqrt(eps * eps + a * a)
    else:
        val += h * float(np.sum(fc * np.abs(a)))
        tr_grad = np.sign(a)
    val -= lam * h2 * float(np.sum(spec.nl.F(a)))
    if not want_grad:
        return val
    grad = h2 * dom.grad_adjoint(zx, zy) + h * fc * tr_grad - lam * h2 * spec.nl.f(a)
    return val, grad


def smoothed_phi(spec: ProblemSpec, u: ScalarField, eps: float) -> float:
    """Energy with every kink replaced by ``sqrt(eps^2 + x^2) - eps``.

    Applies to the gradient magnitude in the total variation (each component
    separately for the anisotropic flavor) and to ``|u|`` in the trace term.
    The area integrand is already smooth and is left alone.  Equals
    :func:`~nehari_bv.fibering.phi` at ``eps = 0``, is nonincreasing in
    ``eps``, and differs from it by at most ``eps * (|Omega| + perimeter)``
    (``eps * (2|Omega| + perimeter)`` for the anisotropic flavor).
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if u.domain != spec.domain:
        raise ValueError("field and problem live on different grids")
    if eps == 0:
        return _phi(spec, u.values)
    return _smoothed(spec, u.values, float(eps), want_grad=False)


def _normalize(spec: ProblemSpec, w: np.ndarray) -> np.ndarray:
    n = _i0(spec.domain, w, spec.flavor)
    if not n > 0:
        raise ZeroDirection("direction has zero BV norm")
    return w / n


def reduced_objective(spec: ProblemSpec, w: ScalarField, eps: float = 0.0,
                      tol_root: float = 1e-10) -> tuple[float, float]:
    """``(psi, t_w)`` for the direction ``w`` rescaled to unit BV norm.

    ``t_w`` comes from the unsmoothed fibering derivative; ``psi`` is the
    smoothed energy of ``t_w w`` at level ``eps * t_w`` (so ``eps`` is read at
    the scale of the unit direction).  Invariant under ``w -> c w``, ``c > 0``.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if w.is_zero():
        raise ZeroDirection("reduced objective needs a nonzero direction")
    wn = _normalize(spec, w.values)
    root = _project(_Ray(spec, wn), tol_root)
    u = root.t_w * wn
    if eps == 0:
        return _phi(spec, u), root.t_w
    return _smoothed(spec, u, eps * root.t_w, want_grad=False), root.t_w


# ----------------------------------------------------------------------
# descent
class _Reduced:
    """psi and its tangential gradient at one smoothing level."""

    def __init__(self, spec: ProblemSpec, eps: float, tol_root: float):
        self.spec, self.eps, self.tol_root = spec, eps, tol_root

    def __call__(self, w: np.ndarray):
        w = _normalize(self.spec, w)
        t = _project(_Ray(self.spec, w), self.tol_root).t_w
        val, g = _smoothed(self.spec, t * w, self.eps * t)
        d = t * g
        d -= (np.sum(d * w) / np.sum(w * w)) * w
        return val, w, d


def _two_loop(d, pairs, fallback_scale):
    q = d.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.sum(s * q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= np.sum(s * y) / np.sum(y * y)
    else:
        q *= fallback_scale
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.sum(y * q)
        q += (a - b) * s
    return q


def _descend(spec: ProblemSpec, w: np.ndarray, cfg: SolverConfig, restart: int):
    """Projected quasi-Newton descent on psi through the smoothing schedule."""
    rows: list[TraceRow] = []
    for eps in cfg.eps_schedule:
        f = _Reduced(spec, eps, cfg.tol_root)
        psi, w, d = f(w)
        rows.append(TraceRow(restart, "descent", eps, 0, psi))
        pairs: list = []
        for it in range(1, cfg.max_iter + 1):
            scale = cfg.step * np.max(np.abs(w)) / max(np.max(np.abs(d)), 1e-300)
            step = _two_loop(d, pairs, scale)
            slope = np.sum(step * d)
            if not slope > 0:
                pairs, step, slope = [], scale * d, scale * np.sum(d * d)
            alpha, accepted = 1.0, None
            for _ in range(60):
                trial = w - alpha * step
                if np.any(trial):
                    try:
                        cand = f(trial)
                    except _BRACKET_ERRORS:
                        cand = None
                    if cand is not None and cand[0] < psi - 1e-4 * alpha * slope:
                        accepted = cand
                        break
                alpha *= cfg.backtrack
            if accepted is None:
                if pairs:
                    pairs = []
                    continue
                break
            psi_new, w_new, d_new = accepted
            s, y = w_new - w, d_new - d
            sy = np.sum(s * y)
            if sy > 1e-300:
                pairs.append((s, y, 1.0 / sy))
                if len(pairs) > cfg.memory:
                    pairs.pop(0)
            drop = psi - psi_new
            w, d, psi = w_new, d_new, psi_new
            rows.append(TraceRow(restart, "descent", eps, it, psi))
            if drop <= cfg.stop_tol * abs(psi):
                break
    return w, rows


# ----------------------------------------------------------------------
# refinement, 1-Laplacian: nonlinear inverse power iterations
@functools.lru_cache(maxsize=8)
def _ball_problem(domain: DiscreteDomain, flavor: TvFlavor):
    import cvxpy as cp

    gx, gy = domain.grad_matrices
    n = domain.n_cells
    v = cp.Variable(n)
    q = cp.Parameter(n)
    h, h2 = domain.h, domain.cell_area
    fc = domain.face_count.ravel()
    if flavor is TvFlavor.ANISOTROPIC:
        tv = h2 * (cp.norm1(gx @ v) + cp.norm1(gy @ v))
    else:
        tv = h2 * cp.sum(cp.norm(cp.vstack([gx @ v, gy @ v]), 2, axis=0))
    trace = h * (fc @ cp.abs(v))
    prob = cp.Problem(cp.Maximize(q @ v), [tv + trace <= 1])
    # The first solve compiles the problem and rounds differently from the
    # cached path used afterwards; spend it here so every caller sees the
    # same arithmetic.
    q.value = np.ones(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        try:
            prob.solve(solver=cp.CLARABEL, **_CLARABEL)
        except cp.error.SolverError:
            pass
    return prob, v, q


_CLARABEL = dict(tol_gap_abs=1e-13, tol_gap_rel=1e-13, tol_feas=1e-13,
                 tol_ktratio=1e-10, max_iter=400)


def dual_norm_maximizer(spec: ProblemSpec, q: np.ndarray) -> tuple[float, np.ndarray]:
    """``max <q, v>`` over ``||v|| <= 1`` and a maximizer (exact conic solve)."""
    import cvxpy as cp

    prob, v, qp = _ball_problem(spec.domain, spec.flavor)
    qp.value = np.asarray(q, dtype=float).ravel()
    with warnings.catch_warnings():
        # "solution may be inaccurate" at the tight tolerances; the iterate
        # is still accepted only if it lowers psi
        warnings.simplefilter("ignore", UserWarning)
        try:
            prob.solve(solver=cp.CLARABEL, **_CLARABEL)
        except cp.error.SolverError:
            prob.solve(solver=cp.CLARABEL)
    if v.value is None:
        raise RuntimeError(f"conic solve failed with status {prob.status}")
    return float(prob.value), v.value.reshape(spec.domain.shape)


def _power_refine(spec: ProblemSpec, w: np.ndarray, cfg: SolverConfig, restart: int):
    rows = []
    h2 = spec.domain.cell_area
    w = _normalize(spec, w)
    t = _project(_Ray(spec, w), cfg.tol_root).t_w
    psi = _phi(spec, t * w)
    rows.append(TraceRow(restart, "refine", 0.0, 0, psi))
    for it in range(1, cfg.refine_iter + 1):
        _, v = dual_norm_maximizer(spec, h2 * spec.nl.f(t * w))
        if not np.any(v):
            break
        v = _normalize(spec, v)
        tv_ = _project(_Ray(spec, v), cfg.tol_root).t_w
        psi_v = _phi(spec, tv_ * v)
        if psi_v > psi + 1e-13 * abs(psi):
            break
        change = np.max(np.abs(v - w)) / np.max(np.abs(w))
        w, t, psi = v, tv_, min(psi, psi_v)
        rows.append(TraceRow(restart, "refine", 0.0, it, psi_v))
        if change <= cfg.refine_tol:
            break
    return w, rows


# ----------------------------------------------------------------------
# refinement, mean curvature: Newton on the smooth part
DENSE_NEWTON_MAX_CELLS = 4096


def _mc_newton(spec: ProblemSpec, w: np.ndarray, cfg: SolverConfig, restart: int):
    """Energy-decreasing Newton iteration on the Nehari set for the area functional.

    The smooth part ``S`` (area minus ``lam * I``) is handled by a modified
    Newton step: its Hessian is restricted to the cells that are free to move,
    the radial direction is projected out and replaced by a positive term, and
    a Levenberg shift is added until a Cholesky factorization succeeds.  The
    trace term ``h * faces * |u|`` enters through the minimum-norm
    subgradient, and steps are clipped to the current orthant so that cells
    reach zero exactly.  Every trial point is pushed back onto its ray
    maximum and accepted by an Armijo test on the energy, so the iteration
    cannot climb to a different critical point.
    """
    dom = spec.domain
    h2 = dom.cell_area
    w = _normalize(spec, w)
    u = (_project(_Ray(spec, w), 0.0).t_w * w).ravel()
    energy = _phi(spec, u.reshape(dom.shape))
    rows = [TraceRow(restart, "refine", 0.0, 0, energy)]
    if spec.nl.fprime is None or u.size > DENSE_NEWTON_MAX_CELLS:
        return u.reshape(dom.shape), rows
    gx_m, gy_m = dom.grad_matrices
    thr = dom.h * dom.face_count.ravel()
    nl, lam = spec.nl, spec.lam

    def onto_ray(x):
        x = x.reshape(dom.shape)
        return (_project(_Ray(spec, x), 0.0).t_w * x).ravel()

    def derivatives(x):
        gx, gy = gx_m @ x, gy_m @ x
        r = np.sqrt(1.0 + gx * gx + gy * gy)
        grad = h2 * (gx_m.T @ (gx / r) + gy_m.T @ (gy / r)) - lam * h2 * nl.f(x)
        r3 = r**3
        a11 = sparse.diags((1.0 + gy * gy) / r3)
        a22 = sparse.diags((1.0 + gx * gx) / r3)
        a12 = sparse.diags(-gx * gy / r3)
        hs = h2 * (gx_m.T @ a11 @ gx_m + gy_m.T @ a22 @ gy_m + gx_m.T @ a12 @ gy_m + gy_m.T @ a12 @ gx_m)
        return grad, (hs - lam * h2 * sparse.diags(nl.fprime(x))).toarray()

    for it in range(1, cfg.refine_iter + 1):
        grad, hess = derivatives(u)
        sub = np.where(u != 0, grad + thr * np.sign(u), np.sign(grad) * np.maximum(np.abs(grad) - thr, 0.0))
        if np.max(np.abs(sub)) <= cfg.refine_tol * h2:
            break
        free = np.flatnonzero((u != 0) | (sub != 0))
        radial = u[free] / np.linalg.norm(u[free])
        hf = hess[np.ix_(free, free)]
        proj = np.eye(free.size) - np.outer(radial, radial)
        scale = float(np.max(np.abs(np.diag(hf))))
        ht = proj @ hf @ proj + scale * np.outer(radial, radial)
        shift = 0.0
        while True:
            try:
                factor = linalg.cho_factor(ht + shift * np.eye(free.size))
                break
            except linalg.LinAlgError:
                shift = max(2.0 * shift, 1e-10 * scale)
        step = np.zeros_like(u)
        step[free] = -linalg.cho_solve(factor, proj @ sub[free])
        orthant = np.where(u != 0, np.sign(u), -np.sign(sub))
        slope = float(sub @ step)
        alpha, accepted = 1.0, False
        while alpha > 1e-12:
            trial = u + alpha * step
            trial = onto_ray(np.where(np.sign(trial) == orthant, trial, 0.0))
            e_trial = _phi(spec, trial.reshape(dom.shape))
            if e_trial <= energy + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        u, energy = trial, e_trial
        rows.append(TraceRow(restart, "refine", 0.0, it, energy))
    return u.reshape(dom.shape), rows


# ----------------------------------------------------------------------
def restart_direction(domain: DiscreteDomain, seed: int, restart: int) -> np.ndarray:
    """Gaussian direction for one restart; independent of the order of restarts."""
    rng = np.random.default_rng([int(seed), int(restart)])
    return rng.standard_normal(domain.shape)


def _run_restart(spec: ProblemSpec, cfg: SolverConfig, k: int):
    t0 = time.perf_counter()
    try:
        w = restart_direction(spec.domain, cfg.seed, k)
        w, rows = _descend(spec, w, cfg, k)
        if cfg.refine:
            if spec.is_mean_curvature:
                w_ref, more = _mc_newton(spec, w, cfg, k)
            else:
                w_ref, more = _power_refine(spec, w, cfg, k)
            # Newton may wander off to another critical point; keep the
            # refined field only if it does not raise the energy
            if np.any(w_ref) and reduced_objective(spec, ScalarField(spec.domain, w_ref))[0] \
                    <= reduced_objective(spec, ScalarField(spec.domain, w))[0] * (1 + 1e-9):
                w = w_ref
            rows += more
        w = _normalize(spec, w)
        root = _project(_Ray(spec, w), cfg.tol_root)
        energy = _phi(spec, root.t_w * w)
        return k, energy, w, rows, None, time.perf_counter() - t0
    except _BRACKET_ERRORS as exc:
        return k, math.inf, None, [], f"{type(exc).__name__}: {exc}", time.perf_counter() - t0


def solve(spec: ProblemSpec, cfg: SolverConfig | None = None, *, check_audit: bool = True) -> GroundStateResult:
    """Multi-start minimization of the energy over the Nehari set.

    Deterministic for a fixed ``(spec, cfg)``: restart ``k`` draws its
    direction from ``default_rng([seed, k])`` and the best restart is chosen
    by ``(energy, k)``, so ``cfg.workers`` does not change the answer.

    Raises
    ------
    AuditFailed
        the nonlinearity fails one of the structural checks.
    AllRestartsFailed
        every restart hit a bracketing failure (``lambda`` too large for the
        area functional, typically).
    """
    cfg = cfg or SolverConfig()
    if check_audit:
        report = audit(spec.nl)
        if not report.passed:
            raise AuditFailed(f"nonlinearity fails {', '.join(report.failures())}", report)
    ks = range(cfg.restarts)
    # user callables cannot cross process boundaries; run those restarts here
    if cfg.workers > 1 and cfg.restarts > 1 and spec.nl.picklable:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            out = list(ex.map(_run_restart, [spec] * len(ks), [cfg] * len(ks), ks))
    else:
        out = [_run_restart(spec, cfg, k) for k in ks]
    out.sort(key=lambda r: r[0])
    failures = {k: msg for k, _, _, _, msg, _ in out if msg is not None}
    ok = [r for r in out if r[4] is None]
    if not ok:
        raise AllRestartsFailed(f"all {cfg.restarts} restarts failed: {next(iter(failures.values()))}")
    k_best, energy, w, _, _, _ = min(ok, key=lambda r: (r[1], r[0]))
    root = _project(_Ray(spec, w), cfg.tol_root)
    u = ScalarField(spec.domain, root.t_w * w)
    trace = tuple(row for r in out for row in r[3])
    cert = certify(spec, u, n_probes=cfg.n_probes, seed=cfg.seed)
    return GroundStateResult(
        u_star=u,
        energy=energy,
        nehari_residual=_nehari_residual(spec, u.values),
        t_w=root.t_w,
        best_restart=k_best,
        restart_energies=tuple(r[1] for r in out),
        certificate=cert,
        trace=trace,
        failures=failures,
    )


# ----------------------------------------------------------------------
# probes and diagnostics
@dataclass(frozen=True)
class ProbeSummary:
    psi: np.ndarray
    norms: np.ndarray
    failures: int


def nehari_probes(spec: ProblemSpec, n: int = 100, seed: int = 1, tol_root: float = 1e-10) -> ProbeSummary:
    """``psi`` and ``||t_w w||`` for ``n`` fresh Gaussian directions."""
    rng = np.random.default_rng([int(seed), 0xB0B])
    psi, norms, bad = [], [], 0
    for _ in range(n):
        w = _normalize(spec, rng.standard_normal(spec.domain.shape))
        try:
            t = _project(_Ray(spec, w), tol_root).t_w
        except _BRACKET_ERRORS:
            bad += 1
            continue
        psi.append(_phi(spec, t * w))
        norms.append(t)  # ||w|| = 1
    return ProbeSummary(np.array(psi), np.array(norms), bad)


def sphere_level(spec: ProblemSpec, rho: float, n: int = 100, seed: int = 2) -> float:
    """Smallest energy seen on the sphere ``||u|| = rho`` over Gaussian probes."""
    rng = np.random.default_rng([int(seed), 0x5F])
    vals = [_phi(spec, rho * _normalize(spec, rng.standard_normal(spec.domain.shape))) for _ in range(n)]
    return float(min(vals))


def _zero_trace_bump(domain: DiscreteDomain) -> np.ndarray:
    x = (np.arange(domain.nx) + 0.5) / domain.nx
    y = (np.arange(domain.ny) + 0.5) / domain.ny
    b = np.outer(np.sin(np.pi * x), np.sin(np.pi * y))
    b[domain.boundary_mask] = 0.0
    return b


@dataclass(frozen=True)
class LambdaChoice:
    lam: float
    halvings: int
    log: tuple[dict, ...]


def select_lambda(spec: ProblemSpec, lam0: float = 1.0, n_probes: int = 16, seed: int = 3,
                  max_halvings: int = 60) -> LambdaChoice:
    """Halve ``lambda`` from ``lam0`` until the area problem has mountain-pass rays.

    A value is accepted when every probe direction brackets, its fibering
    maximum exceeds ``Phi(0) = |Omega|``, and Gaussian probes show exactly one
    sign change of ``g``.  The probes are Gaussian fields plus one bump that
    vanishes on the boundary cells.
    """
    if not spec.is_mean_curvature:
        raise ValueError("lambda selection applies to the mean-curvature problem")
    rng = np.random.default_rng([int(seed), 0x1A])
    dirs = [rng.standard_normal(spec.domain.shape) for _ in range(n_probes)]
    bump = _zero_trace_bump(spec.domain)
    if np.any(bump):
        dirs.append(bump)
    log = []
    lam = float(lam0)
    for k in range(max_halvings + 1):
        s = spec.with_lambda(lam)
        ok, why = True, ""
        for i, w in enumerate(dirs):
            w = _normalize(s, w)
            try:
                t = _project(_Ray(s, w), 1e-12).t_w
            except _BRACKET_ERRORS as exc:
                ok, why = False, f"probe {i}: {type(exc).__name__}"
                break
            if not _phi(s, t * w) > s.phi0():
                ok, why = False, f"probe {i}: fibering maximum below Phi(0)"
                break
            if i < n_probes and count_sign_changes(FiberingMap(s, ScalarField(s.domain, w))) != 1:
                ok, why = False, f"probe {i}: fibering derivative changes sign more than once"
                break
        log.append({"lambda": lam, "accepted": ok, "reason": why})
        if ok:
            return LambdaChoice(lam, k, tuple(log))
        lam *= 0.5
    raise BracketFailureLow(f"no admissible lambda after {max_halvings} halvings from {lam0}")


# ----------------------------------------------------------------------
# p-continuation surrogate
@dataclass(frozen=True, eq=False)
class ContinuationPoint:
    p: float
    energy: float | None
    field: ScalarField | None
    status: str

    def to_dict(self) -> dict:
        return {"p": self.p, "energy": self.energy, "status": self.status}


class _SurrogateRay:
    """Ray derivative of the p-homogeneous surrogate, duck-typed for ``_project``."""

    def __init__(self, spec: ProblemSpec, w: np.ndarray, r: float):
        dom = spec.domain
        self.spec, self.w, self.r = spec, w, r
        gx, gy = dom.grad(w)
        self.A = dom.cell_area * float(np.sum((gx * gx + gy * gy) ** (r / 2))) \
            + dom.h * float(np.sum(dom.face_count * np.abs(w) ** r))
        if not self.A > 0:
            raise ZeroDirection("surrogate ray needs a nonzero direction")

    def g(self, t):
        return t ** (self.r - 1) * self.A - self.spec.lam * self.spec.domain.cell_area * float(
            np.sum(self.spec.nl.f(t * self.w) * self.w))


def _surrogate_parts(spec: ProblemSpec, a: np.ndarray, r: float):
    """Surrogate energy and its gradient at the cell array ``a``."""
    dom = spec.domain
    h, h2 = dom.h, dom.cell_area
    gx, gy = dom.grad(a)
    g2 = gx * gx + gy * gy
    fc = dom.face_count
    aa = np.abs(a)
    val = (h2 * float(np.sum(g2 ** (r / 2))) + h * float(np.sum(fc * aa**r))) / r
    val -= spec.lam * h2 * float(np.sum(spec.nl.F(a)))
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(g2 > 0, g2 ** (r / 2 - 1), 0.0)
        ta = np.where(aa > 0, aa ** (r - 1), 0.0) * np.sign(a)
    grad = h2 * dom.grad_adjoint(m * gx, m * gy) + h * fc * ta - spec.lam * h2 * spec.nl.f(a)
    return val, grad


def p_continuation(spec: ProblemSpec, p_list, cfg: SolverConfig | None = None,
                   reference_energy: float | None = None) -> list[ContinuationPoint]:
    """Ground-state energies of the ``|grad u|^p`` surrogate along ``p_list``.

    The total variation and the trace are replaced by
    ``(1/p) (h^2 sum |grad u|^p + h sum_faces |u|^p)``.  The surrogate is
    ``p``-homogeneous and smooth, so along a ray the fibering derivative is
    ``t^(p-1) A(w) - h^2 sum f(t w) w`` (closed form ``t_w = (A/B)^(1/(q-p))``
    for a Power nonlinearity of exponent ``q``).  A mountain pass needs
    ``p`` below the growth exponent of ``f``; other values are reported with
    status ``"skipped"``.  Each value is warm-started from the previous
    minimizer with one fresh Gaussian start as a competitor, and minimized by
    L-BFGS using the envelope gradient ``t_w * grad E(t_w w)``.
    """
    p_list = [float(p) for p in p_list]
    if not p_list:
        return []
    if spec.functional is not Functional.ONE_LAPLACIAN:
        raise ValueError("p-continuation is defined for the 1-Laplacian problem")
    if any(b >= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError("p_list must be strictly decreasing")
    if any(not 1 < p <= 2 for p in p_list):
        raise ValueError("continuation exponents must lie in (1, 2]")
    cfg = cfg or SolverConfig()
    shape = spec.domain.shape
    out: list[ContinuationPoint] = []
    warm = None
    for i, r in enumerate(p_list):
        if r >= spec.nl.p:
            out.append(ContinuationPoint(r, None, None, f"skipped: needs p < {spec.nl.p:g}"))
            continue

        def objective(x):
            w = x.reshape(shape)
            t = _project(_SurrogateRay(spec, w, r), cfg.tol_root).t_w
            val, g = _surrogate_parts(spec, t * w, r)
            return val, (t * g).ravel()

        starts = [restart_direction(spec.domain, cfg.seed, 1000 + i)]
        if warm is not None:
            starts.insert(0, warm)
        best = None
        for x0 in starts:
            x0 = x0 / np.max(np.abs(x0))
            res = minimize(objective, x0.ravel(), jac=True, method="L-BFGS-B",
                           options={"maxiter": 3000, "ftol": 1e-14, "gtol": 1e-12})
            w = res.x.reshape(shape)
            t = _project(_SurrogateRay(spec, w, r), cfg.tol_root).t_w
            e = _surrogate_parts(spec, t * w, r)[0]
            if best is None or e < best[0]:
                best = (e, w, t)
        e, w, t = best
        warm = w
        status = "ok" if reference_energy is None else f"ok; ratio to reference {e / reference_energy:.4f}"
        out.append(ContinuationPoint(r, e, ScalarField(spec.domain, t * w), status))
    return out
