"""Criticality certificates for computed solutions.

Three independent checks:

* sampled subdifferential slacks ``P(v) - P(u) - lam h^2 <f(u), v - u>``
  where ``P`` is the convex principal part (BV norm or area functional);
  every slack is nonnegative at a critical point,
* the Euler-Lagrange vector field of the 1-Laplacian: a flux ``z`` with
  ``|z| <= 1`` in every cell whose discrete divergence balances ``f(u)``,
  including the boundary fluxes coming from the trace term,
* the nondegeneracy integral ``h^2 sum f'(u) u^2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .bv_calculus import ScalarField, TvFlavor, _i0, _i0_tilde, _tv
from .errors import MissingDerivative, NehariError, ZeroDirection
from .fibering import ProblemSpec
from .nonlinearity import Nonlinearity

TOL_CERT = 1e-7
TOL_EL = 1e-6


class NotConverged(NehariError):
    """The dual feasibility iteration stopped above its residual tolerance."""


@dataclass(frozen=True)
class CriticalityReport:
    subdiff_min_slack: float
    n_probes: int
    worst_probe: str
    el_residual: float | None = None
    pairing_gap: float | None = None
    nondegeneracy: float | None = None
    mc_el_residual: float | None = None
    tol_cert: float = TOL_CERT
    tol_el: float = TOL_EL
    family_min: dict = field(default_factory=dict)
    flux: "VectorFieldCertificate | None" = field(default=None, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        ok = self.subdiff_min_slack >= -self.tol_cert
        if self.el_residual is not None:
            ok = ok and self.el_residual <= self.tol_el
        return bool(ok)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "subdiff_min_slack": self.subdiff_min_slack,
            "n_probes": self.n_probes,
            "worst_probe": self.worst_probe,
            "el_residual": self.el_residual,
            "pairing_gap": self.pairing_gap,
            "nondegeneracy": self.nondegeneracy,
            "mc_el_residual": self.mc_el_residual,
            "tol_cert": self.tol_cert,
            "tol_el": self.tol_el,
            "family_min": dict(self.family_min),
            "flux": None if self.flux is None else self.flux.to_dict(),
        }


# ----------------------------------------------------------------------
# subdifferential probes
def _principal(spec: ProblemSpec, a: np.ndarray) -> float:
    if spec.is_mean_curvature:
        return _i0_tilde(spec.domain, a)
    return _i0(spec.domain, a, spec.flavor)


def _descent_direction(spec: ProblemSpec, a: np.ndarray) -> np.ndarray:
    """A (sub)gradient of the energy at ``a``; kinks contribute nothing."""
    dom = spec.domain
    gx, gy = dom.grad(a)
    if spec.is_mean_curvature:
        r = np.sqrt(1.0 + gx * gx + gy * gy)
        zx, zy = gx / r, gy / r
    elif spec.flavor is TvFlavor.ANISOTROPIC:
        zx, zy = np.sign(gx), np.sign(gy)
    else:
        r = np.hypot(gx, gy)
        r = np.where(r > 0, r, np.inf)
        zx, zy = gx / r, gy / r
    return (dom.cell_area * dom.grad_adjoint(zx, zy) + dom.h * dom.face_count * np.sign(a)
            - spec.lam * dom.cell_area * spec.nl.f(a))


def _probes(spec: ProblemSpec, a: np.ndarray, n: int, rng: np.random.Generator, exact: bool):
    """Yield ``(family, v)`` pairs; at least ``n`` of them."""
    dom = spec.domain
    scale = float(np.max(np.abs(a)))
    yield "zero", np.zeros_like(a)
    yield "double", 2.0 * a
    yield "identity", a.copy()
    count = 3
    for s in np.concatenate([np.logspace(-3, 1, 13), 1 + np.logspace(-8, -1, 4), 1 - np.logspace(-8, -1, 4)]):
        yield "scaled", s * a
        count += 1
    d = _descent_direction(spec, a)
    dmax = float(np.max(np.abs(d)))
    if dmax > 0:
        for alpha in np.logspace(-9, 0, 19):
            yield "steepest", a - alpha * scale / dmax * d
            count += 1
    if exact and not spec.is_mean_curvature:
        # the maximizer of <f(u), v> on the unit ball is the most violating
        # direction when u is not critical
        from .ground_state import dual_norm_maximizer

        try:
            _, v = dual_norm_maximizer(spec, dom.cell_area * spec.lam * spec.nl.f(a))
            nrm = _i0(dom, a, spec.flavor)
            for s in (0.5, 1.0, 2.0):
                yield "dual_norm", s * nrm * v
                yield "dual_norm", a + s * nrm * v
                count += 2
        except Exception:  # noqa: BLE001 - a failed conic solve only drops probes
            pass
    levels = np.unique(a)
    if levels.size <= 64:
        for c in levels:
            mask = a == c
            for delta in (1e-6, 1e-3, 1e-1):
                for sgn in (1.0, -1.0):
                    v = a.copy()
                    v[mask] += sgn * delta * max(scale, 1.0)
                    yield "level_set", v
                    count += 1
    n_bumps = max(n // 2, n - count - n // 4)
    for _ in range(n_bumps):
        i, j = rng.integers(dom.nx), rng.integers(dom.ny)
        amp = rng.choice([-1.0, 1.0]) * 10.0 ** rng.uniform(-6, 0) * max(scale, 1e-300)
        v = a.copy()
        v[i, j] += amp
        yield "bump", v
        count += 1
    while count < n:
        yield "gaussian", rng.standard_normal(dom.shape) * max(scale, 1.0) * rng.uniform(0.01, 2.0)
        count += 1


def subdiff_check(spec: ProblemSpec, u: ScalarField, n_probes: int = 512, seed: int = 0,
                  tol_cert: float = TOL_CERT, exact_probe: bool = True) -> CriticalityReport:
    """Minimum slack ``P(v) - P(u) - lam h^2 <f(u), v - u>`` over test fields.

    Families: ``v = 0``, ``v = 2u``, ``v = u``, scaled copies, steps along the
    negative energy gradient, the exact dual-norm maximizer (1-Laplacian),
    level-set shifts, single-cell bumps and Gaussian fields.  At least
    ``n_probes`` probes are evaluated.
    """
    if u.domain != spec.domain:
        raise ValueError("field and problem live on different grids")
    if u.is_zero():
        raise ZeroDirection("criticality is checked at a nonzero field")
    a = u.values
    h2 = spec.domain.cell_area
    q = spec.lam * h2 * spec.nl.f(a)
    p_u = _principal(spec, a)
    rng = np.random.default_rng([int(seed), 0xCE57])
    worst, worst_name, total = np.inf, "", 0
    fam: dict[str, float] = {}
    for name, v in _probes(spec, a, n_probes, rng, exact_probe):
        slack = _principal(spec, v) - p_u - float(np.sum(q * (v - a)))
        total += 1
        fam[name] = min(fam.get(name, np.inf), slack)
        if slack < worst:
            worst, worst_name = slack, name
    return CriticalityReport(float(worst), total, worst_name, tol_cert=tol_cert,
                             family_min={k: float(x) for k, x in fam.items()})


# ----------------------------------------------------------------------
# Euler-Lagrange vector field
@dataclass(frozen=True, eq=False)
class VectorFieldCertificate:
    zx: np.ndarray = field(repr=False)
    zy: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)  # outward flux per boundary face, domain.boundary_faces order
    residual_field: np.ndarray = field(repr=False)
    residual: float
    pairing: float
    tv: float
    pairing_gap: float
    max_abs_z: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("residual", "pairing", "tv", "pairing_gap", "max_abs_z", "iterations", "converged")}


def _face_matrix(domain):
    """Cell-by-face incidence for the boundary faces, as a dense index array."""
    cells = np.array([i * domain.ny + j for (i, j), _ in domain.boundary_faces])
    return cells


def _conic_flux(apply_mat, b, fx_free, fy_free, s_free, zx0, zy0, s0, flavor):
    """Exact least-squares flux by a conic solve; ``None`` if it fails."""
    try:
        import cvxpy as cp
    except ImportError:  # pragma: no cover - cvxpy is a declared dependency
        return None
    n, m = zx0.size, s0.size
    zx, zy, sg = cp.Variable(n), cp.Variable(n), cp.Variable(m)
    # empty index sets would make zero-size expressions, which cvxpy rejects
    cons = [var[~free] == val[~free] for var, free, val in
            ((sg, s_free, s0), (zx, fx_free, zx0), (zy, fy_free, zy0)) if not free.all()]
    if flavor is TvFlavor.ANISOTROPIC:
        cons += [cp.abs(zx) <= 1, cp.abs(zy) <= 1]
    else:
        cons.append(cp.norm(cp.vstack([zx, zy]), 2, axis=0) <= 1)
    if s_free.any():
        cons.append(cp.abs(sg[s_free]) <= 1)
    prob = cp.Problem(cp.Minimize(cp.norm(apply_mat @ cp.hstack([zx, zy, sg]) - b)), cons)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        return None
    if zx.value is None:
        return None
    return zx.value, zy.value, sg.value


def el_certificate(u: ScalarField, nl: Nonlinearity, max_iters: int = 5000, tol_el: float = TOL_EL,
                   flavor: TvFlavor = TvFlavor.ISOTROPIC, strict: bool = False,
                   kink_tol: float = 1e-4, warm_start: bool = True) -> VectorFieldCertificate:
    """Search for the flux field of the 1-Laplacian Euler-Lagrange system.

    Unknowns are the cell fluxes ``z`` and the boundary-face fluxes ``sigma``.
    Where ``|grad u|`` exceeds ``kink_tol * max|u| / h`` the flux is forced to
    ``grad u / |grad u|`` (per component for the anisotropic flavor); on
    faces with ``|u| > kink_tol * max|u|`` the boundary flux is ``sign(u)``.
    The remaining unknowns live in the unit disk (box) and in ``[-1, 1]``,
    and projected gradient iterations minimize

        || h^2 G^T z + h B^T sigma - h^2 f(u) ||,

    the discrete form of ``-div z = f(u)`` with the boundary condition.  The
    reported residual is that norm relative to ``||h^2 f(u)||``.  Freeing
    near-kinks is a relaxation; the pairing gap measures how far the flux
    then is from calibrating ``u``.

    With ``warm_start`` the iterations start from a conic least-squares
    solution.  Started cold they are slow on wide plateaus, where the free
    block behaves like a graph Laplacian.
    """
    dom = u.domain
    flavor = TvFlavor(flavor)
    a = u.values.ravel()
    h, h2 = dom.h, dom.cell_area
    gxm, gym = dom.grad_matrices
    gx, gy = gxm @ a, gym @ a
    scale = max(float(np.max(np.abs(a))), 1e-300)
    gtol = kink_tol * scale / h
    cells = _face_matrix(dom)
    ub = a[cells]
    b = h2 * np.asarray(nl.f(a), dtype=float)

    if flavor is TvFlavor.ANISOTROPIC:
        fx_free = np.abs(gx) <= gtol
        fy_free = np.abs(gy) <= gtol
        zx0 = np.where(fx_free, 0.0, np.sign(gx))
        zy0 = np.where(fy_free, 0.0, np.sign(gy))
    else:
        r = np.hypot(gx, gy)
        free = r <= gtol
        fx_free = fy_free = free
        rs = np.where(free, 1.0, r)
        zx0 = np.where(free, 0.0, gx / rs)
        zy0 = np.where(free, 0.0, gy / rs)
    s_free = np.abs(ub) <= kink_tol * scale
    s0 = np.where(s_free, 0.0, np.sign(ub))

    bmat = sparse.csr_matrix((np.full(cells.size, h), (cells, np.arange(cells.size))),
                             shape=(a.size, cells.size))
    amat = sparse.hstack([h2 * gxm.T, h2 * gym.T, bmat]).tocsr()
    n = a.size

    def apply(zx, zy, s):
        return amat @ np.concatenate([zx, zy, s])

    def apply_t(r_):
        y = amat.T @ r_
        return y[:n], y[n:2 * n], y[2 * n:]

    def project(zx, zy, s):
        if flavor is TvFlavor.ANISOTROPIC:
            zx = np.where(fx_free, np.clip(zx, -1, 1), zx0)
            zy = np.where(fy_free, np.clip(zy, -1, 1), zy0)
        else:
            m = np.maximum(1.0, np.hypot(zx, zy))
            zx = np.where(fx_free, zx / m, zx0)
            zy = np.where(fy_free, zy / m, zy0)
        s = np.where(s_free, np.clip(s, -1, 1), s0)
        return zx, zy, s

    bnorm = float(np.linalg.norm(b))
    denom = bnorm if bnorm > 0 else 1.0

    def residual(zx, zy, s):
        rv = apply(zx, zy, s) - b
        return rv, float(np.linalg.norm(rv)) / denom

    start = project(zx0, zy0, s0)
    any_free = fx_free.any() or fy_free.any() or s_free.any()
    if warm_start and any_free and residual(*start)[1] > tol_el * 1e-3:
        sol = _conic_flux(amat, b, fx_free, fy_free, s_free, zx0, zy0, s0, flavor)
        if sol is not None:
            start = project(*sol)
    zx, zy, s = start
    res_vec, res = residual(zx, zy, s)
    best = (res, zx, zy, s)

    # Lipschitz constant of the gradient of 0.5||A x - b||^2 on the free block
    rng = np.random.default_rng(0)
    x = rng.standard_normal(a.size)
    lip = 0.0
    for _ in range(50):
        tx, ty, ts = apply_t(x)
        y = apply(tx * fx_free, ty * fy_free, ts * s_free)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            break
        lip = nrm / max(np.linalg.norm(x), 1e-300)
        x = y / nrm
    step = 1.0 / (1.01 * lip) if lip > 0 else 0.0

    it = 0
    if step > 0 and res > tol_el * 1e-3:
        yx, yy, ys = zx, zy, s
        t = 1.0
        for it in range(1, max_iters + 1):
            gx_, gy_, gs_ = apply_t(apply(yx, yy, ys) - b)
            nx_, ny_, ns_ = project(yx - step * gx_, yy - step * gy_, ys - step * gs_)
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
            mom = (t - 1) / t_new
            yx = nx_ + mom * (nx_ - zx)
            yy = ny_ + mom * (ny_ - zy)
            ys = ns_ + mom * (ns_ - s)
            zx, zy, s, t = nx_, ny_, ns_, t_new
            if it % 50 == 0 or it == max_iters:
                _, r_it = residual(zx, zy, s)
                if r_it < best[0]:
                    best = (r_it, zx, zy, s)
                if r_it <= tol_el * 1e-3:
                    break
    res, zx, zy, s = best
    res_vec, res = residual(zx, zy, s)
    tvu = _tv(dom, u.values, flavor)
    pairing = h2 * float(np.sum(a * (gxm.T @ zx + gym.T @ zy)))
    gap = abs(pairing - tvu)
    if flavor is TvFlavor.ANISOTROPIC:
        zmax = float(max(np.max(np.abs(zx)), np.max(np.abs(zy))))
    else:
        zmax = float(np.max(np.hypot(zx, zy)))
    converged = res <= tol_el
    cert = VectorFieldCertificate(
        zx.reshape(dom.shape), zy.reshape(dom.shape), s, res_vec.reshape(dom.shape) / h2,
        res, pairing, tvu, gap, zmax, it, converged)
    if strict and not converged:
        raise NotConverged(f"flux residual {res:.3e} above {tol_el:.1e} after {it} iterations")
    return cert


def mc_el_residual(u: ScalarField, lam: float, nl: Nonlinearity) -> float:
    """``||div z + lam f(u)|| / ||lam f(u)||`` over interior cells, ``z = grad u / sqrt(1+|grad u|^2)``.

    Defined as 0 when ``lam f(u)`` vanishes on the interior and the numerator
    does too.
    """
    dom = u.domain
    gx, gy = dom.grad(u.values)
    r = np.sqrt(1.0 + gx * gx + gy * gy)
    rhs = lam * np.asarray(nl.f(u.values), dtype=float)
    res = dom.div(gx / r, gy / r) + rhs
    m = dom.interior_mask
    num = float(np.linalg.norm(res[m]))
    den = float(np.linalg.norm(rhs[m]))
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return num / den


def nondegeneracy(u: ScalarField, nl: Nonlinearity) -> float:
    """``h^2 sum f'(u) u^2``; positive at a nonzero field when ``f`` is increasing."""
    if nl.fprime is None:
        raise MissingDerivative("nondegeneracy needs f'; the nonlinearity does not provide it")
    a = u.values
    return u.domain.cell_area * float(np.sum(np.asarray(nl.fprime(a), dtype=float) * a * a))


def certify(spec: ProblemSpec, u: ScalarField, n_probes: int = 512, seed: int = 0,
            tol_cert: float = TOL_CERT, tol_el: float = TOL_EL, max_iters: int = 5000) -> CriticalityReport:
    """Full report: probes plus the Euler-Lagrange residual of the problem at hand."""
    rep = subdiff_check(spec, u, n_probes, seed, tol_cert)
    el = gap = mc = nd = cert = None
    if spec.is_mean_curvature:
        mc = mc_el_residual(u, spec.lam, spec.nl)
    else:
        cert = el_certificate(u, spec.nl, max_iters=max_iters, tol_el=tol_el, flavor=spec.flavor)
        el, gap = cert.residual, cert.pairing_gap
    if spec.nl.fprime is not None:
        nd = nondegeneracy(u, spec.nl)
    return CriticalityReport(rep.subdiff_min_slack, rep.n_probes, rep.worst_probe, el, gap, nd, mc,
                             tol_cert, tol_el, rep.family_min, cert)
