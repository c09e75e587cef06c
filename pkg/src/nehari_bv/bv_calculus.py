"""Discrete BV calculus on a rectangular grid of square cells.

Fields are piecewise constant per cell and stored as ``(nx, ny)`` arrays
indexed ``[i, j]``.  Gradients are forward differences, zero on the last
column (``gx``) and the last row (``gy``).  The Dirichlet condition is never
imposed on the cells; it enters only through the boundary trace term

    h * sum_{boundary faces} |u(adjacent cell)|,

so corner cells are counted once per boundary face they touch.

The array kernels (``_tv``, ``_trace``, ...) are used by the solver on raw
``ndarray`` values; the public functions accept :class:`ScalarField`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import DomainMismatch


class TvFlavor(str, Enum):
    ISOTROPIC = "isotropic"
    ANISOTROPIC = "anisotropic"


@dataclass(frozen=True)
class DiscreteDomain:
    """Rectangle of ``nx * ny`` square cells of side ``h``."""

    nx: int
    ny: int
    h: float

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise ValueError(f"cell counts must be positive integers, got nx={self.nx}, ny={self.ny}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"cell size h must be positive, got {self.h}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def unit_square(cls, n: int) -> "DiscreteDomain":
        return cls(n, n, 1.0 / n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    def area(self) -> float:
        # Written as (count) * (h*h) so that it matches the cell sums bit-for-bit.
        return float(self.nx * self.ny) * (self.h * self.h)

    def perimeter(self) -> float:
        return float(2 * (self.nx + self.ny)) * self.h

    @cached_property
    def boundary_faces(self) -> tuple[tuple[tuple[int, int], str], ...]:
        """Every boundary face once, as ``((i, j), side)`` with side in W/E/S/N."""
        faces = []
        for j in range(self.ny):
            faces.append(((0, j), "W"))
            faces.append(((self.nx - 1, j), "E"))
        for i in range(self.nx):
            faces.append(((i, 0), "S"))
            faces.append(((i, self.ny - 1), "N"))
        return tuple(faces)

    @cached_property
    def face_count(self) -> np.ndarray:
        """Number of boundary faces incident to each cell (0 to 4)."""
        c = np.zeros(self.shape)
        c[0, :] += 1
        c[-1, :] += 1
        c[:, 0] += 1
        c[:, -1] += 1
        c.setflags(write=False)
        return c

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = self.face_count > 0
        m.setflags(write=False)
        return m

    @cached_property
    def interior_mask(self) -> np.ndarray:
        m = ~self.boundary_mask
        m.setflags(write=False)
        return m

    # ------------------------------------------------------------------
    # linear operators on raw arrays
    def grad(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Forward-difference gradient ``(gx, gy)`` of a cell array."""
        gx = np.zeros(self.shape)
        gy = np.zeros(self.shape)
        gx[:-1, :] = (a[1:, :] - a[:-1, :]) / self.h
        gy[:, :-1] = (a[:, 1:] - a[:, :-1]) / self.h
        return gx, gy

    def grad_adjoint(self, zx: np.ndarray, zy: np.ndarray) -> np.ndarray:
        """Exact transpose of :meth:`grad` (so ``<grad a, z> = <a, grad_adjoint z>``)."""
        out = np.zeros(self.shape)
        hx = zx[:-1, :] / self.h
        out[1:, :] += hx
        out[:-1, :] -= hx
        hy = zy[:, :-1] / self.h
        out[:, 1:] += hy
        out[:, :-1] -= hy
        return out

    def div(self, zx: np.ndarray, zy: np.ndarray) -> np.ndarray:
        """Discrete divergence, the negative adjoint of the gradient."""
        return -self.grad_adjoint(zx, zy)

    @cached_property
    def grad_matrices(self) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
        """Sparse ``(Gx, Gy)`` acting on C-order flattened cell arrays."""

        def diff(n):
            d = sparse.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n)).tolil()
            d[n - 1, :] = 0.0
            return d.tocsr() / self.h

        gx = sparse.kron(diff(self.nx), sparse.identity(self.ny), format="csr")
        gy = sparse.kron(sparse.identity(self.nx), diff(self.ny), format="csr")
        return gx, gy

    def check(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape != self.shape:
            if a.size == self.n_cells and a.ndim == 1:
                return a.reshape(self.shape)
            raise ValueError(f"expected an array of shape {self.shape}, got {a.shape}")
        return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One real value per cell of ``domain``."""

    domain: DiscreteDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.domain.check(self.values), dtype=float, copy=True)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, domain: DiscreteDomain) -> "ScalarField":
        return cls(domain, np.zeros(domain.shape))

    @classmethod
    def constant(cls, domain: DiscreteDomain, c: float) -> "ScalarField":
        return cls(domain, np.full(domain.shape, float(c)))

    @classmethod
    def random(cls, domain: DiscreteDomain, rng: np.random.Generator, scale: float = 1.0) -> "ScalarField":
        return cls(domain, scale * rng.standard_normal(domain.shape))

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def _same(self, other: "ScalarField") -> None:
        if other.domain != self.domain:
            raise DomainMismatch(f"fields live on different grids: {self.domain} vs {other.domain}")

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self._same(other)
            return ScalarField(self.domain, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self._same(other)
            return ScalarField(self.domain, self.values - other.values)
        return NotImplemented

    def __mul__(self, t):
        if np.isscalar(t):
            return ScalarField(self.domain, float(t) * self.values)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.domain, -self.values)

    def __eq__(self, other):
        if not isinstance(other, ScalarField):
            return NotImplemented
        return self.domain == other.domain and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray

    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.gx**2 + self.gy**2)


def gradient(u: ScalarField) -> GradientField:
    gx, gy = u.domain.grad(u.values)
    return GradientField(gx, gy)


# ----------------------------------------------------------------------
# array kernels
def _grad_sq(dom: DiscreteDomain, a: np.ndarray) -> np.ndarray:
    gx, gy = dom.grad(a)
    return gx * gx + gy * gy


def _tv(dom: DiscreteDomain, a: np.ndarray, flavor=TvFlavor.ISOTROPIC) -> float:
    gx, gy = dom.grad(a)
    if TvFlavor(flavor) is TvFlavor.ANISOTROPIC:
        dens = np.abs(gx) + np.abs(gy)
    else:
        dens = np.sqrt(gx * gx + gy * gy)
    return dom.cell_area * float(np.sum(dens))


def _trace(dom: DiscreteDomain, a: np.ndarray) -> float:
    return dom.h * float(np.sum(dom.face_count * np.abs(a)))


def _i0(dom, a, flavor=TvFlavor.ISOTROPIC) -> float:
    return _tv(dom, a, flavor) + _trace(dom, a)


def _i0_tilde(dom, a) -> float:
    g2 = _grad_sq(dom, a)
    return dom.cell_area * float(np.sum(np.sqrt(1.0 + g2))) + _trace(dom, a)


# ----------------------------------------------------------------------
# public functionals
def tv(u: ScalarField, flavor: TvFlavor = TvFlavor.ISOTROPIC) -> float:
    """Total variation ``h^2 * sum |grad u|`` (Euclidean or l1 cell density)."""
    return _tv(u.domain, u.values, flavor)


def boundary_trace_term(u: ScalarField) -> float:
    return _trace(u.domain, u.values)


def bv_norm(u: ScalarField, flavor: TvFlavor = TvFlavor.ISOTROPIC) -> float:
    """``tv(u) + boundary_trace_term(u)``; a norm, since zero forces u = 0."""
    return _i0(u.domain, u.values, flavor)


def i0(u: ScalarField, flavor: TvFlavor = TvFlavor.ISOTROPIC) -> float:
    """Principal part of the 1-Laplacian energy.  Same value as :func:`bv_norm`."""
    return _i0(u.domain, u.values, flavor)


def i0_tilde(u: ScalarField) -> float:
    """Area functional ``h^2 * sum sqrt(1 + |grad u|^2)`` plus the trace term.

    Always uses the Euclidean gradient magnitude.  Satisfies
    ``bv_norm(u) <= i0_tilde(u) <= bv_norm(u) + area`` exactly in floating
    point because both sides are summed over the same per-cell ``|grad u|^2``.
    """
    return _i0_tilde(u.domain, u.values)


def _require_positive(s, name="s"):
    if not s > 0:
        raise ValueError(f"{name} must be positive, got {s}")


def i0_dirderiv_ray(u: ScalarField, s: float, flavor: TvFlavor = TvFlavor.ISOTROPIC) -> float:
    """Directional derivative of ``i0`` at ``s*u`` in direction ``u``.

    ``i0`` is positively 1-homogeneous, so the value does not depend on
    ``s > 0`` and equals ``i0(u)``.
    """
    _require_positive(s)
    return _i0(u.domain, u.values, flavor)


def _i0_tilde_ray(dom, a, s, g2=None, trace=None) -> float:
    if g2 is None:
        g2 = _grad_sq(dom, a)
    if trace is None:
        trace = _trace(dom, a)
    return dom.cell_area * float(np.sum(g2 / np.sqrt(1.0 / (s * s) + g2))) + trace


def i0_tilde_dirderiv_ray(u: ScalarField, s: float) -> float:
    """Directional derivative of ``i0_tilde`` at ``s*u`` in direction ``u``.

    Equals ``h^2 * sum |g|^2 / sqrt(1/s^2 + |g|^2) + trace(u)``, nondecreasing
    in ``s`` and tending to ``i0(u)`` as ``s -> inf``.
    """
    _require_positive(s)
    return _i0_tilde_ray(u.domain, u.values, s)


def lattice_pair(u: ScalarField, v: ScalarField) -> tuple[ScalarField, ScalarField]:
    """Cellwise ``(max(u, v), min(u, v))``."""
    u._same(v)
    return (
        ScalarField(u.domain, np.maximum(u.values, v.values)),
        ScalarField(u.domain, np.minimum(u.values, v.values)),
    )
