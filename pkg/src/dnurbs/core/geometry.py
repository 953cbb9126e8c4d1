"""NURBS curve and surface types with single-point evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import ContractError, SingularNormalError, SingularWeightError
from .basis import KnotVector, basis_function_derivatives, basis_functions, find_span

WEIGHT_EPS = 1e-12
NORMAL_EPS = 1e-10

# knot vector of the trivial degree-0 direction a curve is embedded with
_POINT_KNOTS = KnotVector([0.0, 1.0], 0)


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class NurbsSurface:
    """Tensor-product NURBS surface.

    ``points`` has shape ``(n, m, dim)`` and ``weights`` shape ``(n, m)``;
    index ``i`` runs along ``u`` and ``j`` along ``v``. Instances are
    immutable; use :meth:`replace` to get a modified copy.
    """

    points: np.ndarray
    weights: np.ndarray
    knots_u: KnotVector
    knots_v: KnotVector

    def __post_init__(self):
        P = _frozen(self.points)
        if P.ndim != 3 or P.shape[2] not in (2, 3):
            raise ContractError(f"points must have shape (n, m, 2|3), got {P.shape}")
        W = _frozen(np.ones(P.shape[:2]) if self.weights is None else self.weights)
        if W.shape != P.shape[:2]:
            raise ContractError(f"weights shape {W.shape} does not match control grid {P.shape[:2]}")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(W))):
            raise ContractError("control points and weights must be finite")
        if np.any(W <= 0.0):
            raise ContractError("weights must be strictly positive")
        n, m = P.shape[:2]
        ku, kv = self.knots_u, self.knots_v
        if not isinstance(ku, KnotVector) or not isinstance(kv, KnotVector):
            raise ContractError("knots_u and knots_v must be KnotVector instances")
        if ku.n_ctrl != n:
            raise ContractError(f"knots_u defines {ku.n_ctrl} control points but grid has n = {n}")
        if kv.n_ctrl != m:
            raise ContractError(f"knots_v defines {kv.n_ctrl} control points but grid has m = {m}")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", W)

    @classmethod
    def bspline(cls, points, degree_u: int, degree_v: int, weights=None) -> "NurbsSurface":
        """Surface on uniform clamped knots (unit weights unless given)."""
        P = np.asarray(points, dtype=np.float64)
        n, m = P.shape[:2]
        return cls(P, weights, KnotVector.uniform(n, degree_u), KnotVector.uniform(m, degree_v))

    @property
    def degree_u(self) -> int:
        return self.knots_u.degree

    @property
    def degree_v(self) -> int:
        return self.knots_v.degree

    @property
    def shape(self) -> tuple[int, int]:
        return self.points.shape[:2]

    @property
    def dim(self) -> int:
        return self.points.shape[2]

    def replace(self, points=None, weights=None) -> "NurbsSurface":
        return NurbsSurface(
            self.points if points is None else points,
            self.weights if weights is None else weights,
            self.knots_u,
            self.knots_v,
        )

    def as_surface(self) -> "NurbsSurface":
        return self

    def __eq__(self, other):
        if not isinstance(other, NurbsSurface):
            return NotImplemented
        return (
            self.knots_u == other.knots_u
            and self.knots_v == other.knots_v
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class NurbsCurve:
    """NURBS curve with ``points`` of shape ``(n, dim)``.

    Evaluated as the degenerate surface with a single control column and a
    degree-0 ``v`` direction.
    """

    points: np.ndarray
    weights: np.ndarray
    knots: KnotVector

    def __post_init__(self):
        P = _frozen(self.points)
        if P.ndim != 2 or P.shape[1] not in (2, 3):
            raise ContractError(f"points must have shape (n, 2|3), got {P.shape}")
        W = _frozen(np.ones(P.shape[0]) if self.weights is None else self.weights)
        if W.shape != P.shape[:1]:
            raise ContractError(f"weights shape {W.shape} does not match {P.shape[0]} control points")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(W))):
            raise ContractError("control points and weights must be finite")
        if np.any(W <= 0.0):
            raise ContractError("weights must be strictly positive")
        if not isinstance(self.knots, KnotVector):
            raise ContractError("knots must be a KnotVector")
        if self.knots.n_ctrl != P.shape[0]:
            raise ContractError(f"knots define {self.knots.n_ctrl} control points but curve has {P.shape[0]}")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", W)

    @classmethod
    def bspline(cls, points, degree: int, weights=None) -> "NurbsCurve":
        P = np.asarray(points, dtype=np.float64)
        return cls(P, weights, KnotVector.uniform(P.shape[0], degree))

    @property
    def degree(self) -> int:
        return self.knots.degree

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def shape(self) -> tuple[int]:
        return self.points.shape[:1]

    def replace(self, points=None, weights=None) -> "NurbsCurve":
        return NurbsCurve(
            self.points if points is None else points,
            self.weights if weights is None else weights,
            self.knots,
        )

    def as_surface(self) -> NurbsSurface:
        return NurbsSurface(self.points[:, None, :], self.weights[:, None], self.knots, _POINT_KNOTS)

    def __eq__(self, other):
        if not isinstance(other, NurbsCurve):
            return NotImplemented
        return (
            self.knots == other.knots
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


@dataclass(frozen=True)
class ParamGrid:
    """Uniform inclusive mesh of parameters over [0, 1] x [0, 1].

    A count of one yields the single parameter 0.
    """

    n_grid: int
    m_grid: int = 1

    def __post_init__(self):
        if self.n_grid < 1 or self.m_grid < 1:
            raise ContractError(f"grid counts must be positive, got {self.n_grid} x {self.m_grid}")

    @staticmethod
    def _axis(count: int) -> np.ndarray:
        return np.zeros(1) if count == 1 else np.linspace(0.0, 1.0, count)

    @property
    def u(self) -> np.ndarray:
        return self._axis(self.n_grid)

    @property
    def v(self) -> np.ndarray:
        return self._axis(self.m_grid)

    @property
    def size(self) -> int:
        return self.n_grid * self.m_grid

    def samples(self) -> np.ndarray:
        """``(size, 2)`` array of ``(u, v)`` in row-major order (v outer, u inner)."""
        uu, vv = np.meshgrid(self.u, self.v)
        return np.stack([uu.ravel(), vv.ravel()], axis=1)

    def dense(self, factor: int) -> "ParamGrid":
        return ParamGrid(self.n_grid * factor, self.m_grid * factor if self.m_grid > 1 else 1)


class TapeEntry(NamedTuple):
    u_span: int
    v_span: int
    basis_u: list
    basis_v: list
    point: np.ndarray
    rational_denominator: float


def _window(surface: NurbsSurface, su: int, sv: int):
    p, q = surface.degree_u, surface.degree_v
    P = surface.points[su - p : su + 1, sv - q : sv + 1]
    W = surface.weights[su - p : su + 1, sv - q : sv + 1]
    return P, W


def eval_surface_point(surface, u: float, v: float = 0.0) -> tuple[np.ndarray, TapeEntry]:
    """Evaluate one point by homogeneous accumulation and perspective divide."""
    surface = surface.as_surface()
    su = find_span(u, surface.knots_u)
    sv = find_span(v, surface.knots_v)
    Nu = basis_functions(su, u, surface.knots_u)
    Nv = basis_functions(sv, v, surface.knots_v)
    P, W = _window(surface, su, sv)
    c = np.outer(Nu, Nv) * W
    w = float(c.sum())
    if not w > WEIGHT_EPS:
        raise SingularWeightError(f"rational denominator {w:.3e} at (u, v) = ({u}, {v})")
    point = np.einsum("rh,rhk->k", c, P) / w
    return point, TapeEntry(su, sv, Nu, Nv, point, w)


def surface_partials(surface, u: float, v: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """First parametric derivatives ``(S_u, S_v)`` by the quotient rule.

    Points are taken relative to the first control point of the span window;
    derivatives are translation invariant and a constant net gives exact zeros.
    """
    surface = surface.as_surface()
    ku, kv = surface.knots_u, surface.knots_v
    su, sv = find_span(u, ku), find_span(v, kv)
    Nu = np.array(basis_functions(su, u, ku))
    Nv = np.array(basis_functions(sv, v, kv))
    dNu = np.array(basis_function_derivatives(su, u, ku))
    dNv = np.array(basis_function_derivatives(sv, v, kv))
    P, W = _window(surface, su, sv)
    PW = (P - P[0, 0]) * W[:, :, None]
    w = Nu @ W @ Nv
    if not w > WEIGHT_EPS:
        raise SingularWeightError(f"rational denominator {w:.3e} at (u, v) = ({u}, {v})")
    NR = np.einsum("r,h,rhk->k", Nu, Nv, PW)
    NR_u = np.einsum("r,h,rhk->k", dNu, Nv, PW)
    NR_v = np.einsum("r,h,rhk->k", Nu, dNv, PW)
    w_u = dNu @ W @ Nv
    w_v = Nu @ W @ dNv
    S_u = (NR_u * w - NR * w_u) / (w * w)
    S_v = (NR_v * w - NR * w_v) / (w * w)
    return S_u, S_v


def surface_normal(surface: NurbsSurface, u: float, v: float) -> np.ndarray:
    """Unit normal ``(S_u x S_v) / |S_u x S_v|``."""
    S_u, S_v = surface_partials(surface, u, v)
    if S_u.size != 3:
        raise ContractError("normals are defined for surfaces in R^3 only")
    n = np.cross(S_u, S_v)
    mag = float(np.linalg.norm(n))
    if mag <= NORMAL_EPS:
        raise SingularNormalError(u, v, mag)
    return n / mag


def grid_partials(surface: NurbsSurface, grid: ParamGrid):
    """Points and first partials on a whole grid, each ``(m_grid, n_grid, dim)``."""
    from .basis import basis_table, dense_basis_matrix

    n, m = surface.shape
    su, Nu, dNu = basis_table(grid.u, surface.knots_u, derivatives=True)
    sv, Nv, dNv = basis_table(grid.v, surface.knots_v, derivatives=True)
    Bu, dBu = dense_basis_matrix(su, Nu, n), dense_basis_matrix(su, dNu, n)
    Bv, dBv = dense_basis_matrix(sv, Nv, m), dense_basis_matrix(sv, dNv, m)
    ref = surface.points[0, 0]
    Pw = np.concatenate([(surface.points - ref) * surface.weights[:, :, None], surface.weights[:, :, None]], axis=2)
    H = np.einsum("bj,ai,ijk->bak", Bv, Bu, Pw)
    H_u = np.einsum("bj,ai,ijk->bak", Bv, dBu, Pw)
    H_v = np.einsum("bj,ai,ijk->bak", dBv, Bu, Pw)
    w, w_u, w_v = H[..., -1:], H_u[..., -1:], H_v[..., -1:]
    if not np.all(w > WEIGHT_EPS):
        raise SingularWeightError("rational denominator vanished on grid")
    S = H[..., :-1] / w + ref
    S_u = (H_u[..., :-1] * w - H[..., :-1] * w_u) / (w * w)
    S_v = (H_v[..., :-1] * w - H[..., :-1] * w_v) / (w * w)
    return S, S_u, S_v


def grid_normals(surface: NurbsSurface, grid: ParamGrid):
    """Unit normals on a grid; raises :class:`SingularNormalError` on degeneracy."""
    S, S_u, S_v = grid_partials(surface, grid)
    nrm = np.cross(S_u, S_v)
    mag = np.linalg.norm(nrm, axis=-1)
    if np.any(mag <= NORMAL_EPS):
        b, a = np.unravel_index(int(np.argmin(mag)), mag.shape)
        raise SingularNormalError(float(grid.u[a]), float(grid.v[b]), float(mag[b, a]))
    return S, nrm / mag[..., None]
