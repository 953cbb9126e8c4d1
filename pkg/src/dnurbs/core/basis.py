"""Knot vectors and B-spline basis functions.

Scalar routines follow the usual triangular Cox-de Boor scheme and are used
for single-point queries. :func:`basis_table` is the vectorised counterpart
used to build evaluation tapes for whole parameter grids.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DomainError


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Clamped knot vector on [0, 1].

    The end knots are repeated exactly ``degree + 1`` times and interior knots
    lie strictly inside the domain, so every curve built on it interpolates its
    end control points.
    """

    knots: np.ndarray
    degree: int
    _list: tuple = field(init=False, repr=False)

    def __post_init__(self):
        knots = _readonly(self.knots)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "_list", tuple(float(k) for k in knots))
        self.validate()

    def validate(self) -> None:
        p, k = self.degree, self.knots
        if k.ndim != 1:
            raise ContractError("knots must be one-dimensional")
        if p < 0:
            raise ContractError(f"degree must be nonnegative, got {p}")
        if k.size < 2 * p + 2:
            raise ContractError(f"degree {p} needs at least {2 * p + 2} knots, got {k.size}")
        if not np.all(np.isfinite(k)):
            raise ContractError("knots must be finite")
        if np.any(np.diff(k) < 0):
            raise ContractError("knots must be non-decreasing")
        if k[0] != 0.0 or k[-1] != 1.0:
            raise ContractError(f"knot domain must be [0, 1], got [{k[0]}, {k[-1]}]")
        if np.any(k[: p + 1] != 0.0) or np.any(k[-(p + 1):] != 1.0):
            raise ContractError(f"end knots must be repeated degree+1 = {p + 1} times")
        interior = k[p + 1 : k.size - p - 1]
        if interior.size and (interior[0] <= 0.0 or interior[-1] >= 1.0):
            raise ContractError(f"end knot multiplicity exceeds degree+1 = {p + 1}")
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if counts.max() > max(p, 1):
                raise ContractError(f"interior knot multiplicity {counts.max()} exceeds degree {p}")

    @classmethod
    def uniform(cls, n_ctrl: int, degree: int) -> "KnotVector":
        """Uniform clamped knots for ``n_ctrl`` control points."""
        if n_ctrl <= degree:
            raise ContractError(f"need more than {degree} control points for degree {degree}, got {n_ctrl}")
        interior = np.linspace(0.0, 1.0, n_ctrl - degree + 1)[1:-1]
        return cls(np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)]), degree)

    @classmethod
    def from_interior(cls, interior, degree: int) -> "KnotVector":
        interior = np.asarray(interior, dtype=np.float64)
        return cls(np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)]), degree)

    @property
    def n_ctrl(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def is_uniform(self) -> bool:
        inner = self.knots[self.degree : self.knots.size - self.degree]
        return bool(np.allclose(np.diff(inner), 1.0 / (inner.size - 1), rtol=0, atol=1e-12))

    def __len__(self):
        return self.knots.size

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.degree == other.degree and self._list == other._list

    def __hash__(self):
        return hash((self.degree, self._list))


def _as_knots(knots, degree=None) -> KnotVector:
    if isinstance(knots, KnotVector):
        return knots
    if degree is None:
        raise ContractError("degree is required when knots are given as a plain sequence")
    return KnotVector(knots, degree)


def find_span(u: float, knots: KnotVector, n: int | None = None) -> int:
    """Index ``i`` of the knot span with ``U[i] <= u < U[i+1]``.

    At the right end of the domain the last nonempty span ``n - 1`` is
    returned so the final basis window stays nonzero.
    """
    kv = knots._list
    p = knots.degree
    n = knots.n_ctrl if n is None else int(n)
    if n != knots.n_ctrl:
        raise ContractError(f"control-point count {n} inconsistent with {len(kv)} knots of degree {p}")
    u = float(u)
    if not (kv[0] <= u <= kv[-1]):
        raise DomainError(u, kv[0], kv[-1])
    if u >= kv[n]:
        return n - 1
    return bisect.bisect_right(kv, u, p, n) - 1


def _check_span(span: int, u: float, knots: KnotVector) -> None:
    kv, p = knots._list, knots.degree
    if not (p <= span <= knots.n_ctrl - 1):
        raise ContractError(f"span {span} outside [{p}, {knots.n_ctrl - 1}]")
    if not (kv[span] <= u <= kv[span + 1]) or kv[span] == kv[span + 1]:
        raise ContractError(f"u = {u} does not lie in knot span {span} = [{kv[span]}, {kv[span + 1]}]")


def _triangle(span: int, u: float, kv, p: int) -> list[list[float]]:
    # ndu[d] holds the d+1 nonzero basis values of degree d on this span
    left = [0.0] * (p + 1)
    right = [0.0] * (p + 1)
    out = [[1.0]]
    N = [1.0]
    for j in range(1, p + 1):
        left[j] = u - kv[span + 1 - j]
        right[j] = kv[span + j] - u
        nxt = [0.0] * (j + 1)
        saved = 0.0
        for r in range(j):
            den = right[r + 1] + left[j - r]
            temp = N[r] / den if den != 0.0 else 0.0
            nxt[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        nxt[j] = saved
        N = nxt
        out.append(N)
    return out


def basis_functions(span: int, u: float, knots: KnotVector) -> list[float]:
    """The ``p + 1`` nonzero basis values ``N[span-p] .. N[span]`` at ``u``."""
    _check_span(span, u, knots)
    return _triangle(span, float(u), knots._list, knots.degree)[-1]


def basis_function_derivatives(span: int, u: float, knots: KnotVector) -> list[float]:
    """First derivatives of the nonzero basis functions at ``u``.

    ``N'[i,p] = p * (N[i,p-1] / (U[i+p] - U[i]) - N[i+1,p-1] / (U[i+p+1] - U[i+1]))``
    with 0/0 taken as 0.
    """
    _check_span(span, u, knots)
    p, kv = knots.degree, knots._list
    if p == 0:
        return [0.0]
    lower = _triangle(span, float(u), kv, p)[p - 1]
    # lower[k] is N[span-p+1+k, p-1]; pad so index r-1 / r address the two terms
    padded = [0.0] + list(lower) + [0.0]
    ders = []
    for r in range(p + 1):
        i = span - p + r
        d1 = kv[i + p] - kv[i]
        d2 = kv[i + p + 1] - kv[i + 1]
        a = padded[r] / d1 if d1 != 0.0 else 0.0
        b = padded[r + 1] / d2 if d2 != 0.0 else 0.0
        ders.append(p * (a - b))
    return ders


def find_spans(us: np.ndarray, knots: KnotVector) -> np.ndarray:
    """Vectorised :func:`find_span` for a 1-d array of parameters."""
    us = np.asarray(us, dtype=np.float64)
    kv = knots.knots
    bad = (us < kv[0]) | (us > kv[-1]) | ~np.isfinite(us)
    if np.any(bad):
        raise DomainError(float(us[np.argmax(bad)]), kv[0], kv[-1])
    n, p = knots.n_ctrl, knots.degree
    spans = np.searchsorted(kv[p : n + 1], us, side="right") - 1 + p
    return np.minimum(spans, n - 1).astype(np.int64)


def basis_table(us, knots: KnotVector, derivatives: bool = False):
    """Spans and nonzero basis values for every parameter in ``us``.

    Returns ``(spans, N)`` with ``N`` of shape ``(len(us), p + 1)``, or
    ``(spans, N, dN)`` when ``derivatives`` is set.
    """
    us = np.asarray(us, dtype=np.float64).reshape(-1)
    kv, p = knots.knots, knots.degree
    spans = find_spans(us, knots)
    count = us.size
    left = np.zeros((count, p + 1))
    right = np.zeros((count, p + 1))
    N = np.ones((count, 1))
    lower = N
    for j in range(1, p + 1):
        left[:, j] = us - kv[spans + 1 - j]
        right[:, j] = kv[spans + j] - us
        nxt = np.zeros((count, j + 1))
        saved = np.zeros(count)
        for r in range(j):
            den = right[:, r + 1] + left[:, j - r]
            with np.errstate(divide="ignore", invalid="ignore"):
                temp = np.where(den != 0.0, N[:, r] / den, 0.0)
            nxt[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        nxt[:, j] = saved
        lower, N = N, nxt
    if not derivatives:
        return spans, N
    dN = np.zeros((count, p + 1))
    if p > 0:
        padded = np.zeros((count, p + 2))
        padded[:, 1 : p + 1] = lower
        for r in range(p + 1):
            i = spans - p + r
            d1 = kv[i + p] - kv[i]
            d2 = kv[i + p + 1] - kv[i + 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                a = np.where(d1 != 0.0, padded[:, r] / d1, 0.0)
                b = np.where(d2 != 0.0, padded[:, r + 1] / d2, 0.0)
            dN[:, r] = p * (a - b)
    return spans, N, dN


def dense_basis_matrix(spans: np.ndarray, N: np.ndarray, n_ctrl: int) -> np.ndarray:
    """Scatter a basis table into a dense ``(samples, n_ctrl)`` matrix."""
    count, width = N.shape
    p = width - 1
    out = np.zeros((count, n_ctrl))
    cols = spans[:, None] - p + np.arange(width)[None, :]
    out[np.arange(count)[:, None], cols] = N
    return out
