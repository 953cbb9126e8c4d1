"""Grid evaluation (forward) and reverse-mode gradients (backward).

The forward pass records, for every sample, the knot spans and the nonzero
basis values in an :class:`EvalTape`. The backward pass consumes it to
produce ``dL/dP`` and ``dL/dW`` from upstream ``dL/dS`` without ever forming
the Jacobian. :func:`assemble_sparse_jacobian` builds that Jacobian explicitly
for verification.

Sample arrays are ``(m_grid, n_grid, dim)`` for surfaces (v-major, u-minor)
and ``(n_grid, dim)`` for curves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import ContractError, SingularWeightError
from . import kernels
from .basis import basis_table
from .geometry import WEIGHT_EPS, NurbsCurve, NurbsSurface, ParamGrid, TapeEntry


class GridBasis(NamedTuple):
    """Spans and basis values of one knot-vector pair on one grid."""

    span_u: np.ndarray
    basis_u: np.ndarray
    span_v: np.ndarray
    basis_v: np.ndarray


def grid_basis(surface, grid: ParamGrid) -> GridBasis:
    """Precompute spans and basis tables; reusable while knots stay fixed."""
    s = surface.as_surface()
    su, Nu = basis_table(grid.u, s.knots_u)
    sv, Nv = basis_table(grid.v if not isinstance(surface, NurbsCurve) else np.zeros(1), s.knots_v)
    return GridBasis(su, np.ascontiguousarray(Nu), sv, np.ascontiguousarray(Nv))


@dataclass(frozen=True, eq=False)
class EvalTape:
    """Everything the backward pass needs from a forward evaluation."""

    span_u: np.ndarray
    basis_u: np.ndarray
    span_v: np.ndarray
    basis_v: np.ndarray
    points: np.ndarray  # (B, A, dim)
    rational_denominator: np.ndarray  # (B, A)
    control_shape: tuple
    is_curve: bool = False

    @property
    def sample_shape(self) -> tuple:
        B, A, d = self.points.shape
        return (A, d) if self.is_curve else (B, A, d)

    def __len__(self):
        return self.points.shape[0] * self.points.shape[1]

    def entry(self, k: int) -> TapeEntry:
        """Tape record of sample ``k`` in row-major order."""
        A = self.points.shape[1]
        b, a = divmod(k, A)
        return TapeEntry(
            int(self.span_u[a]),
            int(self.span_v[b]),
            list(self.basis_u[a]),
            list(self.basis_v[b]),
            self.points[b, a].copy(),
            float(self.rational_denominator[b, a]),
        )


@dataclass(frozen=True, eq=False)
class ParamGradients:
    """``dL/dP`` and ``dL/dW``; knot gradients are identically zero."""

    d_points: np.ndarray
    d_weights: np.ndarray
    d_knots_u: np.ndarray
    d_knots_v: np.ndarray | None = None


def _threads(threads):
    return kernels.get_num_threads() if threads is None else int(threads)


def forward_grid(surface, grid: ParamGrid, *, basis: GridBasis | None = None, threads=None):
    """Evaluate ``surface`` (or curve) on ``grid``; returns ``(samples, tape)``.

    Curves ignore ``grid.m_grid``.
    """
    is_curve = isinstance(surface, NurbsCurve)
    s = surface.as_surface()
    if basis is None:
        basis = grid_basis(surface, grid)
    impl = kernels.get()
    # evaluate relative to the first control point: exact for constant nets, so the weight gradient cancels exactly
    ref = s.points[0, 0]
    S, denom = impl.forward(
        np.ascontiguousarray(s.points - ref), s.weights, basis.span_u, basis.basis_u, basis.span_v, basis.basis_v, _threads(threads)
    )
    S += ref
    if not np.all(denom > WEIGHT_EPS):
        k = int(np.argmax(~(denom > WEIGHT_EPS)))
        raise SingularWeightError(f"rational denominator {denom.flat[k]:.3e} at sample {k}")
    tape = EvalTape(basis.span_u, basis.basis_u, basis.span_v, basis.basis_v, S, denom, s.shape, is_curve)
    return (S[0] if is_curve else S), tape


def forward_batch(surfaces, grid: ParamGrid, *, threads=None):
    """Evaluate several surfaces on one grid; per-surface lists of samples and tapes."""
    samples, tapes = [], []
    for idx, surface in enumerate(surfaces):
        try:
            S, tape = forward_grid(surface, grid, threads=threads)
        except (SingularWeightError, ContractError) as exc:
            raise type(exc)(f"surface {idx}: {exc}") from exc
        samples.append(S)
        tapes.append(tape)
    return samples, tapes


def _check_upstream(tape: EvalTape, upstream) -> np.ndarray:
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != tape.sample_shape:
        raise ContractError(f"upstream shape {g.shape} does not match samples {tape.sample_shape}")
    if tape.is_curve:
        g = g[None]
    return np.ascontiguousarray(g)


def backward_grid(surface, tape: EvalTape, upstream, *, threads=None) -> ParamGradients:
    """Pull ``dL/dS`` back to ``dL/dP`` and ``dL/dW``.

    Each control point gathers its contributing samples serially in sample
    order, so the result does not depend on the thread count.
    """
    s = surface.as_surface()
    if s.shape != tape.control_shape:
        raise ContractError(f"tape was recorded for a {tape.control_shape} grid, surface is {s.shape}")
    g = _check_upstream(tape, upstream)
    impl = kernels.get()
    ref = s.points[0, 0]
    dP, dW = impl.backward(
        np.ascontiguousarray(s.points - ref), s.weights, tape.span_u, tape.basis_u, tape.span_v, tape.basis_v,
        np.ascontiguousarray(tape.points - ref), tape.rational_denominator, g, _threads(threads),
    )
    if isinstance(surface, NurbsCurve):
        return ParamGradients(dP[:, 0], dW[:, 0], np.zeros(len(surface.knots)))
    return ParamGradients(dP, dW, np.zeros(len(s.knots_u)), np.zeros(len(s.knots_v)))


@dataclass(frozen=True, eq=False)
class SparseJacobian:
    """Row blocks of ``dS/d(P, W)``, one row per sample.

    Row ``r`` touches the ``(p+1)(q+1)`` control points listed in
    ``columns[r]`` (flat index ``i * m + j``). ``dS/dP_ij`` is the scalar
    ``point_entries[r, c]`` times the identity; ``dS/dw_ij`` is the vector
    ``weight_entries[r, c]``.
    """

    columns: np.ndarray  # (rows, K) int
    point_entries: np.ndarray  # (rows, K)
    weight_entries: np.ndarray  # (rows, K, dim)
    control_shape: tuple

    @property
    def rows(self) -> int:
        return self.columns.shape[0]

    def nonzeros_per_row(self) -> np.ndarray:
        nz_p = np.count_nonzero(self.point_entries != 0.0, axis=1)
        nz_w = np.count_nonzero(np.any(self.weight_entries != 0.0, axis=2), axis=1)
        return nz_p + nz_w

    @property
    def stored_per_row(self) -> int:
        return 2 * self.columns.shape[1]

    def vjp(self, upstream) -> tuple[np.ndarray, np.ndarray]:
        """Multiply upstream gradients (``(rows, dim)``) through the Jacobian."""
        g = np.asarray(upstream, dtype=np.float64).reshape(self.rows, -1)
        n, m = self.control_shape
        dim = g.shape[1]
        dP = np.zeros((n * m, dim))
        dW = np.zeros(n * m)
        np.add.at(dP, self.columns, self.point_entries[:, :, None] * g[:, None, :])
        np.add.at(dW, self.columns, np.einsum("rck,rk->rc", self.weight_entries, g))
        return dP.reshape(n, m, dim), dW.reshape(n, m)

    def to_dense(self) -> np.ndarray:
        """Full ``(rows * dim, n*m*dim + n*m)`` matrix; columns are P then W."""
        n, m = self.control_shape
        dim = self.weight_entries.shape[2]
        J = np.zeros((self.rows, dim, n * m * dim + n * m))
        r_idx = np.arange(self.rows)[:, None]
        for k in range(dim):
            J[r_idx, k, self.columns * dim + k] = self.point_entries
            J[r_idx, k, n * m * dim + self.columns] = self.weight_entries[:, :, k]
        return J.reshape(self.rows * dim, -1)


def assemble_sparse_jacobian(surface, tape: EvalTape) -> SparseJacobian:
    s = surface.as_surface()
    n, m = s.shape
    p, q = tape.basis_u.shape[1] - 1, tape.basis_v.shape[1] - 1
    B, A, dim = tape.points.shape
    iu = tape.span_u[:, None] - p + np.arange(p + 1)[None, :]  # (A, p+1)
    jv = tape.span_v[:, None] - q + np.arange(q + 1)[None, :]  # (B, q+1)
    # rows ordered (b, a); each block ordered (r, h)
    I = np.broadcast_to(iu[None, :, :, None], (B, A, p + 1, q + 1))
    J = np.broadcast_to(jv[:, None, None, :], (B, A, p + 1, q + 1))
    t = tape.basis_u[None, :, :, None] * tape.basis_v[:, None, None, :]
    D = tape.rational_denominator[:, :, None, None]
    wij = s.weights[I, J]
    R = t * wij / D
    Sw = (t / D)[..., None] * (s.points[I, J] - tape.points[:, :, None, None, :])
    K = (p + 1) * (q + 1)
    return SparseJacobian(
        (I * m + J).reshape(B * A, K),
        R.reshape(B * A, K),
        Sw.reshape(B * A, K, dim),
        (n, m),
    )
