"""Point-set losses returning a value and ``dL/d(pred)``.

All distances are plain Euclidean norms. Where a norm's gradient is needed at
a coincident pair the direction is taken as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import kernels
from .errors import ContractError

NORM_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Unordered points in R^2 or R^3 with their bounding box."""

    points: np.ndarray

    def __post_init__(self):
        P = np.array(self.points, dtype=np.float64, copy=True, order="C")
        if P.ndim != 2 or P.shape[0] == 0 or P.shape[1] not in (2, 3):
            raise ContractError(f"point cloud must be a nonempty (N, 2|3) array, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise ContractError("point cloud contains non-finite coordinates")
        P.setflags(write=False)
        object.__setattr__(self, "points", P)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)

    @property
    def extent(self) -> np.ndarray:
        lo, hi = self.bbox
        return hi - lo

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass(frozen=True, eq=False)
class LossResult:
    value: float
    grad: np.ndarray


def _points(x) -> np.ndarray:
    if isinstance(x, PointCloud):
        return x.points
    return np.asarray(x, dtype=np.float64)


def _paired(pred, target):
    P = np.asarray(pred, dtype=np.float64)
    Q = _points(target)
    shape = P.shape
    P2 = P.reshape(-1, shape[-1])
    Q2 = Q.reshape(-1, Q.shape[-1])
    if P2.shape != Q2.shape:
        raise ContractError(f"paired loss needs equal point counts and dims, got {P2.shape} vs {Q2.shape}")
    if P2.shape[0] == 0:
        raise ContractError("paired loss on empty point sets")
    return P2, Q2, shape


def loss_l1(pred, target) -> LossResult:
    """Mean over pairs of the L1 norm of ``pred - target``."""
    P, Q, shape = _paired(pred, target)
    diff = P - Q
    n = P.shape[0]
    value = float(np.abs(diff).sum(axis=1).mean())
    return LossResult(value, (np.sign(diff) / n).reshape(shape))


def loss_l2(pred, target) -> LossResult:
    """Mean over pairs of the Euclidean distance (not squared)."""
    P, Q, shape = _paired(pred, target)
    diff = P - Q
    n = P.shape[0]
    dist = np.sqrt(np.einsum("ik,ik->i", diff, diff))
    grad = diff / (n * np.maximum(dist, NORM_EPS))[:, None]
    return LossResult(float(dist.mean()), grad.reshape(shape))


def loss_mse(pred, target) -> LossResult:
    """Mean over pairs of the squared Euclidean distance."""
    P, Q, shape = _paired(pred, target)
    diff = P - Q
    n = P.shape[0]
    return LossResult(float(np.einsum("ik,ik->", diff, diff) / n), (2.0 / n * diff).reshape(shape))


def nearest_neighbors(query, ref, threads=None):
    """Nearest ``ref`` index and distance for each query point (ties: lowest index)."""
    q = np.ascontiguousarray(_points(query), dtype=np.float64)
    r = np.ascontiguousarray(_points(ref), dtype=np.float64)
    t = kernels.get_num_threads() if threads is None else threads
    return kernels.get().nearest(q, r, t)


def loss_chamfer(pred, target, reduction: str = "sum", threads=None) -> LossResult:
    """Symmetric Chamfer distance.

    ``reduction="sum"`` adds the two directed nearest-neighbour distance sums;
    ``"mean"`` averages each directed term over its own point count instead.
    Nearest-neighbour assignments are held fixed for the gradient.
    """
    P = np.asarray(pred, dtype=np.float64)
    shape = P.shape
    P = P.reshape(-1, shape[-1])
    Q = _points(target)
    if Q.shape[-1] != shape[-1]:
        raise ContractError("Chamfer distance needs point sets of equal dimension")
    Q = Q.reshape(-1, shape[-1])
    if P.shape[0] == 0 or Q.shape[0] == 0:
        raise ContractError("Chamfer distance needs nonempty point sets")
    if reduction not in ("sum", "mean"):
        raise ContractError(f"unknown reduction {reduction!r}")
    i_pq, d_pq = nearest_neighbors(P, Q, threads)
    i_qp, d_qp = nearest_neighbors(Q, P, threads)
    a = 1.0 / P.shape[0] if reduction == "mean" else 1.0
    b = 1.0 / Q.shape[0] if reduction == "mean" else 1.0
    value = a * float(d_pq.sum()) + b * float(d_qp.sum())
    grad = a * (P - Q[i_pq]) / np.maximum(d_pq, NORM_EPS)[:, None]
    back = b * (P[i_qp] - Q) / np.maximum(d_qp, NORM_EPS)[:, None]
    np.add.at(grad, i_qp, back)
    return LossResult(value, grad.reshape(shape))


def chamfer_mean(pred, target, threads=None) -> float:
    """Symmetric Chamfer with each directed term averaged; the reported fit metric."""
    return loss_chamfer(pred, target, reduction="mean", threads=threads).value


def curve_length_reg(pred) -> LossResult:
    """Polyline length of parametrically ordered samples."""
    P = np.asarray(pred, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] < 2:
        raise ContractError("curve-length regularisation needs at least 2 ordered samples")
    seg = np.diff(P, axis=0)
    length = np.sqrt(np.einsum("ik,ik->i", seg, seg))
    unit = seg / np.maximum(length, NORM_EPS)[:, None]
    grad = np.zeros_like(P)
    grad[1:] += unit
    grad[:-1] -= unit
    return LossResult(float(length.sum()), grad)


def chamfer_normalized(pred, target, min_bbox_extent: float, reduction: str = "sum", threads=None) -> float:
    if not min_bbox_extent > 0:
        raise ContractError(f"bounding-box extent must be positive, got {min_bbox_extent}")
    return loss_chamfer(pred, target, reduction=reduction, threads=threads).value / float(min_bbox_extent)
