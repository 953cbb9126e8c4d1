"""Finite-difference verification of the analytic backward pass.

For a random surface and a random linear functional ``L = sum(c * S)`` of its
grid samples, ``backward_grid(c)`` is compared with central differences of
``L`` in every control-point coordinate and every weight.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .core import KnotVector, NurbsSurface, ParamGrid
from .core.autodiff import backward_grid, forward_grid
from .errors import ContractError

REL_FLOOR = 1e-8
TOLERANCE = 1e-5


def random_knots(rng: np.random.Generator, n_ctrl: int, degree: int) -> KnotVector:
    """Clamped knots with random interior values (occasionally repeated)."""
    k = n_ctrl - degree - 1
    interior = np.sort(rng.uniform(0.05, 0.95, size=k))
    if k >= 2 and degree >= 2 and rng.random() < 0.3:
        interior[1] = interior[0]
    return KnotVector.from_interior(np.round(interior, 6), degree)


def random_surface(
    rng: np.random.Generator, degrees=None, counts=None, dim: int | None = None, rational: bool = True
) -> NurbsSurface:
    """Surface with degrees in 1..3, 4..10 control points per direction, dim 2 or 3."""
    p, q = degrees if degrees is not None else rng.integers(1, 4, size=2)
    if counts is None:
        n = int(rng.integers(max(4, p + 1), 11))
        m = int(rng.integers(max(4, q + 1), 11))
    else:
        n, m = counts
    dim = int(rng.integers(2, 4)) if dim is None else dim
    P = rng.normal(size=(n, m, dim))
    W = rng.uniform(0.5, 2.0, size=(n, m)) if rational else None
    return NurbsSurface(P, W, random_knots(rng, n, int(p)), random_knots(rng, m, int(q)))


class SurfaceCheck(NamedTuple):
    max_rel_error: float
    worst_param: str


class GradcheckResult(NamedTuple):
    max_rel_error: float
    worst_trial: int
    worst_param: str
    seed: int
    trials: int
    errors: tuple

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def check_surface(surface: NurbsSurface, grid: ParamGrid, upstream: np.ndarray, h: float = 1e-6, backward=None):
    """Normwise relative error ``max|a - f| / max|f|`` over all point and weight entries.

    Entrywise ratios are not used: for entries near zero the central
    difference itself carries a roundoff of about ``eps |L| / h``.
    """
    backward = backward or backward_grid
    S, tape = forward_grid(surface, grid)
    g = backward(surface, tape, upstream)
    P0 = np.array(surface.points)
    W0 = np.array(surface.weights)

    def functional(P, W):
        return float(np.sum(upstream * forward_grid(surface.replace(points=P, weights=W), grid)[0]))

    names, analytic, numeric = [], [], []
    for idx in np.ndindex(P0.shape):
        Pp, Pm = P0.copy(), P0.copy()
        Pp[idx] += h
        Pm[idx] -= h
        numeric.append((functional(Pp, W0) - functional(Pm, W0)) / (2 * h))
        analytic.append(g.d_points[idx])
        names.append(f"points{list(idx)}")
    for idx in np.ndindex(W0.shape):
        Wp, Wm = W0.copy(), W0.copy()
        Wp[idx] += h
        Wm[idx] -= h
        numeric.append((functional(P0, Wp) - functional(P0, Wm)) / (2 * h))
        analytic.append(g.d_weights[idx])
        names.append(f"weights{list(idx)}")
    a, f = np.array(analytic), np.array(numeric)
    err = np.abs(a - f)
    k = int(np.argmax(err))
    return SurfaceCheck(float(err[k] / max(np.abs(f).max(), REL_FLOOR)), names[k])


def gradcheck(trials: int = 20, seed: int = 0, h: float = 1e-6, backward: Callable | None = None) -> GradcheckResult:
    """Run :func:`check_surface` on ``trials`` random surfaces.

    Trial ``k`` draws everything from ``default_rng([seed, k])``, so a single
    trial can be replayed from ``(seed, k)``.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    errors, worst = [], (0.0, 0, "")
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        surface = random_surface(rng)
        grid = ParamGrid(int(rng.integers(5, 13)), int(rng.integers(5, 13)))
        upstream = rng.normal(size=(grid.m_grid, grid.n_grid, surface.dim))
        res = check_surface(surface, grid, upstream, h, backward)
        errors.append(res.max_rel_error)
        if res.max_rel_error > worst[0] or k == 0:
            worst = (res.max_rel_error, k, res.worst_param)
    return GradcheckResult(worst[0], worst[1], worst[2], seed, trials, tuple(errors))


def corrupted_backward(surface, tape, upstream):
    """Backward pass with a deliberate 1% error in the weight gradient (negative control)."""
    g = backward_grid(surface, tape, upstream)
    return type(g)(g.d_points, g.d_weights * 1.01, g.d_knots_u, g.d_knots_v)
