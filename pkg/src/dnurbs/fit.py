"""Gradient-descent fitting of NURBS curves and surfaces to point clouds.

Each iteration evaluates the model on a fixed parameter grid, measures the
loss against the target, pulls the loss gradient back to the control points
(and weights in ``nurbs`` mode) and takes one optimiser step. Knot vectors are
fixed for the whole fit, so spans and basis tables are computed once.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import KnotVector, NurbsCurve, NurbsSurface, ParamGrid
from .core.autodiff import backward_grid, forward_grid, grid_basis
from .errors import ContractError, FitAbortedError, PoisonedGradientError, UnsupportedStrategyError
from .losses import PointCloud, chamfer_mean, curve_length_reg, loss_chamfer, loss_l1, loss_l2, loss_mse
from .optim import KINDS, OptimizerState, WeightClamp

MODES = ("bspline", "nubs", "nurbs")
LOSSES = ("l1", "l2", "mse", "chamfer")
INITS = ("uniform-bbox", "gaussian", "subsample-target")


@dataclass(frozen=True)
class FitConfig:
    """Settings of one fit. Tuples have one entry for curves, two for surfaces.

    ``num_eval=None`` means twice the target count for curves and the square
    grid with as many samples as the target for surfaces. ``knots_u`` /
    ``knots_v`` optionally fix full (clamped) knot vectors; otherwise knots are
    uniform. ``train_weights=None`` trains weights exactly in ``nurbs`` mode.
    Weights step with ``weight_lr_scale`` times the learning rate: they are
    dimensionless and of order one, and full-size steps from a random start
    drive them onto the floor.
    """

    num_control_points: tuple = (16,)
    degrees: tuple = (3,)
    num_eval: tuple | None = None
    loss: str = "chamfer"
    reg_weight: float = 1e-3
    optimizer: str = "adam"
    learning_rate: float | None = None
    momentum: float = 0.9
    mode: str = "bspline"
    init: str = "uniform-bbox"
    max_iters: int = 2000
    tol: float = 1e-8
    window: int = 20
    seed: int = 0
    weight_floor: float = 1e-4
    knots_u: tuple | None = None
    knots_v: tuple | None = None
    train_weights: bool | None = None
    chamfer_reduction: str = "mean"
    init_std: float = 0.25
    weight_lr_scale: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "num_control_points", tuple(int(c) for c in _tuple(self.num_control_points)))
        object.__setattr__(self, "degrees", tuple(int(d) for d in _tuple(self.degrees)))
        if self.num_eval is not None:
            object.__setattr__(self, "num_eval", tuple(int(e) for e in _tuple(self.num_eval)))
        for name in ("knots_u", "knots_v"):
            k = getattr(self, name)
            if k is not None:
                object.__setattr__(self, name, tuple(float(x) for x in k))
        self.validate()

    @property
    def is_curve(self) -> bool:
        return len(self.num_control_points) == 1

    def validate(self) -> None:
        nd = len(self.num_control_points)
        if nd not in (1, 2) or len(self.degrees) != nd:
            raise ContractError("num_control_points and degrees must both have 1 (curve) or 2 (surface) entries")
        if self.num_eval is not None and (len(self.num_eval) != nd or min(self.num_eval) < 1):
            raise ContractError(f"num_eval must have {nd} positive entries")
        for c, d in zip(self.num_control_points, self.degrees):
            if d < 1 or c <= d:
                raise ContractError(f"need degree >= 1 and more than degree control points, got {c} points of degree {d}")
        if self.loss not in LOSSES:
            raise ContractError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.optimizer not in KINDS:
            raise ContractError(f"optimizer must be one of {KINDS}, got {self.optimizer!r}")
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.init not in INITS:
            raise ContractError(f"init must be one of {INITS}, got {self.init!r}")
        if not self.reg_weight >= 0:
            raise ContractError("regularisation weight must be >= 0")
        if self.max_iters < 0 or self.window < 1:
            raise ContractError("max_iters must be >= 0 and window >= 1")
        if self.chamfer_reduction not in ("sum", "mean"):
            raise ContractError("chamfer_reduction must be 'sum' or 'mean'")
        if not self.weight_lr_scale > 0:
            raise ContractError("weight_lr_scale must be positive")
        if not self.weight_floor > 0:
            raise ContractError("weight floor must be positive")
        if self.mode == "bspline":
            for kv, c, d in zip((self.knots_u, self.knots_v), self.num_control_points, self.degrees):
                if kv is not None and KnotVector(kv, d) != KnotVector.uniform(c, d):
                    raise ContractError("bspline mode requires uniform clamped knots")

    def replace(self, **kw) -> "FitConfig":
        return replace(self, **kw)

    @property
    def trains_weights(self) -> bool:
        if self.train_weights is None:
            return self.mode == "nurbs"
        return bool(self.train_weights) and self.mode == "nurbs"

    def knot_vectors(self) -> list[KnotVector]:
        out = []
        for kv, c, d in zip((self.knots_u, self.knots_v), self.num_control_points, self.degrees):
            k = KnotVector.uniform(c, d) if kv is None else KnotVector(kv, d)
            if k.n_ctrl != c:
                raise ContractError(f"supplied knot vector defines {k.n_ctrl} control points, config says {c}")
            out.append(k)
        return out

    def eval_grid(self, target: PointCloud) -> ParamGrid:
        if self.num_eval is not None:
            return ParamGrid(*self.num_eval)
        if self.is_curve:
            return ParamGrid(2 * len(target))
        k = math.isqrt(len(target))
        return ParamGrid(max(k, 1), max(k, 1))


def _tuple(x):
    return (x,) if np.isscalar(x) else tuple(x)


@dataclass(eq=True)
class FitReport:
    history: list
    chamfer_history: list
    final_loss: float
    final_chamfer: float
    iterations: int
    fitted: object
    config: FitConfig | None = None
    wall_time: float = field(default=0.0, compare=False)


def _spanning_axes(extent, count):
    order = sorted(np.argsort(-extent, kind="stable")[:count])
    return list(order)


def initialize(target: PointCloud, config: FitConfig):
    """Initial model for ``target`` according to ``config.init``.

    ``uniform-bbox`` lays control points on a regular lattice over the
    bounding box: a curve runs from min to max along the longest axis, a
    surface spans the two longest axes (u on the lower axis index)
    with the remaining coordinate at the box centre. ``gaussian`` draws i.i.d. normals about
    the centroid with standard deviation ``init_std`` times the box diagonal.
    """
    dim = target.dim
    lo, hi = target.bbox
    knots = config.knot_vectors()
    shape = config.num_control_points
    if config.init == "uniform-bbox":
        centre = 0.5 * (lo + hi)
        axes = _spanning_axes(hi - lo, len(shape))
        P = np.broadcast_to(centre, shape + (dim,)).copy()
        for d, (axis, count) in enumerate(zip(axes, shape)):
            ramp = np.linspace(lo[axis], hi[axis], count)
            P[..., axis] = ramp.reshape([-1 if k == d else 1 for k in range(len(shape))])
    elif config.init == "gaussian":
        rng = np.random.default_rng(config.seed)
        P = rng.normal(loc=target.centroid, scale=config.init_std * target.diagonal, size=shape + (dim,))
    else:
        if not config.is_curve:
            raise UnsupportedStrategyError("subsample-target initialisation is only defined for curves")
        idx = np.round(np.linspace(0, len(target) - 1, shape[0])).astype(int)
        P = target.points[idx].copy()
    W = np.ones(shape)
    if config.is_curve:
        return NurbsCurve(P, W, knots[0])
    return NurbsSurface(P, W, knots[0], knots[1])


class _Patch:
    """One model being fitted: its grid basis, target and loss."""

    def __init__(self, model, target, config: FitConfig, grid: ParamGrid):
        self.config = config
        self.grid = grid
        self.is_curve = isinstance(model, NurbsCurve)
        self.knots = (model.knots,) if self.is_curve else (model.knots_u, model.knots_v)
        self.basis = grid_basis(model, grid)
        self.params = {"points": np.array(model.points)}
        self.weights = np.array(model.weights)
        if config.trains_weights:
            self.params["weights"] = self.weights
        if isinstance(target, PointCloud):
            self.cloud = target
            self.paired = None
        else:
            self.paired = np.asarray(target, dtype=np.float64)
            self.cloud = PointCloud(self.paired.reshape(-1, self.paired.shape[-1]))
        self.optimizer = OptimizerState(
            config.optimizer,
            config.learning_rate,
            momentum=config.momentum,
            lr_scales={"weights": config.weight_lr_scale},
        )
        if config.loss != "chamfer":
            n_samples = grid.n_grid if self.is_curve else grid.size
            if len(self.cloud) != n_samples:
                raise ContractError(
                    f"paired {config.loss} loss needs a target with one point per evaluation sample "
                    f"({n_samples}), got {len(self.cloud)}"
                )

    def model(self):
        W = self.params.get("weights", self.weights)
        if self.is_curve:
            return NurbsCurve(self.params["points"], W, self.knots[0])
        return NurbsSurface(self.params["points"], W, *self.knots)

    def evaluate(self):
        model = self.model()
        S, tape = forward_grid(model, self.grid, basis=self.basis)
        return model, S, tape

    def loss(self, S):
        cfg = self.config
        if cfg.loss == "chamfer":
            res = loss_chamfer(S, self.cloud, reduction=cfg.chamfer_reduction)
        else:
            T = self.cloud.points.reshape(S.shape)
            res = {"l1": loss_l1, "l2": loss_l2, "mse": loss_mse}[cfg.loss](S, T)
        value, grad, data = res.value, res.grad, res.value
        if self.is_curve and cfg.reg_weight > 0:
            reg = curve_length_reg(S)
            value += cfg.reg_weight * reg.value
            grad = grad + cfg.reg_weight * reg.grad
        return value, grad, data

    def snapshot(self):
        return self.model()


def run_fit(models, targets, config: FitConfig, grids, hooks=()) -> FitReport:
    """Fit several models jointly, one loss per model, summed.

    ``hooks`` are called with the list of parameter dicts after every step.
    ``targets`` entries are point clouds (Chamfer) or sample-ordered arrays
    (paired losses).
    """
    t0 = time.perf_counter()
    patches = [_Patch(m, t, config, g) for m, t, g in zip(models, targets, grids)]
    all_hooks = list(hooks)
    if config.trains_weights:
        all_hooks.insert(0, WeightClamp(config.weight_floor))
    history, chamfer_history = [], []
    last_good = [p.snapshot() for p in patches]
    iterations = 0
    for it in range(config.max_iters):
        total, data_total, grads = 0.0, 0.0, []
        for p in patches:
            model, S, tape = p.evaluate()
            value, gS, data = p.loss(S)
            total += value
            data_total += data
            grads.append((model, tape, gS))
        if not math.isfinite(total):
            raise FitAbortedError(f"non-finite loss {total} at iteration {it}", _unwrap(last_good), it)
        last_good = [p.snapshot() for p in patches]
        history.append(total)
        if config.loss == "chamfer":
            chamfer_history.append(data_total)
        iterations = it + 1
        w = config.window
        if total == 0.0 or (
            len(history) > w and abs(total - history[-1 - w]) <= config.tol * max(abs(history[-1 - w]), 1e-300)
        ):
            break
        try:
            for p, (model, tape, gS) in zip(patches, grads):
                g = backward_grid(model, tape, gS)
                p.optimizer.step(p.params, {"points": g.d_points, "weights": g.d_weights})
        except PoisonedGradientError as exc:
            raise FitAbortedError(str(exc), _unwrap(last_good), it) from exc
        for hook in all_hooks:
            hook([p.params for p in patches])

    final_loss, final_chamfer, fitted = 0.0, 0.0, []
    for p in patches:
        model, S, _ = p.evaluate()
        value, _, _ = p.loss(S)
        final_loss += value
        final_chamfer += chamfer_mean(S, p.cloud)
        fitted.append(model)
    if not math.isfinite(final_loss):
        raise FitAbortedError(f"non-finite final loss {final_loss}", _unwrap(last_good), iterations)
    return FitReport(
        history,
        chamfer_history,
        float(final_loss),
        float(final_chamfer),
        iterations,
        _unwrap(fitted),
        config,
        time.perf_counter() - t0,
    )


def _unwrap(models):
    return models[0] if len(models) == 1 else models


def fit_curve(target: PointCloud, config: FitConfig, init=None) -> FitReport:
    """Fit a curve to ``target``; ``init`` overrides :func:`initialize`."""
    if not config.is_curve:
        raise ContractError("fit_curve needs a curve configuration (one control-point count)")
    model = initialize(target, config) if init is None else init
    return run_fit([model], [target], config, [config.eval_grid(target)])


def fit_surface(target: PointCloud, config: FitConfig, init=None) -> FitReport:
    """Fit a tensor-product surface to a 3-D ``target``.

    Paired losses expect ``target`` points in sample order (v outer, u inner).
    """
    if config.is_curve:
        raise ContractError("fit_surface needs two control-point counts")
    if target.dim != 3:
        raise ContractError(f"surface fitting needs a 3-D target, got dim {target.dim}")
    model = initialize(target, config) if init is None else init
    return run_fit([model], [target], config, [config.eval_grid(target)])


def pointwise_error_map(fitted, target, grid: ParamGrid | None = None) -> np.ndarray:
    """Per-sample ``|S - T| / diag`` on the parameter grid.

    ``target`` is a vectorised callable ``f(u, v) -> points`` (``u``, ``v``
    broadcast over the grid) or an array of samples of shape ``(m_grid,
    n_grid, dim)``; ``diag`` is the bounding-box diagonal of the target
    samples.
    """
    if callable(target):
        if grid is None:
            raise ContractError("a grid is required when the target is a function")
        uu, vv = np.meshgrid(grid.u, grid.v)
        T = np.asarray(target(uu, vv), dtype=np.float64)
    else:
        T = np.asarray(target, dtype=np.float64)
        if grid is None:
            if T.ndim != 3:
                raise ContractError("target samples must have shape (m_grid, n_grid, dim)")
            grid = ParamGrid(T.shape[1], T.shape[0])
    S, _ = forward_grid(fitted, grid)
    if S.ndim == 2:
        S = S[None]
    if T.shape != S.shape:
        raise ContractError(f"target samples {T.shape} do not match the evaluated grid {S.shape}")
    flat = T.reshape(-1, T.shape[-1])
    diag = float(np.linalg.norm(flat.max(axis=0) - flat.min(axis=0)))
    if diag == 0.0:
        raise ContractError("target has a degenerate bounding box")
    return np.linalg.norm(S - T, axis=-1) / diag
