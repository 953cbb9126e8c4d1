"""First-order optimisers for control points and weights, plus post-step hooks.

Parameters are passed as a dict of numpy arrays and updated in place. Pass only
the arrays that should move: in B-spline and NUBS fits the weights are simply
left out.

Update rules (``g`` the gradient, ``a`` the learning rate):

* ``sgd``:      ``x -= a * g``
* ``momentum``: ``v = mu * v + g;  x -= a * v``
* ``adam``:     bias-corrected first/second moments, ``x -= a * m_hat / (sqrt(v_hat) + eps)``
* ``adagrad``:  ``s += g**2;  x -= a * g / (sqrt(s) + eps)``

``lr_scales`` multiplies the learning rate per parameter name.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, PoisonedGradientError

DEFAULT_LR = {"sgd": 0.1, "momentum": 0.05, "adam": 0.01, "adagrad": 0.05}
KINDS = tuple(DEFAULT_LR)


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float | None = None
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    adagrad_eps: float = 1e-10
    lr_scales: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict, repr=False)
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in DEFAULT_LR:
            raise ContractError(f"unknown optimizer {self.kind!r}; choose from {KINDS}")
        if self.learning_rate is None:
            self.learning_rate = DEFAULT_LR[self.kind]
        if not self.learning_rate > 0:
            raise ContractError(f"learning rate must be positive, got {self.learning_rate}")

    def _buffer(self, key, like):
        buf = self.buffers.get(key)
        if buf is None:
            buf = self.buffers[key] = np.zeros_like(like)
        elif buf.shape != like.shape:
            raise ContractError(f"buffer {key!r} has shape {buf.shape}, parameter has {like.shape}")
        return buf

    def step(self, params: dict, grads: dict) -> dict:
        for name, x in params.items():
            if name not in grads:
                raise ContractError(f"no gradient for parameter {name!r}")
            if np.shape(grads[name]) != x.shape:
                raise ContractError(f"gradient for {name!r} has shape {np.shape(grads[name])}, expected {x.shape}")
        for name in params:
            if not np.all(np.isfinite(grads[name])):
                raise PoisonedGradientError(f"non-finite gradient for {name!r}; parameters left unchanged")

        self.step_count += 1
        t = self.step_count
        for name, x in params.items():
            lr = self.learning_rate * self.lr_scales.get(name, 1.0)
            g = np.asarray(grads[name], dtype=np.float64)
            if self.kind == "sgd":
                x -= lr * g
            elif self.kind == "momentum":
                v = self._buffer((name, "v"), x)
                v *= self.momentum
                v += g
                x -= lr * v
            elif self.kind == "adam":
                m = self._buffer((name, "m"), x)
                v = self._buffer((name, "v"), x)
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                m_hat = m / (1.0 - self.beta1**t)
                v_hat = v / (1.0 - self.beta2**t)
                x -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
            else:
                s = self._buffer((name, "s"), x)
                s += g * g
                x -= lr * g / (np.sqrt(s) + self.adagrad_eps)
        return params


def step(params: dict, grads: dict, state: OptimizerState) -> dict:
    return state.step(params, grads)


def clamp_weights(weights, floor: float = 1e-4):
    """Raise every weight below ``floor`` to ``floor`` (in place); returns the array."""
    if not floor > 0:
        raise ContractError(f"weight floor must be positive, got {floor}")
    if isinstance(weights, dict):
        np.maximum(weights["weights"], floor, out=weights["weights"])
        return weights
    np.maximum(weights, floor, out=weights)
    return weights


def apply_shared_edge_constraint(patches: list[dict], shared_map) -> list[dict]:
    """Set each group of shared control points (and weights) to its mean.

    ``patches`` are parameter dicts with ``"points"`` of shape ``(n, m, dim)``
    and optionally ``"weights"``; each group in ``shared_map`` lists
    ``(patch, i, j)`` triples. Groups already in agreement are left untouched,
    which makes the operation idempotent bit for bit.
    """
    for group in shared_map:
        for k, i, j in group:
            if not (0 <= k < len(patches)):
                raise ContractError(f"patch index {k} out of range")
            n, m = patches[k]["points"].shape[:2]
            if not (0 <= i < n and 0 <= j < m):
                raise ContractError(f"control index ({i}, {j}) out of range for patch {k} of shape {(n, m)}")
    for group in shared_map:
        for key in ("points", "weights"):
            if not all(key in patches[k] for k, _, _ in group):
                continue
            vals = np.array([patches[k][key][i, j] for k, i, j in group])
            if np.all(vals == vals[0]):
                continue
            mean = vals.mean(axis=0)
            for k, i, j in group:
                patches[k][key][i, j] = mean
    return patches


class WeightClamp:
    def __init__(self, floor: float = 1e-4):
        self.floor = floor

    def __call__(self, param_sets: list[dict]) -> None:
        for params in param_sets:
            if "weights" in params:
                clamp_weights(params["weights"], self.floor)


class SharedEdgeConstraint:
    def __init__(self, groups):
        self.groups = groups

    def __call__(self, param_sets: list[dict]) -> None:
        apply_shared_edge_constraint(param_sets, self.groups)
