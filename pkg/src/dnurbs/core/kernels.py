"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``DNURBS_BACKEND=python`` forces the fallback, and
``DNURBS_NUM_THREADS`` sets the default thread count for compiled kernels.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled


def _default_threads() -> int:
    env = os.environ.get("DNURBS_NUM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


_state = {"threads": _default_threads()}
_requested = os.environ.get("DNURBS_BACKEND", "").strip().lower()
if _requested and _requested not in ("python", "cython"):
    raise ImportError(f"DNURBS_BACKEND must be 'python' or 'cython', got {_requested!r}")
if _requested == "cython" and _compiled is None:
    raise ImportError("DNURBS_BACKEND=cython but the compiled extension is not built")
_state["impl"] = _BACKENDS[_requested] if _requested else (_compiled or _kernels_py)


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend() -> str:
    return _state["impl"].BACKEND


def set_backend(name: str) -> None:
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    _state["impl"] = _BACKENDS[name]


def get_num_threads() -> int:
    return _state["threads"]


def set_num_threads(n: int) -> None:
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _state["threads"] = int(n)


def get(name: str | None = None):
    """Module implementing ``forward``, ``backward`` and ``nearest``."""
    return _state["impl"] if name is None else _BACKENDS[name]
