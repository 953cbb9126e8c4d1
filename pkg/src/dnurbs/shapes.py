"""Synthetic targets and test geometry.

Curves and point clouds for the fitting experiments, plus the base surfaces
and multi-patch assemblies used for offsetting. Everything is deterministic.
"""

from __future__ import annotations

import numpy as np

from .core import KnotVector, NurbsCurve, NurbsSurface, ParamGrid
from .losses import PointCloud

SQRT1_2 = np.sqrt(0.5)


def analytical_curve(n_points: int = 1024, x_range=(0.0, 2 * np.pi)) -> PointCloud:
    """Samples of ``y = sin(x) + 2 sin(2x) + sin(4x)``, uniform in ``x``."""
    x = np.linspace(x_range[0], x_range[1], n_points)
    return PointCloud(np.stack([x, np.sin(x) + 2 * np.sin(2 * x) + np.sin(4 * x)], axis=1))


def helix(n_points: int = 256, radius: float = 1.0, pitch: float = 0.5, turns: float = 2.0) -> PointCloud:
    """Circular helix, points ordered by angle; ``pitch`` is the rise per turn."""
    t = np.linspace(0.0, 2 * np.pi * turns, n_points)
    return PointCloud(np.stack([radius * np.cos(t), radius * np.sin(t), pitch * t / (2 * np.pi)], axis=1))


def quarter_circle() -> NurbsCurve:
    """Exact unit quarter circle as a rational quadratic Bezier."""
    return NurbsCurve([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], [1.0, SQRT1_2, 1.0], KnotVector([0, 0, 0, 1, 1, 1], 2))


def sincos_samples(grid: ParamGrid, x_range=(0.0, 2 * np.pi), y_range=(0.0, 2 * np.pi)) -> np.ndarray:
    """``z = sin(x) cos(y)`` sampled on ``grid`` with ``x`` along u, ``y`` along v.

    Returns ``(m_grid, n_grid, 3)`` in sample order.
    """
    x = x_range[0] + grid.u * (x_range[1] - x_range[0])
    y = y_range[0] + grid.v * (y_range[1] - y_range[0])
    X, Y = np.meshgrid(x, y)
    return np.stack([X, Y, np.sin(X) * np.cos(Y)], axis=-1)


def planar_patch(n: int = 4, m: int = 4, size=(1.0, 1.0), origin=(0.0, 0.0, 0.0), degree: int = 3) -> NurbsSurface:
    """Flat patch in the plane ``z = origin[2]`` with uniform parameterisation."""
    x = origin[0] + np.linspace(0.0, size[0], n)
    y = origin[1] + np.linspace(0.0, size[1], m)
    X, Y = np.meshgrid(x, y, indexing="ij")
    P = np.stack([X, Y, np.full_like(X, origin[2])], axis=-1)
    return NurbsSurface.bspline(P, min(degree, n - 1), min(degree, m - 1))


def cylinder_patch(radius: float = 1.0, length: float = 1.0) -> NurbsSurface:
    """Exact quarter cylinder: rational quadratic arc along u, linear along v.

    Axis is ``y``; the arc runs from ``(r, 0, 0)`` to ``(0, 0, r)`` so the
    normal ``S_u x S_v`` points away from the axis.
    """
    arc = np.array([[radius, 0.0], [radius, radius], [0.0, radius]])
    P = np.zeros((3, 2, 3))
    for j, y in enumerate((0.0, length)):
        P[:, j, 0] = arc[:, 0]
        P[:, j, 1] = y
        P[:, j, 2] = arc[:, 1]
    W = np.array([[1.0, 1.0], [SQRT1_2, SQRT1_2], [1.0, 1.0]])
    return NurbsSurface(P[::-1].copy(), W[::-1].copy(), KnotVector([0, 0, 0, 1, 1, 1], 2), KnotVector([0, 0, 1, 1], 1))


def greville(knots: KnotVector) -> np.ndarray:
    """Greville abscissae; control points placed at ``f(greville)`` approximate ``f``."""
    p, k = knots.degree, knots.knots
    return np.array([k[i + 1 : i + p + 1].mean() for i in range(knots.n_ctrl)])


def function_surface(f, n: int, m: int, x_range, y_range, degree=(3, 3), knots_u=None, knots_v=None, weights=None):
    """Surface whose control net samples ``z = f(x, y)`` at the Greville points."""
    ku = knots_u or KnotVector.uniform(n, degree[0])
    kv = knots_v or KnotVector.uniform(m, degree[1])
    x = x_range[0] + greville(ku) * (x_range[1] - x_range[0])
    y = y_range[0] + greville(kv) * (y_range[1] - y_range[0])
    X, Y = np.meshgrid(x, y, indexing="ij")
    return NurbsSurface(np.stack([X, Y, f(X, Y)], axis=-1), weights, ku, kv)


def double_curve_surface() -> NurbsSurface:
    """Doubly curved 6x6 cubic patch (elliptic dome over a 12 x 10 footprint)."""
    return function_surface(
        lambda x, y: 3.0 - (x - 6.0) ** 2 / 16.0 - (y - 5.0) ** 2 / 12.0, 6, 6, (0.0, 12.0), (0.0, 10.0)
    )


def synthetic_ducky() -> NurbsSurface:
    """Rational 14x13 cubic body-like patch on non-uniform knots.

    Stands in for a scanned geometry whose data is not available.
    """
    ku = KnotVector.from_interior([0.08, 0.15, 0.25, 0.33, 0.45, 0.55, 0.62, 0.72, 0.85, 0.93], 3)
    kv = KnotVector.from_interior([0.1, 0.18, 0.3, 0.38, 0.45, 0.52, 0.66, 0.75, 0.9], 3)
    s, t = greville(ku), greville(kv)
    theta = np.pi * s[:, None]
    phi = np.pi * (t[None, :] - 0.5)
    P = np.stack(
        [
            1.2 * np.cos(theta) * np.cos(phi) * np.ones_like(phi),
            0.8 * np.sin(phi) * np.ones_like(theta),
            0.6 * np.sin(theta) * np.cos(phi) + 0.15 * np.sin(3 * theta) * np.cos(2 * phi),
        ],
        axis=-1,
    )
    W = 1.0 + 0.35 * np.sin(2 * theta) * np.cos(phi)
    return NurbsSurface(P, W, ku, kv)


def c0_assembly() -> list[NurbsSurface]:
    """Two 4x4 cubic patches meeting at a crease along ``x = 0`` ("roof")."""
    y = np.linspace(0.0, 1.0, 4)
    patches = []
    for sign in (-1.0, 1.0):
        x = np.linspace(-0.75, 0.0, 4) if sign < 0 else np.linspace(0.0, 0.75, 4)
        X, Y = np.meshgrid(x, y, indexing="ij")
        Z = 0.5 * np.abs(X) + 0.08 * np.sin(np.pi * Y) * np.abs(X) / 0.75
        patches.append(NurbsSurface.bspline(np.stack([X, Y, Z], axis=-1), 3, 3))
    return patches


def c1_assembly() -> list[NurbsSurface]:
    """Two 6x6 cubic patches of a conic (elliptic-cylinder-like) arch, C1 across ``x = 6``.

    The second patch's first interior control row mirrors the first patch's
    last interior row about the shared edge, so the join is parametrically C1.
    """
    k = KnotVector.uniform(6, 3)
    g = greville(k)
    y = 8.0 * g

    def arch(x, y):
        return 4.0 * np.sqrt(np.clip(1.0 - ((x - 6.0) / 7.5) ** 2, 0.0, None)) + 0.3 * np.sin(np.pi * y / 8.0)

    xa = 6.0 * g
    Xa, Ya = np.meshgrid(xa, y, indexing="ij")
    A = np.stack([Xa, Ya, arch(Xa, Ya)], axis=-1)
    B = A[::-1].copy()
    B[..., 0] = 12.0 - B[..., 0]
    B[0] = A[-1]
    B[1] = 2.0 * A[-1] - A[-2]
    return [NurbsSurface(A, None, k, k), NurbsSurface(B, None, k, k)]


def _naca_thickness(x, t):
    return 5 * t * (0.2969 * np.sqrt(np.clip(x, 0, None)) - 0.1260 * x - 0.3516 * x**2 + 0.2843 * x**3 - 0.1015 * x**4)


def aerofoil_assembly(n: int = 50, m: int = 24, span: float = 4.0, thickness: float = 0.3) -> list[NurbsSurface]:
    """Upper and lower surfaces of a tapered, twisted blade section (50x24 cubic each).

    The two patches share the leading edge, where the control polygons have a
    common vertical tangent (G1). The trailing edge is open.
    """
    k_u = KnotVector.uniform(n, 3)
    k_v = KnotVector.uniform(m, 3)
    s = greville(k_u)
    # cosine clustering towards the leading edge; second point on x = 0 gives a vertical tangent
    x = 0.5 * (1.0 - np.cos(np.pi * s))
    x[1] = 0.0
    zt = _naca_thickness(0.5 * (1.0 - np.cos(np.pi * s)), thickness)
    zt[0] = 0.0
    zt[1] = max(zt[1], 0.5 * zt[2])
    yv = span * greville(k_v)
    chord = 1.0 - 0.3 * yv / span
    twist = np.deg2rad(8.0) * yv / span
    patches = []
    for side in (1.0, -1.0):
        P = np.zeros((n, m, 3))
        for j in range(m):
            cx, cz = chord[j] * x, chord[j] * side * zt
            c, s_ = np.cos(twist[j]), np.sin(twist[j])
            P[:, j, 0] = c * cx - s_ * cz
            P[:, j, 1] = yv[j]
            P[:, j, 2] = s_ * cx + c * cz
        if side < 0:
            P = P[::-1].copy()
        patches.append(NurbsSurface(P, None, k_u, k_v))
    return patches


def flower_cloud(petals: int = 5, amplitude: float = 0.3, pixels: int = 64, scale: float | None = None) -> PointCloud:
    """Pixelated outline of ``r = 1 + a cos(k theta)``, like a thinned binary image.

    Points are pixel centres times the pixel size ``scale`` (default
    ``1 / pixels``, so the image spans the unit square), unordered.
    """
    theta = np.linspace(0.0, 2 * np.pi, 20 * pixels, endpoint=False)
    r = 1.0 + amplitude * np.cos(petals * theta)
    half = pixels / 2.0
    px = np.floor(half + 0.45 * pixels * r * np.cos(theta) / (1 + amplitude))
    py = np.floor(half + 0.45 * pixels * r * np.sin(theta) / (1 + amplitude))
    cells = np.unique(np.stack([px, py], axis=1), axis=0)
    return PointCloud((cells + 0.5) * (1.0 / pixels if scale is None else scale))
