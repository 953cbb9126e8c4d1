"""Offsetting of multi-patch NURBS assemblies.

The offset target is the base surface moved along its unit normal. Along
shared edges the normals of the adjacent patches are averaged so that the
offset cloud stays connected. The offset surfaces are then fitted with the
base parameterisation, with the control points of shared edges tied together
after every optimiser step. A control-point offset serves as the baseline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import NurbsSurface, ParamGrid
from .core.autodiff import backward_grid, forward_grid
from .core.geometry import grid_normals
from .errors import AmbiguousEdgeError, ContractError, FoldError
from .fit import FitConfig, FitReport, run_fit
from .losses import PointCloud, chamfer_mean
from .optim import SharedEdgeConstraint

SIDES = ("u0", "u1", "v0", "v1")
EDGE_RTOL = 1e-6
FOLD_EPS = 1e-8
FACET_EPS = 1e-14


def side_indices(shape, side: str) -> list[tuple[int, int]]:
    """Control indices ``(i, j)`` along one boundary, in increasing edge parameter."""
    n, m = shape[:2]
    if side == "u0":
        return [(0, j) for j in range(m)]
    if side == "u1":
        return [(n - 1, j) for j in range(m)]
    if side == "v0":
        return [(i, 0) for i in range(n)]
    if side == "v1":
        return [(i, m - 1) for i in range(n)]
    raise ContractError(f"unknown side {side!r}; expected one of {SIDES}")


def _edge_knots(surface: NurbsSurface, side: str):
    return surface.knots_v if side in ("u0", "u1") else surface.knots_u


@dataclass(frozen=True)
class SharedEdge:
    """Boundary ``sides[0]`` of patch ``patches[0]`` coincides with ``sides[1]`` of ``patches[1]``.

    ``index_map`` pairs control indices of the two patches; ``reversed`` says
    the edge parameter runs in opposite directions.
    """

    patches: tuple[int, int]
    sides: tuple[str, str]
    index_map: tuple
    reversed: bool = False

    def mapped(self, patch: int, ij: tuple[int, int]):
        """Partner of control index ``ij`` of ``patch`` (either side), or None."""
        for a, b in self.index_map:
            if patch == self.patches[0] and tuple(ij) == a:
                return self.patches[1], b
            if patch == self.patches[1] and tuple(ij) == b:
                return self.patches[0], a
        return None


def _bbox(surfaces):
    P = np.concatenate([s.points.reshape(-1, s.dim) for s in surfaces])
    return P.min(axis=0), P.max(axis=0)


@dataclass(frozen=True)
class PatchAssembly:
    patches: tuple
    shared_edges: tuple = ()

    def __post_init__(self):
        patches = tuple(self.patches)
        if not patches:
            raise ContractError("an assembly needs at least one patch")
        for k, s in enumerate(patches):
            if not isinstance(s, NurbsSurface) or s.dim != 3:
                raise ContractError(f"patch {k} must be a 3-D NurbsSurface")
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "shared_edges", tuple(self.shared_edges))
        eps = self.eps_edge
        for e in self.shared_edges:
            a, b = e.patches
            if not (0 <= a < len(patches) and 0 <= b < len(patches)):
                raise ContractError(f"shared edge refers to missing patch {e.patches}")
            for ij, kl in e.index_map:
                gap = np.linalg.norm(patches[a].points[ij] - patches[b].points[kl])
                if gap > eps:
                    raise ContractError(f"shared control points {a}{ij} and {b}{kl} are {gap:.3g} apart (> {eps:.3g})")

    @property
    def bbox(self):
        return _bbox(self.patches)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @property
    def eps_edge(self) -> float:
        return EDGE_RTOL * self.diagonal

    @property
    def min_extent(self) -> float:
        """Smallest axis-aligned extent of the control net box that is not degenerate.

        Flat assemblies have one zero extent; the next smallest is used then.
        """
        lo, hi = self.bbox
        ext = np.sort(hi - lo)
        ext = ext[ext > 1e-9 * max(self.diagonal, 1e-300)]
        if ext.size == 0:
            raise ContractError("assembly has a degenerate bounding box")
        return float(ext[0])

    def groups(self) -> list[list[tuple[int, int, int]]]:
        """Shared control points as groups of ``(patch, i, j)``, sorted."""
        parent: dict = {}

        def find(x):
            while parent.setdefault(x, x) != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in self.shared_edges:
            a, b = e.patches
            for ij, kl in e.index_map:
                ra, rb = find((a, *ij)), find((b, *kl))
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        out: dict = {}
        for x in list(parent):
            out.setdefault(find(x), []).append(x)
        return sorted(sorted(g) for g in out.values() if len(g) > 1)

    def replace_patches(self, patches) -> "PatchAssembly":
        return PatchAssembly(tuple(patches), self.shared_edges)


def _match(sa: NurbsSurface, side_a, sb: NurbsSurface, side_b, eps):
    ia, ib = side_indices(sa.shape, side_a), side_indices(sb.shape, side_b)
    if len(ia) != len(ib):
        return None
    ka, kb = _edge_knots(sa, side_a), _edge_knots(sb, side_b)
    if ka.degree != kb.degree:
        return None
    A = np.array([sa.points[ij] for ij in ia])
    wa = np.array([sa.weights[ij] for ij in ia])
    for rev in (False, True):
        jb = ib[::-1] if rev else ib
        B = np.array([sb.points[ij] for ij in jb])
        wb = np.array([sb.weights[ij] for ij in jb])
        knots_b = 1.0 - kb.knots[::-1] if rev else kb.knots
        if (
            np.max(np.linalg.norm(A - B, axis=1)) <= eps
            and np.allclose(ka.knots, knots_b, rtol=0, atol=1e-12)
            and np.allclose(wa, wb, rtol=1e-9, atol=0)
        ):
            return tuple(zip(ia, jb)), rev
    return None


def detect_shared_edges(patches) -> PatchAssembly:
    """Find coincident boundary rows/columns of control points between patches.

    Two boundaries match when all their control points agree within
    ``eps_edge``, the knot vectors along the edge agree (mirrored for a
    reversed edge) and the weights agree.
    """
    patches = tuple(patches)
    if not patches:
        raise ContractError("an assembly needs at least one patch")
    eps = EDGE_RTOL * float(np.linalg.norm(np.subtract(*_bbox(patches)[::-1])))
    found: dict = {}
    for a in range(len(patches)):
        for b in range(a + 1, len(patches)):
            for side_a in SIDES:
                for side_b in SIDES:
                    hit = _match(patches[a], side_a, patches[b], side_b, eps)
                    if hit is not None:
                        found.setdefault((a, side_a), []).append((b, side_b, hit))
                        found.setdefault((b, side_b), []).append((a, side_a, None))
    for key, hits in found.items():
        if len(hits) > 1:
            cands = [f"patch {k} side {s}" for k, s, _ in hits]
            raise AmbiguousEdgeError(f"patch {key[0]} side {key[1]} matches several edges: {cands}", cands)
    edges = []
    for (a, side_a), hits in sorted(found.items()):
        b, side_b, hit = hits[0]
        if hit is not None:
            index_map, rev = hit
            edges.append(SharedEdge((a, b), (side_a, side_b), index_map, rev))
    return PatchAssembly(patches, tuple(edges))


def _grids(assembly: PatchAssembly, grid) -> list[ParamGrid]:
    if isinstance(grid, ParamGrid):
        return [grid] * len(assembly.patches)
    grids = list(grid)
    if len(grids) != len(assembly.patches):
        raise ContractError("need one grid per patch")
    return grids


def _side_samples(grid: ParamGrid, side: str) -> list[tuple[int, int]]:
    """Sample indices ``(b, a)`` on a parametric boundary, in increasing edge parameter."""
    A, B = grid.n_grid, grid.m_grid
    if side == "u0":
        return [(b, 0) for b in range(B)]
    if side == "u1":
        return [(b, A - 1) for b in range(B)]
    if side == "v0":
        return [(0, a) for a in range(A)]
    return [(B - 1, a) for a in range(A)]


def edge_sample_groups(assembly: PatchAssembly, grid) -> list[list[tuple[int, int, int]]]:
    """Groups of coincident boundary samples ``(patch, b, a)`` across shared edges."""
    grids = _grids(assembly, grid)
    parent: dict = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in assembly.shared_edges:
        (pa, pb), (sa, sb) = e.patches, e.sides
        ga, gb = grids[pa], grids[pb]
        xa, xb = _side_samples(ga, sa), _side_samples(gb, sb)
        if len(xa) != len(xb):
            raise ContractError(f"grids disagree in sample count along shared edge {e.patches}")
        if e.reversed:
            xb = xb[::-1]
        for s, t in zip(xa, xb):
            ra, rb = find((pa, *s)), find((pb, *t))
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    out: dict = {}
    for x in list(parent):
        out.setdefault(find(x), []).append(x)
    return sorted(sorted(g) for g in out.values() if len(g) > 1)


def consolidated_normals(assembly: PatchAssembly, grid):
    """Per-patch samples and unit normals, averaged across shared edges.

    Returns two lists of ``(m_grid, n_grid, 3)`` arrays. Edge normals are the
    normalised mean of the adjacent patches' normals; a mean shorter than
    1e-8 means the patches fold onto each other.
    """
    grids = _grids(assembly, grid)
    samples, normals = [], []
    for s, g in zip(assembly.patches, grids):
        _, N = grid_normals(s, g)
        samples.append(forward_grid(s, g)[0])
        normals.append(N.copy())
    for group in edge_sample_groups(assembly, grids):
        avg = np.mean([normals[k][b, a] for k, b, a in group], axis=0)
        norm = np.linalg.norm(avg)
        if norm < FOLD_EPS:
            raise FoldError(f"normals cancel on shared edge samples {group[:4]}")
        for k, b, a in group:
            normals[k][b, a] = avg / norm
    return samples, normals


def offset_samples(assembly: PatchAssembly, d: float, grid) -> list[np.ndarray]:
    """``S + d n`` per patch, in sample order."""
    S, N = consolidated_normals(assembly, grid)
    return [s + d * n for s, n in zip(S, N)]


def offset_point_cloud(assembly: PatchAssembly, d: float, grid) -> PointCloud:
    return PointCloud(np.concatenate([x.reshape(-1, 3) for x in offset_samples(assembly, d, grid)]))


def _facet_vector_areas(P: np.ndarray) -> np.ndarray:
    # diagonal cross product: (S_u + S_v) x (S_v - S_u) = 2 S_u x S_v
    d1 = P[1:, 1:] - P[:-1, :-1]
    d2 = P[:-1, 1:] - P[1:, :-1]
    return 0.5 * np.cross(d1, d2)


def control_mesh_normals(assembly: PatchAssembly) -> list[np.ndarray]:
    """Area-weighted averages of incident control-mesh facet normals, per control point.

    Shared control points pool the facets of every patch they belong to.
    Degenerate facets are skipped with a warning.
    """
    sums = []
    scale = assembly.diagonal**2
    for k, s in enumerate(assembly.patches):
        A = _facet_vector_areas(np.asarray(s.points))
        area = np.linalg.norm(A, axis=-1)
        bad = area <= FACET_EPS * scale
        if bad.any():
            warnings.warn(f"patch {k}: skipping {int(bad.sum())} degenerate control-mesh facets", stacklevel=2)
            A = np.where(bad[..., None], 0.0, A)
        acc = np.zeros(s.points.shape)
        acc[:-1, :-1] += A
        acc[1:, :-1] += A
        acc[:-1, 1:] += A
        acc[1:, 1:] += A
        sums.append(acc)
    for group in assembly.groups():
        total = np.sum([sums[k][i, j] for k, i, j in group], axis=0)
        for k, i, j in group:
            sums[k][i, j] = total
    out = []
    for k, acc in enumerate(sums):
        norm = np.linalg.norm(acc, axis=-1)
        if np.any(norm < FOLD_EPS * scale):
            raise FoldError(f"patch {k}: control point without a usable facet normal")
        out.append(acc / norm[..., None])
    return out


def cp_offset_baseline(assembly: PatchAssembly, d: float) -> PatchAssembly:
    """Move every control point by ``d`` along its control-mesh normal."""
    normals = control_mesh_normals(assembly)
    moved = [s.replace(points=np.asarray(s.points) + d * n) for s, n in zip(assembly.patches, normals)]
    return assembly.replace_patches(moved)


OFFSET_CONFIG = FitConfig(num_control_points=(4, 4), degrees=(3, 3), loss="mse", optimizer="momentum", mode="nubs")


def least_squares_step(assembly: PatchAssembly, grid) -> float:
    """``1 / L`` for the mean squared paired loss with fixed weights.

    The Hessian with respect to one patch's control points is ``2 R^T R / K``
    (``K`` samples); rational basis functions sum to one, so its row sums are
    ``2 mean_k R_kij`` and their maximum bounds the largest eigenvalue.
    """
    bound = 0.0
    for s, g in zip(assembly.patches, _grids(assembly, grid)):
        S, tape = forward_grid(s, g)
        colsum = backward_grid(s, tape, np.ones_like(S)).d_points[..., 0]
        bound = max(bound, 2.0 * float(colsum.max()) / (S.size // S.shape[-1]))
    return 1.0 / bound


@dataclass(frozen=True)
class OffsetJob:
    """Offset ``assembly`` by ``distance``.

    ``density`` is the fitting grid per patch direction. ``None`` means 20, or
    twice the largest control count along that direction if that is more, so
    the fit is never underdetermined. The reported metric uses
    ``dense_factor`` times as many samples per direction.
    """

    assembly: PatchAssembly
    distance: float
    density: int | tuple | None = None
    config: FitConfig = field(default=OFFSET_CONFIG)
    dense_factor: int = 5

    def __post_init__(self):
        if not np.isfinite(self.distance):
            raise ContractError("offset distance must be finite")
        if self.dense_factor < 1:
            raise ContractError("dense_factor must be >= 1")

    @property
    def grid(self) -> ParamGrid:
        if self.density is None:
            n = max(20, 2 * max(p.shape[0] for p in self.assembly.patches))
            m = max(20, 2 * max(p.shape[1] for p in self.assembly.patches))
        elif np.isscalar(self.density):
            n = m = self.density
        else:
            n, m = self.density
        return ParamGrid(int(n), int(m))

    @property
    def dense_grid(self) -> ParamGrid:
        return self.grid.dense(self.dense_factor)


class OffsetResult(NamedTuple):
    fitted: PatchAssembly
    normalized_chamfer: float
    baseline: PatchAssembly
    baseline_chamfer: float
    report: FitReport


def assembly_samples(assembly: PatchAssembly, grid) -> np.ndarray:
    return np.concatenate([forward_grid(s, g)[0].reshape(-1, 3) for s, g in zip(assembly.patches, _grids(assembly, grid))])


def normalized_offset_error(candidate: PatchAssembly, reference: PatchAssembly, d: float, grid) -> float:
    """Mean Chamfer between ``candidate`` and the exact offset of ``reference``, over its min extent."""
    target = offset_point_cloud(reference, d, grid)
    return chamfer_mean(assembly_samples(candidate, grid), target) / reference.min_extent


def fit_offset_surfaces(job: OffsetJob, return_report: bool = False):
    """Fit offset patches with the base parameterisation.

    Returns ``(fitted assembly, normalized Chamfer)``; with ``return_report`` an
    :class:`OffsetResult` that also carries the control-point baseline.
    """
    asm, d = job.assembly, float(job.distance)
    grid = job.grid
    targets = offset_samples(asm, d, grid)
    hooks = [SharedEdgeConstraint(g) for g in [asm.groups()] if g]
    config = job.config
    if config.learning_rate is None and config.loss == "mse" and config.optimizer in ("sgd", "momentum"):
        config = config.replace(learning_rate=least_squares_step(asm, grid))
    report = run_fit(list(asm.patches), targets, config, [grid] * len(asm.patches), hooks=hooks)
    fitted_patches = report.fitted if isinstance(report.fitted, list) else [report.fitted]
    fitted = asm.replace_patches(fitted_patches)
    value = normalized_offset_error(fitted, asm, d, job.dense_grid)
    if not return_report:
        return fitted, value
    baseline = cp_offset_baseline(asm, d)
    return OffsetResult(fitted, value, baseline, normalized_offset_error(baseline, asm, d, job.dense_grid), report)


def max_edge_gap(assembly: PatchAssembly, grid) -> float:
    """Largest distance between coincident boundary samples of adjacent patches."""
    grids = _grids(assembly, grid)
    S = [forward_grid(s, g)[0] for s, g in zip(assembly.patches, grids)]
    gap = 0.0
    for group in edge_sample_groups(assembly, grids):
        pts = np.array([S[k][b, a] for k, b, a in group])
        gap = max(gap, float(np.max(np.linalg.norm(pts - pts[0], axis=1))))
    return gap
