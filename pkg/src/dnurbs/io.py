"""Plain-text formats: point clouds, NURBS documents, quad meshes, loss histories.

Writers are deterministic (fixed key order and layout, ``%.17g`` numbers), so
equal inputs give byte-identical files and finite doubles round-trip exactly.
"""

from __future__ import annotations

import json
import math
import os
import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import KnotVector, NurbsCurve, NurbsSurface
from .errors import ContractError, ParseError, ValidationError
from .losses import PointCloud
from .offset import SIDES, PatchAssembly, SharedEdge

FORMAT = "dnurbs"
VERSION = 1
KINDS = ("curve", "surface", "assembly")


def _read_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        return Path(source).read_bytes()
    data = source.read()
    return data.encode() if isinstance(data, str) else data


def _decode(source) -> str:
    try:
        return _read_bytes(source).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 text: {exc}") from None


def _emit(data: bytes, dest):
    if dest is None:
        return data
    if isinstance(dest, (str, os.PathLike)):
        Path(dest).write_bytes(data)
    else:
        dest.write(data)
    return data


def fmt(x: float) -> str:
    """17 significant digits; always reads back as a float (``-0.0`` keeps its sign)."""
    x = float(x)
    if not math.isfinite(x):
        raise ContractError(f"cannot serialise non-finite value {x}")
    t = "%.17g" % x
    if not any(c in t for c in ".en"):
        t += ".0"
    return t


# ---------------------------------------------------------------- point clouds


def read_point_cloud(source) -> PointCloud:
    """One point per line, 2 or 3 whitespace-separated numbers; ``#`` starts a comment line."""
    rows, dim = [], None
    for lineno, line in enumerate(_decode(source).splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split()
        try:
            row = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"non-numeric field in {text!r}", lineno) from None
        if dim is None:
            if len(row) not in (2, 3):
                raise ParseError(f"expected 2 or 3 coordinates, got {len(row)}", lineno)
            dim = len(row)
        elif len(row) != dim:
            raise ParseError(f"expected {dim} coordinates like the first point, got {len(row)}", lineno)
        if not all(math.isfinite(v) for v in row):
            raise ParseError("non-finite coordinate", lineno)
        rows.append(row)
    if not rows:
        raise ParseError("no points in input")
    return PointCloud(np.array(rows))


def write_point_cloud(cloud, dest=None) -> bytes:
    P = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    return _emit("".join(" ".join(fmt(v) for v in row) + "\n" for row in P).encode(), dest)


# ---------------------------------------------------------------- NURBS documents


@dataclass(frozen=True, eq=False)
class NurbsDocument:
    """A curve, a surface or an assembly, as stored on disk.

    ``weighted`` records, per patch, whether the file carried weights; a
    document without weights describes a plain B-spline.
    """

    geometry: object
    weighted: tuple = (True,)
    version: int = VERSION

    @property
    def kind(self) -> str:
        if isinstance(self.geometry, NurbsCurve):
            return "curve"
        if isinstance(self.geometry, NurbsSurface):
            return "surface"
        return "assembly"

    @property
    def patches(self) -> tuple:
        return self.geometry.patches if self.kind == "assembly" else (self.geometry,)


def _num_list(values) -> str:
    return "[" + ", ".join(fmt(v) for v in values) + "]"


def _rows(rows, indent: str) -> str:
    inner = ",\n".join(indent + "  " + _num_list(r) for r in rows)
    return "[\n" + inner + "\n" + indent + "]"


def _geometry_lines(g, weighted: bool, indent: str) -> list[str]:
    out = []
    if isinstance(g, NurbsCurve):
        out += [f'"dim": {g.dim}', f'"degree": {g.degree}', f'"knots": {_num_list(g.knots.knots)}']
        out.append(f'"points": {_rows(g.points, indent)}')
        if weighted:
            out.append(f'"weights": {_num_list(g.weights)}')
        return out
    n, m = g.shape
    out += [
        f'"dim": {g.dim}',
        f'"shape": [{n}, {m}]',
        f'"degree_u": {g.degree_u}',
        f'"degree_v": {g.degree_v}',
        f'"knots_u": {_num_list(g.knots_u.knots)}',
        f'"knots_v": {_num_list(g.knots_v.knots)}',
        f'"points": {_rows(g.points.reshape(n * m, g.dim), indent)}',
    ]
    if weighted:
        out.append(f'"weights": {_num_list(g.weights.ravel())}')
    return out


def _object(lines: list[str], indent: str) -> str:
    return "{\n" + ",\n".join(indent + "  " + s for s in lines) + "\n" + indent + "}"


def write_nurbs_document(doc, dest=None) -> bytes:
    """Serialise a :class:`NurbsDocument` (or bare curve, surface or assembly)."""
    if not isinstance(doc, NurbsDocument):
        n = len(doc.patches) if isinstance(doc, PatchAssembly) else 1
        doc = NurbsDocument(doc, (True,) * n)
    head = [f'"format": "{FORMAT}"', f'"version": {doc.version}', f'"kind": "{doc.kind}"']
    if doc.kind != "assembly":
        body = _geometry_lines(doc.geometry, doc.weighted[0], "  ")
    else:
        patches = [
            _object(_geometry_lines(p, w, "      "), "    ") for p, w in zip(doc.geometry.patches, doc.weighted)
        ]
        edges = []
        for e in doc.geometry.shared_edges:
            pairs = ", ".join(f"[{a[0]}, {a[1]}, {b[0]}, {b[1]}]" for a, b in e.index_map)
            edges.append(
                "{"
                f'"patches": [{e.patches[0]}, {e.patches[1]}], "sides": ["{e.sides[0]}", "{e.sides[1]}"], '
                f'"reversed": {"true" if e.reversed else "false"}, "map": [{pairs}]'
                "}"
            )
        body = [
            '"patches": [\n' + ",\n".join("    " + p for p in patches) + "\n  ]",
            '"shared_edges": [' + ("\n" + ",\n".join("    " + e for e in edges) + "\n  " if edges else "") + "]",
        ]
    return _emit((_object(head + body, "") + "\n").encode(), dest)


class _Locator:
    """Line numbers of ``"key":`` occurrences, for diagnostics."""

    def __init__(self, text: str):
        self.hits: dict[str, list[int]] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            for m in re.finditer(r'"([A-Za-z_]+)"\s*:', line):
                self.hits.setdefault(m.group(1), []).append(lineno)

    def line(self, key: str, occurrence: int = 0):
        found = self.hits.get(key, [])
        return found[occurrence] if occurrence < len(found) else (found[-1] if found else None)


def _field(obj, key, where: _Locator, k: int, required=True):
    if key not in obj:
        if required:
            raise ValidationError(key, "missing required field", where.line("kind"))
        return None
    return obj[key]


def _int_field(obj, key, where, k):
    v = _field(obj, key, where, k)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ValidationError(key, f"expected an integer, got {v!r}", where.line(key, k))
    return v


def _float_array(obj, key, where, k, shape_hint=None, required=True):
    v = _field(obj, key, where, k, required)
    if v is None:
        return None
    try:
        arr = np.array(v, dtype=np.float64)
    except (TypeError, ValueError):
        raise ValidationError(key, "expected numbers", where.line(key, k)) from None
    if arr.dtype == object or (shape_hint is not None and arr.ndim != shape_hint):
        raise ValidationError(key, f"expected a {shape_hint}-d numeric array", where.line(key, k))
    if not np.all(np.isfinite(arr)):
        raise ValidationError(key, "non-finite value", where.line(key, k))
    return arr


def _knots(obj, key, degree, n_ctrl, where, k):
    arr = _float_array(obj, key, where, k, 1)
    try:
        kv = KnotVector(arr, degree)
    except ContractError as exc:
        raise ValidationError(key, str(exc), where.line(key, k)) from None
    if n_ctrl is not None and kv.n_ctrl != n_ctrl:
        raise ValidationError(key, f"defines {kv.n_ctrl} control points, document has {n_ctrl}", where.line(key, k))
    return kv


def _weights(obj, count, where, k, shape):
    W = _float_array(obj, "weights", where, k, 1, required=False)
    if W is None:
        warnings.warn("document has no weights; using all-ones (B-spline)", stacklevel=3)
        return np.ones(shape), False
    if W.size != count:
        raise ValidationError("weights", f"expected {count} weights, got {W.size}", where.line("weights", k))
    if np.any(W <= 0):
        raise ValidationError("weights", "weights must be strictly positive", where.line("weights", k))
    return W.reshape(shape), True


def _parse_geometry(obj, kind, where: _Locator, k: int):
    if not isinstance(obj, dict):
        raise ValidationError("patches", "each patch must be an object", where.line("patches"))
    dim = _int_field(obj, "dim", where, k)
    if dim not in (2, 3):
        raise ValidationError("dim", f"must be 2 or 3, got {dim}", where.line("dim", k))
    P = _float_array(obj, "points", where, k, 2)
    if P.shape[1] != dim:
        raise ValidationError("points", f"rows must have {dim} coordinates, got {P.shape[1]}", where.line("points", k))
    if kind == "curve":
        p = _int_field(obj, "degree", where, k)
        kv = _knots(obj, "knots", p, P.shape[0], where, k)
        W, weighted = _weights(obj, P.shape[0], where, k, (P.shape[0],))
        return NurbsCurve(P, W, kv), weighted
    shape = _field(obj, "shape", where, k)
    if not (isinstance(shape, list) and len(shape) == 2 and all(isinstance(s, int) and s >= 1 for s in shape)):
        raise ValidationError("shape", f"expected [n, m] positive integers, got {shape!r}", where.line("shape", k))
    n, m = shape
    if P.shape[0] != n * m:
        raise ValidationError("points", f"expected {n * m} rows for shape {shape}, got {P.shape[0]}", where.line("points", k))
    p = _int_field(obj, "degree_u", where, k)
    q = _int_field(obj, "degree_v", where, k)
    ku = _knots(obj, "knots_u", p, n, where, k)
    kv = _knots(obj, "knots_v", q, m, where, k)
    W, weighted = _weights(obj, n * m, where, k, (n, m))
    return NurbsSurface(P.reshape(n, m, dim), W, ku, kv), weighted


def _parse_edge(e, n_patches, where, k):
    line = where.line("map", k)
    try:
        (a, b), (sa, sb) = e["patches"], e["sides"]
        rev = e.get("reversed", False)
        pairs = tuple(((int(r[0]), int(r[1])), (int(r[2]), int(r[3]))) for r in e["map"])
    except (KeyError, TypeError, ValueError, IndexError):
        raise ValidationError("shared_edges", "entry needs patches, sides and a map of [i, j, k, l] rows", line) from None
    if not (isinstance(a, int) and isinstance(b, int) and 0 <= a < n_patches and 0 <= b < n_patches):
        raise ValidationError("shared_edges", f"patch indices {e['patches']} out of range", line)
    if sa not in SIDES or sb not in SIDES or not isinstance(rev, bool):
        raise ValidationError("shared_edges", "sides must be u0/u1/v0/v1 and reversed a boolean", line)
    return SharedEdge((a, b), (sa, sb), pairs, rev)


def read_nurbs_document(source) -> NurbsDocument:
    """Parse and validate a document; violations raise with field name and line."""
    text = _decode(source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    where = _Locator(text)
    if not isinstance(data, dict):
        raise ValidationError("document", "top level must be an object", 1)
    if data.get("format") != FORMAT:
        raise ValidationError("format", f"expected {FORMAT!r}, got {data.get('format')!r}", where.line("format"))
    if data.get("version") != VERSION:
        raise ValidationError("version", f"unsupported version {data.get('version')!r}", where.line("version"))
    kind = data.get("kind")
    if kind not in KINDS:
        raise ValidationError("kind", f"expected one of {KINDS}, got {kind!r}", where.line("kind"))
    try:
        if kind != "assembly":
            g, weighted = _parse_geometry(data, kind, where, 0)
            return NurbsDocument(g, (weighted,))
        patches = data.get("patches")
        if not isinstance(patches, list) or not patches:
            raise ValidationError("patches", "expected a nonempty list", where.line("patches"))
        parsed = [_parse_geometry(p, "surface", where, k) for k, p in enumerate(patches)]
        edges_raw = data.get("shared_edges", [])
        if not isinstance(edges_raw, list):
            raise ValidationError("shared_edges", "expected a list", where.line("shared_edges"))
        edges = [_parse_edge(e, len(parsed), where, k) for k, e in enumerate(edges_raw)]
        try:
            asm = PatchAssembly(tuple(g for g, _ in parsed), tuple(edges))
        except ContractError as exc:
            raise ValidationError("shared_edges", str(exc), where.line("shared_edges")) from None
        return NurbsDocument(asm, tuple(w for _, w in parsed))
    except ValidationError:
        raise
    except ContractError as exc:
        raise ValidationError(kind, str(exc), where.line("points")) from None


# ---------------------------------------------------------------- meshes


def mesh_text(samples) -> str:
    """OBJ text for one grid ``(m_grid, n_grid, dim)``, a list of grids, or a curve ``(N, dim)``.

    Quads run ``(a, b) -> (a+1, b) -> (a+1, b+1) -> (a, b+1)``, counterclockwise
    about ``S_u x S_v``. 2-D points get ``z = 0``; curves become one polyline.
    Grids thinner than 2x2 (and single-point curves) are written as bare
    vertices.
    """
    grids = samples if isinstance(samples, (list, tuple)) else [samples]
    lines, base = [], 0
    for S in grids:
        S = np.asarray(S, dtype=np.float64)
        if S.shape[-1] == 2:
            S = np.concatenate([S, np.zeros(S.shape[:-1] + (1,))], axis=-1)
        if S.ndim == 2:
            lines += ["v " + " ".join(fmt(c) for c in p) for p in S]
            if S.shape[0] >= 2:
                lines.append("l " + " ".join(str(base + k + 1) for k in range(S.shape[0])))
            base += S.shape[0]
            continue
        B, A = S.shape[:2]
        lines += ["v " + " ".join(fmt(c) for c in p) for p in S.reshape(-1, 3)]
        for b in range(B - 1):
            for a in range(A - 1):
                v0 = base + b * A + a + 1
                lines.append(f"f {v0} {v0 + 1} {v0 + A + 1} {v0 + A}")
        base += A * B
    return "\n".join(lines) + "\n"


def export_mesh(samples, path) -> None:
    Path(path).write_text(mesh_text(samples))


def read_mesh(source):
    """Vertices ``(V, 3)`` and faces (lists of 0-based indices) of an OBJ written by :func:`export_mesh`."""
    verts, faces = [], []
    for lineno, line in enumerate(_decode(source).splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] in ("f", "l"):
                faces.append([int(x) - 1 for x in parts[1:]])
        except ValueError:
            raise ParseError(f"bad mesh line {line!r}", lineno) from None
    return np.array(verts), faces


# ---------------------------------------------------------------- loss history

HISTORY_HEADER = "iteration,loss,chamfer"


def loss_history_text(report) -> str:
    """CSV with one row per recorded iteration; the chamfer column is empty for paired losses."""
    rows = [HISTORY_HEADER]
    ch = report.chamfer_history
    for k, loss in enumerate(report.history):
        rows.append(f"{k},{fmt(loss)},{fmt(ch[k]) if k < len(ch) else ''}")
    return "\n".join(rows) + "\n"


def write_loss_history(report, path) -> None:
    Path(path).write_text(loss_history_text(report))


def read_loss_history(source):
    """``(iterations, losses, chamfers)`` arrays; missing chamfers read as NaN."""
    lines = _decode(source).splitlines()
    if not lines or lines[0].strip() != HISTORY_HEADER:
        raise ParseError(f"expected header {HISTORY_HEADER!r}", 1)
    its, losses, chs = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            its.append(int(parts[0]))
            losses.append(float(parts[1]))
            chs.append(float(parts[2]) if parts[2] else math.nan)
        except (ValueError, IndexError):
            raise ParseError(f"bad history row {line!r}", lineno) from None
    return np.array(its, dtype=np.int64), np.array(losses), np.array(chs)
