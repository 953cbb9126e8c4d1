"""Command-line driver.

Every run writes a JSON manifest next to its outputs; ``dnurbs replay`` reruns
it. Metrics go to standard output as ``key=value`` lines. Exit codes: 0 ok,
2 bad input, 3 evaluation error, 4 aborted fit, 5 folded offset, 6 failed
gradient check.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, io
from .core import ParamGrid, kernels
from .core.autodiff import forward_grid
from .errors import (
    ContractError,
    DomainError,
    EvaluationError,
    FitAbortedError,
    FoldError,
    ParseError,
)
from .fit import FitConfig, fit_curve, fit_surface
from .gradcheck import TOLERANCE, corrupted_backward, gradcheck
from .offset import OFFSET_CONFIG, OffsetJob, PatchAssembly, detect_shared_edges, fit_offset_surfaces
from .optim import DEFAULT_LR

EXIT_OK, EXIT_PARSE, EXIT_EVAL, EXIT_FIT, EXIT_FOLD, EXIT_GRAD = 0, 2, 3, 4, 5, 6
INIT_NAMES = {"bbox": "uniform-bbox", "gauss": "gaussian", "subsample": "subsample-target"}
# flags that never affect outputs, so they stay out of manifests
RUNTIME_FLAGS = ("threads", "backend", "manifest", "command", "recorded", "path_map")


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _counts(text: str, n: int, name: str) -> tuple:
    parts = text.lower().replace(",", "x").split("x")
    try:
        vals = tuple(int(p) for p in parts)
    except ValueError:
        raise _Fail(EXIT_PARSE, f"--{name}: expected {'N' if n == 1 else 'NxM'}, got {text!r}") from None
    if len(vals) == 1 and n == 2:
        vals = vals * 2
    if len(vals) != n or min(vals) < 1:
        raise _Fail(EXIT_PARSE, f"--{name}: expected {n} positive integer(s), got {text!r}")
    return vals


class _Outputs:
    """Write outputs to temporary names and publish them only on success."""

    def __init__(self):
        self.pending: list[tuple[Path, Path]] = []

    def path(self, target) -> Path:
        target = Path(target)
        tmp = target.with_name(f".{target.name}.partial")
        self.pending.append((tmp, target))
        return tmp

    def commit(self):
        for tmp, target in self.pending:
            if tmp.exists():
                os.replace(tmp, target)

    def discard(self):
        for tmp, _ in self.pending:
            tmp.unlink(missing_ok=True)


def _manifest_path(args, primary) -> Path:
    return Path(args.manifest) if args.manifest else Path(str(primary) + ".manifest.json")


def _write_manifest(args, outputs: _Outputs, primary, inputs: dict, out_paths: dict, resolved: dict):
    arguments = {k: v for k, v in sorted(vars(args).items()) if k not in RUNTIME_FLAGS}
    # a replay into another directory records the original paths, so its manifest matches byte for byte
    back = getattr(args, "path_map", None) or {}
    data = {
        "tool": "dnurbs",
        "version": __version__,
        "command": args.command,
        "arguments": getattr(args, "recorded", None) or arguments,
        "resolved": resolved,
        "inputs": inputs,
        "outputs": {k: back.get(v, v) for k, v in out_paths.items()},
    }
    outputs.path(_manifest_path(args, primary)).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _fmt(x) -> str:
    return io.fmt(x)


# ---------------------------------------------------------------- commands


def cmd_eval(args) -> int:
    doc = io.read_nurbs_document(args.document)
    patches = [doc.geometry] if doc.kind != "assembly" else list(doc.patches)
    res = _counts(args.res, 1 if doc.kind == "curve" else 2, "res")
    grid = ParamGrid(*res)
    samples = []
    for g in patches:
        S, _ = forward_grid(g, grid)
        samples.append(S)
    outputs = _Outputs()
    try:
        outputs.path(args.out).write_text(io.mesh_text(samples if len(samples) > 1 else samples[0]))
        _write_manifest(args, outputs, args.out, {"document": args.document}, {"mesh": args.out}, {"res": list(res)})
        outputs.commit()
    finally:
        outputs.discard()
    print(f"samples={sum(s.size // s.shape[-1] for s in samples)}")
    return EXIT_OK


def _fit_config(args, is_curve: bool, knots_doc=None) -> FitConfig:
    n = 1 if is_curve else 2
    kw = dict(
        loss=args.loss,
        reg_weight=args.lam,
        optimizer=args.opt,
        learning_rate=args.lr if args.lr is not None else DEFAULT_LR[args.opt],
        momentum=args.momentum,
        mode=args.mode,
        init=INIT_NAMES[args.init],
        max_iters=args.iters,
        tol=args.tol,
        window=args.window,
        seed=args.seed,
        chamfer_reduction=args.reduction,
        weight_lr_scale=args.weight_lr_scale,
    )
    if knots_doc is not None:
        g = knots_doc.patches[0]
        if is_curve:
            kw.update(num_control_points=(g.shape[0],), degrees=(g.degree,), knots_u=tuple(g.knots.knots))
        else:
            kw.update(
                num_control_points=g.shape,
                degrees=(g.degree_u, g.degree_v),
                knots_u=tuple(g.knots_u.knots),
                knots_v=tuple(g.knots_v.knots),
            )
    else:
        kw.update(num_control_points=_counts(args.cp, n, "cp"), degrees=_counts(args.degree, n, "degree"))
    if args.eval is not None:
        kw["num_eval"] = _counts(args.eval, n, "eval")
    try:
        return FitConfig(**kw)
    except ContractError as exc:
        raise _Fail(EXIT_PARSE, str(exc)) from None


def _config_dict(cfg: FitConfig) -> dict:
    out = {}
    for k, v in vars(cfg).items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def _cmd_fit(args, is_curve: bool) -> int:
    cloud = io.read_point_cloud(args.cloud)
    knots_doc = io.read_nurbs_document(args.knots_from) if getattr(args, "knots_from", None) else None
    cfg = _fit_config(args, is_curve, knots_doc)
    if cfg.num_eval is None:
        g = cfg.eval_grid(cloud)
        cfg = cfg.replace(num_eval=(g.n_grid,) if is_curve else (g.n_grid, g.m_grid))
    report = fit_curve(cloud, cfg) if is_curve else fit_surface(cloud, cfg)
    outputs = _Outputs()
    history = args.history or str(args.out) + ".history.csv"
    try:
        weighted = cfg.mode != "bspline"
        outputs.path(args.out).write_bytes(io.write_nurbs_document(io.NurbsDocument(report.fitted, (weighted,))))
        outputs.path(history).write_text(io.loss_history_text(report))
        _write_manifest(
            args,
            outputs,
            args.out,
            {"cloud": args.cloud, **({"knots_from": args.knots_from} if knots_doc is not None else {})},
            {"document": args.out, "history": history},
            {"config": _config_dict(cfg), "iterations": report.iterations},
        )
        outputs.commit()
    finally:
        outputs.discard()
    print(f"final_loss={_fmt(report.final_loss)} chamfer={_fmt(report.final_chamfer)} iterations={report.iterations}")
    return EXIT_OK


def cmd_fit_curve(args) -> int:
    return _cmd_fit(args, True)


def cmd_fit_surface(args) -> int:
    return _cmd_fit(args, False)


def cmd_offset(args) -> int:
    doc = io.read_nurbs_document(args.document)
    if doc.kind == "curve":
        raise _Fail(EXIT_PARSE, "offset needs a surface or an assembly document")
    asm = doc.geometry if isinstance(doc.geometry, PatchAssembly) else detect_shared_edges([doc.geometry])
    if not asm.shared_edges and len(asm.patches) > 1:
        asm = detect_shared_edges(asm.patches)
    cfg = OFFSET_CONFIG.replace(
        loss=args.loss,
        optimizer=args.opt,
        learning_rate=args.lr,
        max_iters=args.iters,
        tol=args.tol,
        mode=args.mode,
    )
    density = None if args.density is None else _counts(args.density, 2, "density")
    job = OffsetJob(asm, args.dist, density, cfg, args.dense_factor)
    result = fit_offset_surfaces(job, return_report=True)
    outputs = _Outputs()
    report_path = args.report or str(args.out) + ".report.json"
    try:
        outputs.path(args.out).write_bytes(io.write_nurbs_document(result.fitted))
        if args.baseline_out:
            outputs.path(args.baseline_out).write_bytes(io.write_nurbs_document(result.baseline))
        rep = {
            "distance": _fmt(args.dist),
            "fitted_chamfer": _fmt(result.normalized_chamfer),
            "baseline_chamfer": _fmt(result.baseline_chamfer),
            "min_extent": _fmt(asm.min_extent),
            "iterations": result.report.iterations,
            "grid": [job.grid.n_grid, job.grid.m_grid],
            "dense_grid": [job.dense_grid.n_grid, job.dense_grid.m_grid],
        }
        outputs.path(report_path).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
        outs = {"document": args.out, "report": report_path}
        if args.baseline_out:
            outs["baseline"] = args.baseline_out
        resolved = {
            "config": _config_dict(result.report.config),
            "grid": rep["grid"],
            "dense_grid": rep["dense_grid"],
        }
        _write_manifest(args, outputs, args.out, {"document": args.document}, outs, resolved)
        outputs.commit()
    finally:
        outputs.discard()
    print(f"fitted_chamfer={_fmt(result.normalized_chamfer)} baseline_chamfer={_fmt(result.baseline_chamfer)}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.trials < 1:
        raise _Fail(EXIT_PARSE, "--trials must be >= 1")
    res = gradcheck(args.trials, args.seed, args.h, corrupted_backward if args.inject_fault else None)
    print(f"max_rel_error={_fmt(res.max_rel_error)} trials={res.trials} seed={res.seed}")
    if args.out:
        outputs = _Outputs()
        try:
            rep = {
                "max_rel_error": _fmt(res.max_rel_error),
                "errors": [_fmt(e) for e in res.errors],
                "worst_trial": res.worst_trial,
                "worst_param": res.worst_param,
                "passed": res.passed,
            }
            outputs.path(args.out).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
            _write_manifest(args, outputs, args.out, {}, {"report": args.out}, {"tolerance": TOLERANCE})
            outputs.commit()
        finally:
            outputs.discard()
    if not res.passed:
        print(f"gradcheck failed: worst surface seed=({res.seed}, {res.worst_trial}) parameter={res.worst_param}", file=sys.stderr)
        return EXIT_GRAD
    return EXIT_OK


def cmd_replay(args) -> int:
    data = json.loads(Path(args.manifest_file).read_text())
    if data.get("tool") != "dnurbs" or "arguments" not in data:
        raise _Fail(EXIT_PARSE, f"{args.manifest_file} is not a dnurbs manifest")
    ns = dict(data["arguments"])
    command = data["command"]
    path_map = {}
    if args.output_dir:
        out_dir = Path(args.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        recorded_outputs = dict(data.get("outputs", {}))
        for key in ("out", "history", "report", "baseline_out"):
            if ns.get(key):
                ns[key] = str(out_dir / Path(ns[key]).name)
        # defaulted side outputs (history, report) follow the primary output
        for original in recorded_outputs.values():
            path_map[str(out_dir / Path(original).name)] = original
        manifest = out_dir / Path(args.manifest_file).name
    else:
        manifest = Path(args.manifest_file)
    replay = argparse.Namespace(
        **ns,
        command=command,
        manifest=str(manifest),
        threads=args.threads,
        backend=args.backend,
        recorded=data["arguments"],
        path_map=path_map,
    )
    return COMMANDS[command](replay)


COMMANDS = {
    "eval": cmd_eval,
    "fit-curve": cmd_fit_curve,
    "fit-surface": cmd_fit_surface,
    "offset": cmd_offset,
    "gradcheck": cmd_gradcheck,
}


# ---------------------------------------------------------------- parser


def _fit_flags(p: argparse.ArgumentParser, surface: bool):
    p.add_argument("--loss", choices=("l1", "l2", "mse", "chamfer"), default="l2" if surface else "chamfer")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3, help="curve-length regularisation weight")
    p.add_argument("--opt", choices=tuple(DEFAULT_LR), default="adam")
    p.add_argument("--lr", type=float, default=None, help="learning rate (default depends on --opt)")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--mode", choices=("bspline", "nubs", "nurbs"), default="bspline")
    p.add_argument("--init", choices=tuple(INIT_NAMES), default="bbox")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reduction", choices=("mean", "sum"), default="mean", help="Chamfer reduction of the objective")
    p.add_argument("--weight-lr-scale", type=float, default=0.01, help="learning-rate multiplier for weights")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnurbs", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"dnurbs {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="cap on worker threads (default: DNURBS_NUM_THREADS or all cores)")
    parser.add_argument("--backend", choices=("python", "cython"), default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate a NURBS document on a grid and export a mesh")
    p.add_argument("document")
    p.add_argument("--res", default="100", help="N for curves, NxM for surfaces")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")

    for name, surface in (("fit-curve", False), ("fit-surface", True)):
        p = sub.add_parser(name, help=f"fit a {'surface' if surface else 'curve'} to a point cloud")
        p.add_argument("cloud")
        p.add_argument("--out", required=True, help="fitted NURBS document")
        p.add_argument("--history", help="loss CSV (default: <out>.history.csv)")
        p.add_argument("--manifest")
        p.add_argument("--cp", default="12x12" if surface else "16")
        p.add_argument("--degree", default="3,3" if surface else "3")
        p.add_argument("--eval", default=None, help="evaluation grid (default: from the cloud size)")
        if surface:
            p.add_argument("--knots-from", default=None, help="take counts, degrees and knots from this document")
        _fit_flags(p, surface)

    p = sub.add_parser("offset", help="offset a surface or assembly and compare with the control-point offset")
    p.add_argument("document")
    p.add_argument("--dist", type=float, required=True)
    p.add_argument("--density", default=None, help="fitting grid per patch, N or NxM")
    p.add_argument("--dense-factor", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline-out", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--manifest")
    p.add_argument("--loss", choices=("l1", "l2", "mse", "chamfer"), default=OFFSET_CONFIG.loss)
    p.add_argument("--opt", choices=tuple(DEFAULT_LR), default=OFFSET_CONFIG.optimizer)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--iters", type=int, default=OFFSET_CONFIG.max_iters)
    p.add_argument("--tol", type=float, default=OFFSET_CONFIG.tol)
    p.add_argument("--mode", choices=("bspline", "nubs", "nurbs"), default=OFFSET_CONFIG.mode)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-6)
    p.add_argument("--out", default=None, help="optional JSON report")
    p.add_argument("--manifest")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest_file")
    p.add_argument("--output-dir", default=None, help="write outputs here instead of the recorded paths")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is not None:
            kernels.set_num_threads(args.threads)
        if args.backend is not None:
            kernels.set_backend(args.backend)
        if args.command == "replay":
            return cmd_replay(args)
        return COMMANDS[args.command](args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FitAbortedError as exc:
        print(f"error: fit aborted: {exc}", file=sys.stderr)
        return EXIT_FIT
    except FoldError as exc:
        print(f"error: offset folds: {exc}", file=sys.stderr)
        return EXIT_FOLD
    except (EvaluationError, DomainError) as exc:
        print(f"error: evaluation failed: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except (ParseError, ContractError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
