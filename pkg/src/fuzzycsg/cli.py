"""Command-line interface: ``fuzzycsg <command> ...``.

Exit codes: 0 success, 2 bad input or configuration, 3 numerical abort.
"""
import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import FuzzyCSGError, NumericalError
from .formats import (
    occupancy_to_pixels,
    read_dataset,
    write_grid,
    write_history,
    write_occupancy_csv,
    write_pgm,
)
from .optimizer import FitAborted, FitConfig, fit, heldout_mse
from .pruning import PruneConfig, prune
from .targets import load_target
from .tree import MODES, build_full_tree, load_tree, node_count, save_tree, serialize

logger = logging.getLogger("fuzzycsg")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
AXES = "xyz"


class CliError(Exception):
    """Bad command-line input; reported with exit code 2."""


def _load_config(path, overrides):
    """FitConfig from an optional JSON document, then command-line overrides."""
    doc = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise CliError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise CliError(f"{path}: config must be a JSON object")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(FitConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return FitConfig(**doc)
    except TypeError as exc:
        raise CliError(f"bad config: {exc}") from None


def _seed(args):
    return 0 if args.seed is None else args.seed


def _config_dict(cfg):
    return dataclasses.asdict(cfg)


def _fit_overrides(args):
    return {
        "seed": args.seed,
        "iterations": getattr(args, "iterations", None),
        "mode": getattr(args, "mode", None),
        "depth": getattr(args, "depth", None),
        "family": getattr(args, "family", None),
        "lr": getattr(args, "lr", None),
    }


def _initial_tree(cfg, dim):
    rng = np.random.default_rng(cfg.seed)
    return build_full_tree(cfg.depth, cfg.family, dim, rng, cfg.omega, cfg.temperature, cfg.mode)


def _holdout(tree, target, cfg):
    return heldout_mse(tree, target, cfg.holdout_points, np.random.default_rng([cfg.seed, 1]))


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_fit(args):
    cfg = _load_config(args.config, _fit_overrides(args))
    target = load_target(args.target)
    os.makedirs(args.out, exist_ok=True)
    status = "ok"
    try:
        result = fit(_initial_tree(cfg, target.dim), target, cfg)
        tree, history = result.tree, result.history
    except FitAborted as exc:
        tree, history, status = exc.tree, exc.history, f"aborted: {exc}"
    tree_path = os.path.join(args.out, "tree.json")
    save_tree(tree, tree_path)
    write_history(os.path.join(args.out, "loss.csv"), history)
    manifest = {
        "version": __version__,
        "target": args.target,
        "seed": cfg.seed,
        "config": _config_dict(cfg),
        "iterations_run": int(len(history)),
        "status": status,
        "tree_sha256": hashlib.sha256(serialize(tree).encode("utf-8")).hexdigest(),
        "final_heldout_mse": None,
        "nodes": list(node_count(tree)),
    }
    if status == "ok":
        manifest["final_heldout_mse"] = _holdout(tree, target, cfg)
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    if status != "ok":
        print(f"error: {status}; last good tree written to {tree_path}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"final held-out MSE {manifest['final_heldout_mse']:.6g}; wrote {args.out}")
    return EXIT_OK


def cmd_prune(args):
    if not args.threshold > 0:
        raise CliError("--threshold must be positive")
    tree = load_tree(args.tree)
    target = load_target(args.target)
    if target.dim != tree.dim:
        raise CliError(f"tree is {tree.dim}D but target is {target.dim}D")
    rng = np.random.default_rng(_seed(args))
    pruned, report = prune(tree, PruneConfig(args.threshold), target=target, rng=rng, report=True)
    save_tree(pruned, args.out)
    text = report.to_text()
    report_path = args.report or os.path.splitext(args.out)[0] + ".report.txt"
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    return EXIT_OK


def _points_source(source, dim, seed):
    """``(points, occupancy or None)`` from a dataset CSV or ``uniform:<count>``."""
    if source.startswith("uniform:"):
        try:
            count = int(source.split(":", 1)[1])
        except ValueError:
            raise CliError(f"bad point source {source!r}") from None
        if count < 1:
            raise CliError("uniform point count must be positive")
        return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(count, dim)), None
    points, occ = read_dataset(source)
    if points.shape[1] != dim:
        raise CliError(f"dataset is {points.shape[1]}D but tree is {dim}D")
    return points, occ


def cmd_eval(args):
    tree = load_tree(args.tree)
    points, occ = _points_source(args.points, tree.dim, _seed(args))
    # full trees take the batched path so a tree scores exactly 0 against its own samples
    pred = tree.eval(points) if tree.level_plan() is not None else tree.eval_stack(points)
    write_occupancy_csv(args.out, points, pred)
    if occ is not None:
        mse = float(np.mean((pred - occ) ** 2))
        print(f"MSE {mse:.17g} over {points.shape[0]} points")
    else:
        print(f"evaluated {points.shape[0]} points")
    return EXIT_OK


def _slice_points(dim, resolution, axis, offset):
    """Pixel centers of a square slice through [-1, 1]^d, row 0 at the top."""
    if resolution < 2:
        raise CliError("--resolution must be at least 2")
    ticks = -1.0 + (np.arange(resolution) + 0.5) * (2.0 / resolution)
    if dim == 2:
        free, fixed = (0, 1), None
    else:
        if axis not in AXES:
            raise CliError("3D slices need --axis x, y or z")
        if not -1.0 <= offset <= 1.0:
            raise CliError(f"slice offset {offset} lies outside the domain [-1, 1]")
        fixed = AXES.index(axis)
        free = tuple(i for i in range(3) if i != fixed)
    cols, rows = np.meshgrid(ticks, ticks[::-1])
    pts = np.zeros((resolution * resolution, dim))
    pts[:, free[0]] = cols.ravel()
    pts[:, free[1]] = rows.ravel()
    if fixed is not None:
        pts[:, fixed] = offset
    return pts


def cmd_render_slice(args):
    tree = load_tree(args.tree)
    pts = _slice_points(tree.dim, args.resolution, args.axis, args.offset)
    occ = tree.eval_stack(pts).reshape(args.resolution, args.resolution)
    pixels = occupancy_to_pixels(occ)
    if args.isoline:
        inside = occ >= 0.5
        edge = np.zeros_like(inside)
        edge[:, 1:] |= inside[:, 1:] != inside[:, :-1]
        edge[1:, :] |= inside[1:, :] != inside[:-1, :]
        pixels[edge] = 128
    write_pgm(args.out, pixels)
    print(f"wrote {args.resolution}x{args.resolution} slice to {args.out}")
    return EXIT_OK


def cmd_export_grid(args):
    tree = load_tree(args.tree)
    if args.resolution < 2:
        raise CliError("--resolution must be at least 2")
    ticks = np.linspace(-1.0, 1.0, args.resolution)
    mesh = np.meshgrid(*([ticks] * tree.dim), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    values = tree.eval_stack(pts).reshape((args.resolution,) * tree.dim)
    bbox = (np.full(tree.dim, -1.0), np.full(tree.dim, 1.0))
    write_grid(args.out, values, bbox)
    print(f"wrote {values.size} samples to {args.out}")
    return EXIT_OK


def cmd_compare(args):
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if not modes or bad:
        raise CliError(f"modes must be a nonempty subset of {', '.join(MODES)}")
    if args.seeds < 1:
        raise CliError("--seeds must be at least 1")
    if not args.threshold > 0:
        raise CliError("--threshold must be positive")
    base = _load_config(args.config, _fit_overrides(args))
    target = load_target(args.target)
    seeds = [base.seed + i for i in range(args.seeds)]
    rows = []
    for mode in modes:
        mses, before, after = [], [], []
        for seed in seeds:
            cfg = dataclasses.replace(base, mode=mode, seed=seed)
            result = fit(_initial_tree(cfg, target.dim), target, cfg)
            pruned = prune(result.tree, PruneConfig(args.threshold), target=target, rng=np.random.default_rng(seed))
            mses.append(_holdout(result.tree, target, cfg))
            before.append(sum(node_count(result.tree)))
            after.append(sum(node_count(pruned)))
        rows.append(
            {
                "mode": mode,
                "seeds": len(seeds),
                "mse_mean": float(np.mean(mses)),
                "mse_median": float(np.median(mses)),
                "nodes_before": float(np.mean(before)),
                "nodes_after": float(np.mean(after)),
                "mse_per_seed": ";".join(format(m, ".17g") for m in mses),
            }
        )
    columns = list(rows[0])
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(format(row[c], ".17g") if isinstance(row[c], float) else str(row[c]) for c in columns))
            fh.write("\n")
    for row in rows:
        print(
            f"{row['mode']:>14}  MSE {row['mse_mean']:.4g}  nodes {row['nodes_before']:.1f} -> {row['nodes_after']:.1f}"
        )
    return EXIT_OK


def _add_fit_flags(p):
    p.add_argument("--iterations", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--depth", type=int)
    p.add_argument("--family", choices=("quadric", "sphere", "plane"))
    p.add_argument("--lr", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="fuzzycsg", description="Differentiable fuzzy CSG fitting.")
    parser.add_argument("--seed", type=int, default=None, help="random seed (default 0, or the config's seed)")
    parser.add_argument("--threads", type=int, default=None, help="cap on BLAS/OpenMP threads")
    parser.add_argument("--config", default=None, help="JSON file with fit settings")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a random tree to a target")
    p.add_argument("target", help="bundled name, tree document, dataset CSV or target spec")
    p.add_argument("--out", required=True, help="output directory")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("prune", help="delete redundant subtrees")
    p.add_argument("tree")
    p.add_argument("--target", required=True)
    p.add_argument("--threshold", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("eval", help="evaluate a tree at points")
    p.add_argument("tree")
    p.add_argument("--points", required=True, help="dataset CSV or uniform:<count>")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render-slice", help="write a grayscale PGM of a slice")
    p.add_argument("tree")
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--axis", choices=tuple(AXES), default="z")
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--isoline", action="store_true", help="mark the 0.5 isoline in gray")
    p.set_defaults(func=cmd_render_slice)

    p = sub.add_parser("export-grid", help="sample occupancy on a regular grid")
    p.add_argument("tree")
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=64)
    p.set_defaults(func=cmd_export_grid)

    p = sub.add_parser("compare", help="fit under several boolean modes with shared seeds")
    p.add_argument("target")
    p.add_argument("--modes", default=",".join(MODES))
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--threshold", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CliError, FuzzyCSGError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
