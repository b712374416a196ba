"""The ``forge`` command line tool.

Subcommands::

    forge generate  --out DIR [--config FILE] [--scenes N] [--frames N] ...
    forge evaluate  --dataset DIR --pred DIR --out DIR [--space ground|image]
    forge stats     --dataset DIR --out DIR [--bins N]
    forge fuse      --dataset DIR --scene ID --maps DIR --out DIR [...]
    forge ot-loss   --pred FILE --gt FILE [--epsilon E] [--tau T] [--cost KIND]

Environment: ``MVFORGE_SEED`` overrides the configured seed (flags still
win); ``MVFORGE_THREADS`` sets the default worker count. Exit codes:
0 success, 1 user/input error (bad flags, unreadable files, infeasible
configs), 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .annotate import (
    DatasetWriter,
    GridMap,
    read_dataset,
    read_dots,
    read_map,
    write_dataset,
    write_map,
)
from .errors import ForgeError
from .fusion import ViewMapStack, ground_pipeline
from .metrics import (
    DEFAULT_GROUND_THRESHOLD_M,
    DEFAULT_IMAGE_THRESHOLD_PX,
    counting_stats,
    load_points,
    localization_record,
    match_points,
    pool_reports,
)
from .ot import CostKind, localization_loss
from .report import write_stats
from .scene_synth import GeneratorConfig, config_from_file, generate_dataset


class _Parser(argparse.ArgumentParser):
    """Parser whose usage failures exit 1: a bad flag is a user error."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _env_int(name: str, parser: argparse.ArgumentParser):
    raw = os.environ.get(name)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        parser.error(f"environment variable {name} must be an integer, got {raw!r}")


def _echo_run_config(out_dir: Path, command: str, options: dict) -> None:
    """Every run records its fully resolved configuration next to its output."""
    doc = {"command": command, "tool": "forge", "version": __version__, "options": options}
    with open(out_dir / "run_config.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _jsonable_options(options: dict) -> dict:
    out = {}
    for k, v in options.items():
        if isinstance(v, tuple):
            out[k] = list(v)
        elif isinstance(v, Path):
            out[k] = str(v)
        else:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args, parser) -> int:
    overrides = {
        "scenes": args.scenes,
        "frames_per_scene": args.frames,
        "views": args.views,
        "count_min": args.count_min,
        "count_max": args.count_max,
        "separation": args.separation,
        "capacity": args.capacity,
    }
    seed = args.seed
    if seed is None:
        seed = _env_int("MVFORGE_SEED", parser)
    if seed is not None:
        overrides["seed"] = seed
    try:
        if args.config:
            config = config_from_file(args.config, **overrides)
        else:
            config = GeneratorConfig(
                **{k: v for k, v in overrides.items() if v is not None}
            )
    except ValueError as e:
        parser.error(str(e))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    options = asdict(config)
    options["threads"] = args.threads
    options["out"] = "."  # paths stay out of the echo so reruns are comparable
    _echo_run_config(out, "generate", _jsonable_options(options))

    marker = out / "INCOMPLETE"
    marker.write_text("generation in progress\n", encoding="utf-8")
    plan = generate_dataset(config)
    manifest = write_dataset(plan, out, threads=args.threads, version=__version__)
    marker.unlink()

    persons = sum(fe.frame.person_count for e in manifest.scenes for fe in e.frames)
    splits = manifest.splits()
    print(f"scenes {config.scenes}  frames {config.scenes * config.frames_per_scene}  views {config.views}")
    print(f"persons {persons}")
    print("splits " + " ".join(f"{k}={len(v)}" for k, v in sorted(splits.items())))
    print(f"wrote {out / 'manifest.json'}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _macro_mean(records: list[dict], key: str):
    values = [r[key] for r in records if r.get(key) is not None]
    return float(np.mean(values)) if values else None


def cmd_evaluate(args, parser) -> int:
    threshold = args.threshold
    if threshold is None:
        threshold = (
            DEFAULT_GROUND_THRESHOLD_M if args.space == "ground" else DEFAULT_IMAGE_THRESHOLD_PX
        )
    if threshold <= 0:
        parser.error("--threshold must be positive")

    dataset = Path(args.dataset)
    pred_root = Path(args.pred)
    manifest = read_dataset(dataset)

    units = []  # (labels, pred_path, gt_points)
    for entry in manifest.scenes:
        for fe in entry.frames:
            frame = fe.frame
            tag = f"scene_{frame.scene_id}/frame_{frame.frame_id}"
            if args.space == "ground":
                gt = np.array(
                    [[p.position.x, p.position.y] for p in frame.persons], dtype=float
                ).reshape(-1, 2)
                units.append(
                    ({"scene": frame.scene_id, "frame": frame.frame_id}, pred_root / f"{tag}.txt", gt)
                )
            else:
                for rel in fe.view_files:
                    ann = read_dots(dataset / rel)
                    gt = np.array(
                        [[u, v] for _pid, u, v, vis in ann.entries if vis], dtype=float
                    ).reshape(-1, 2)
                    units.append(
                        (
                            {"scene": frame.scene_id, "frame": frame.frame_id, "view": ann.view_id},
                            pred_root / f"{tag}/view_{ann.view_id}.txt",
                            gt,
                        )
                    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_run_config(
        out,
        "evaluate",
        {
            "dataset": str(dataset),
            "pred": str(pred_root),
            "space": args.space,
            "threshold": threshold,
            "method": args.method,
            "out": ".",
        },
    )

    records = []
    reports = []
    pred_counts = []
    gt_counts = []
    for labels, pred_path, gt in units:
        points, _scores = load_points(pred_path)
        report = match_points(points, gt, threshold, method=args.method)
        record = dict(labels)
        record.update(localization_record(report, args.space))
        records.append(record)
        reports.append(report)
        pred_counts.append(len(points))
        gt_counts.append(len(gt))

    with open(out / "per_frame.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")

    micro = pool_reports(reports)
    micro_record = localization_record(micro, args.space)
    micro_record["basis"] = "micro"
    macro_record = {
        "basis": "macro",
        "moda": _macro_mean(records, "moda"),
        "modp": _macro_mean(records, "modp"),
        "precision": _macro_mean(records, "precision"),
        "recall": _macro_mean(records, "recall"),
        "f1": _macro_mean(records, "f1"),
    }

    def fmt(x):
        return "" if x is None else f"{x:.6f}"

    with open(out / "summary.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("basis,units,tp,fp,fn,moda,modp,precision,recall,f1\n")
        fh.write(
            f"micro,{len(units)},{micro.tp},{micro.fp},{micro.fn},"
            f"{fmt(micro_record['moda'])},{fmt(micro_record['modp'])},"
            f"{fmt(micro_record['precision'])},{fmt(micro_record['recall'])},{fmt(micro_record['f1'])}\n"
        )
        fh.write(
            f"macro,{len(units)},,,,"
            f"{fmt(macro_record['moda'])},{fmt(macro_record['modp'])},"
            f"{fmt(macro_record['precision'])},{fmt(macro_record['recall'])},{fmt(macro_record['f1'])}\n"
        )

    stats = counting_stats(pred_counts, gt_counts)
    with open(out / "counting.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("subset,n,mae,mse,nae,nae_excluded\n")
        rows = [("all", stats)] + sorted(stats.buckets.items())
        for name, s in rows:
            fh.write(
                f"{name},{s.n},{fmt(s.mae)},{fmt(s.mse)},{fmt(s.nae)},{s.nae_excluded}\n"
            )

    print(
        f"{args.space} @ {threshold:g}: "
        f"moda {fmt(micro_record['moda']) or 'n/a'}  modp {fmt(micro_record['modp']) or 'n/a'}  "
        f"f1 {fmt(micro_record['f1']) or 'n/a'}  ({len(units)} units)"
    )
    return 0


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def cmd_stats(args, parser) -> int:
    manifest = read_dataset(Path(args.dataset))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_run_config(
        out, "stats", {"dataset": str(args.dataset), "bins": args.bins, "out": "."}
    )
    written = write_stats(manifest, out, bins=args.bins)
    for name in written:
        print(f"wrote {out / name}")
    return 0


# ---------------------------------------------------------------------------
# fuse
# ---------------------------------------------------------------------------

def cmd_fuse(args, parser) -> int:
    manifest = read_dataset(Path(args.dataset))
    by_id = {entry.scene.id: entry for entry in manifest.scenes}
    if args.scene not in by_id:
        raise ForgeError(f"scene {args.scene} not in dataset")
    entry = by_id[args.scene]

    maps_dir = Path(args.maps)
    maps = []
    for camera in entry.cameras:
        path = maps_dir / f"view_{camera.id}.den"
        gmap = read_map(path)
        maps.append(GridMap(values=gmap.values, kind=gmap.kind, view_id=camera.id))
    stack = ViewMapStack(maps=maps, cameras=list(entry.cameras))

    if args.attention:
        att_dir = Path(args.attention)
        attention = np.stack(
            [read_map(att_dir / f"view_{c.id}.den").values.astype(float) for c in entry.cameras]
        )
        if attention.shape != stack.as_array().shape:
            raise ForgeError("attention maps do not match view map shapes")
    else:
        attention = np.zeros_like(stack.as_array())  # uniform weighting

    fused = ground_pipeline(stack, attention, entry.grid, height=args.height)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_run_config(
        out,
        "fuse",
        {
            "dataset": str(args.dataset),
            "scene": args.scene,
            "maps": str(args.maps),
            "attention": str(args.attention) if args.attention else None,
            "height": args.height,
            "out": ".",
        },
    )
    write_map(out / "fused.den", fused)
    print(f"wrote {out / 'fused.den'} ({fused.rows}x{fused.cols} cells, {len(maps)} views)")
    return 0


# ---------------------------------------------------------------------------
# ot-loss
# ---------------------------------------------------------------------------

def cmd_ot_loss(args, parser) -> int:
    pred = read_map(args.pred)
    ann = read_dots(args.gt, view_id=-1)
    points = [
        (v, u) for _pid, u, v, vis in ann.entries if vis or args.include_hidden
    ]
    result = localization_loss(
        pred,
        points,
        epsilon=args.epsilon,
        tau=args.tau,
        cost_kind=CostKind(args.cost),
        prune_threshold=args.prune,
        max_iters=args.max_iters,
        tol=args.tol,
    )
    sol = result.solution
    line = {
        "objective": result.loss,
        "n": result.n,
        "m": result.m,
        "pruned_mass": result.pruned_mass,
        "iterations": sol.iterations if sol else 0,
        "converged": sol.converged if sol else True,
        "marginal_residual_a": sol.marginal_residual_a if sol else None,
        "marginal_residual_b": sol.marginal_residual_b if sol else None,
        "config": {
            "epsilon": args.epsilon,
            "tau": args.tau,
            "cost": args.cost,
            "prune": args.prune,
            "max_iters": args.max_iters,
            "tol": args.tol,
        },
    }
    print(json.dumps(line, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="forge",
        description="Synthetic multi-view crowd datasets: generate, annotate, fuse, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"forge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesise a dataset")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--scenes", type=int, help="number of scenes")
    g.add_argument("--frames", type=int, help="frames per scene")
    g.add_argument("--views", type=int, help="camera views per scene")
    g.add_argument("--count-min", type=int, dest="count_min", help="minimum people per frame")
    g.add_argument("--count-max", type=int, dest="count_max", help="maximum people per frame")
    g.add_argument("--separation", type=float, help="minimum person separation in metres")
    g.add_argument("--capacity", type=int, help="partition area capacity")
    g.add_argument("--seed", type=int, help="master seed (beats MVFORGE_SEED)")
    g.add_argument("--threads", type=int, default=None, help="parallel frame workers")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="score predictions against a dataset")
    e.add_argument("--dataset", required=True, help="dataset directory")
    e.add_argument("--pred", required=True, help="prediction directory")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--space", choices=("ground", "image"), default="ground")
    e.add_argument("--threshold", type=float, default=None,
                   help="match gate (default 0.5 m ground / 3 px image)")
    e.add_argument("--method", choices=("hungarian", "greedy"), default="hungarian")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("stats", help="dataset statistics (CSV + SVG)")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--bins", type=int, default=16, help="histogram bins")
    s.set_defaults(func=cmd_stats)

    f = sub.add_parser("fuse", help="fuse per-view maps onto the ground plane")
    f.add_argument("--dataset", required=True)
    f.add_argument("--scene", type=int, required=True)
    f.add_argument("--maps", required=True, help="directory of view_<id>.den maps")
    f.add_argument("--attention", help="directory of view_<id>.den attention maps")
    f.add_argument("--height", type=float, default=1.75, help="projection plane height")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fuse)

    o = sub.add_parser("ot-loss", help="transport loss between a density map and dots")
    o.add_argument("--pred", required=True, help="predicted density map (.den)")
    o.add_argument("--gt", required=True, help="ground-truth dots file")
    o.add_argument("--epsilon", type=float, default=0.1)
    o.add_argument("--tau", type=float, default=10.0)
    o.add_argument("--cost", choices=[k.value for k in CostKind], default="exp")
    o.add_argument("--prune", type=float, default=1e-8, help="source pruning threshold")
    o.add_argument("--max-iters", type=int, dest="max_iters", default=500)
    o.add_argument("--tol", type=float, default=1e-6)
    o.add_argument("--include-hidden", action="store_true",
                   help="use occluded dots as well as visible ones")
    o.set_defaults(func=cmd_ot_loss)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None) is None and hasattr(args, "threads"):
            args.threads = _env_int("MVFORGE_THREADS", parser) or 1
        if hasattr(args, "threads") and args.threads < 1:
            parser.error("--threads must be >= 1")
        return args.func(args, parser)
    except SystemExit as e:  # parser.error / --help / --version
        code = e.code
        return code if isinstance(code, int) else (0 if code is None else 1)
    except (ForgeError, OSError) as e:
        print(f"forge: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 -- invariant violation, not user error
        print(f"forge: internal error: {e!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
