"""Command-line front end.

Subcommands cover the common desk workflows: render one field realization,
run a replicated threshold sweep from a plan file, pool an estimate of the
critical level, run the verification battery, and dump raw point samples.
Exit codes: 0 success, 1 usage or configuration problem, 2 verification
failure, 3 unexpected runtime error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import attenuation as att
from .config import (ensure_drained, kernel_from_config, read_config, take,
                     take_float, take_int)
from .experiments import plan_from_config, run_plan, verify_lemmas
from .field import field_on_grid, write_field_grid, write_pgm
from .percolation import estimate_hc, hc_to_csv
from .point_process import Window, sample_poisson, write_point_set


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="levelperc",
                description="Shot-noise field level-set percolation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="key=value plan file")
        sp.add_argument("--out", default=None,
                        help="output directory (default $LEVELPERC_OUT or .)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the seed from the config")
        sp.add_argument("--quiet", action="store_true")

    sp = sub.add_parser("render-field", help="one field realization on a grid")
    common(sp)

    sp = sub.add_parser("sweep", help="replicated crossing-threshold experiment")
    common(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--fresh", action="store_true",
                    help="ignore existing part files instead of resuming")

    sp = sub.add_parser("estimate-hc", help="pooled critical-level estimate")
    common(sp)

    sp = sub.add_parser("verify", help="run the verification battery")
    common(sp, config=False)
    sp.add_argument("--level", choices=("quick", "full"), default="quick")

    sp = sub.add_parser("sample-points", help="draw and store one point sample")
    common(sp)
    return p


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("LEVELPERC_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args) -> dict:
    cfg = read_config(args.config)
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    return cfg


def _parse_seed(cfg: dict, default="0") -> tuple:
    raw = take(cfg, "seed", default)
    return tuple(int(t) for t in str(raw).split(","))


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _cmd_render_field(args) -> int:
    cfg = _load_config(args)
    spec = kernel_from_config(cfg)
    lam = take_float(cfg, "intensity", required=True)
    halfwidth = take_float(cfg, "halfwidth", required=True)
    alpha = take_float(cfg, "alpha", required=True)
    boundary = take(cfg, "boundary", "hard")
    eps = take_float(cfg, "eps", 1e-3)
    mode = take(cfg, "mode", "exact-center")
    trunc = take_float(cfg, "truncation", None)
    d = take_int(cfg, "dimension", 2)
    seed = _parse_seed(cfg)
    margin = take_float(cfg, "margin", None)
    ensure_drained(cfg, args.config)
    if trunc is None:
        trunc = att.truncation_radius(spec, d, lam, eps)
    if margin is None:
        margin = trunc if boundary == "hard" else 0.0
    window = Window(d, halfwidth, margin, boundary)
    ps = sample_poisson(window, lam, seed)
    grid = field_on_grid(ps, spec, alpha, mode=mode, eps=eps, truncation=trunc)
    out = _out_dir(args)
    write_field_grid(grid, out / "field.txt")
    wrote = [str(out / "field.txt")]
    if d == 2:
        write_pgm(grid, out / "field.pgm")
        wrote.append(str(out / "field.pgm"))
    finite = grid.values[~(grid.values == math.inf)]
    _say(args, f"{ps.count} points, {grid.values.size} cells, "
               f"max {finite.max() if finite.size else math.nan:.6g}, "
               f"{grid.n_infinite} infinite")
    _say(args, "wrote " + ", ".join(wrote))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    plan = plan_from_config(cfg)
    out = _out_dir(args)
    progress = None if args.quiet else lambda msg: print(msg)
    manifest = run_plan(plan, out, workers=args.workers,
                        resume=not args.fresh, progress=progress)
    _say(args, f"plan {manifest.plan_sha[:12]}: {manifest.n_rows} rows "
               f"({manifest.n_executed}/{manifest.n_tasks} tasks executed)")
    _say(args, f"wrote {out / 'results.csv'}, {out / 'thetas.csv'}")
    return 0


def _cmd_estimate_hc(args) -> int:
    cfg = _load_config(args)
    spec = kernel_from_config(cfg)
    lam = take_float(cfg, "intensity", required=True)
    sizes = tuple(float(t) for t in take(cfg, "sizes", required=True).split(","))
    alpha = take_float(cfg, "alpha", required=True)
    reps = take_int(cfg, "replicates", required=True)
    eps = take_float(cfg, "eps", 1e-3)
    d = take_int(cfg, "dimension", 2)
    seed = _parse_seed(cfg)
    ensure_drained(cfg, args.config)
    est = estimate_hc(spec, lam, sizes, alpha, reps, seed, eps=eps, d=d)
    out = _out_dir(args)
    hc_to_csv(est, out / "hc.csv")
    for i, L in enumerate(est.sizes):
        _say(args, f"halfwidth {L:g}: median threshold {est.medians[i]:.6g} "
                   f"(iqr {est.iqrs[i]:.3g})")
    _say(args, f"estimate {est.estimate:.6g}, spread {est.spread:.2%}")
    _say(args, f"wrote {out / 'hc.csv'}")
    return 0


def _cmd_verify(args) -> int:
    report = verify_lemmas(args.level, seed=args.seed if args.seed is not None else 0)
    text = "\n".join(report.lines()) + "\n"
    if not args.quiet:
        print(text, end="")
    if args.out:
        out = _out_dir(args)
        (out / "verify.txt").write_text(text)
        _say(args, f"wrote {out / 'verify.txt'}")
    return 0 if report.ok else 2


def _cmd_sample_points(args) -> int:
    cfg = _load_config(args)
    lam = take_float(cfg, "intensity", required=True)
    halfwidth = take_float(cfg, "halfwidth", required=True)
    margin = take_float(cfg, "margin", 0.0)
    d = take_int(cfg, "dimension", 2)
    boundary = take(cfg, "boundary", "hard")
    seed = _parse_seed(cfg)
    ensure_drained(cfg, args.config)
    ps = sample_poisson(Window(d, halfwidth, margin, boundary), lam, seed)
    out = _out_dir(args)
    write_point_set(ps, out / "points.txt")
    _say(args, f"{ps.count} points, wrote {out / 'points.txt'}")
    return 0


_COMMANDS = {
    "render-field": _cmd_render_field,
    "sweep": _cmd_sweep,
    "estimate-hc": _cmd_estimate_hc,
    "verify": _cmd_verify,
    "sample-points": _cmd_sample_points,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:      # --help and friends
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:       # noqa: BLE001 - last-resort boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
