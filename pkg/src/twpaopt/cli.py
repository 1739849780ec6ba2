"""Command-line entry point.

Exit codes: 0 success (possibly with flagged rows, reported on stderr),
1 runtime failure, 2 configuration error.  Default worker count comes from
--workers, then the config, then TWPAOPT_WORKERS, then 1.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, RunConfig, load_config
from .pipeline import (
    RunLock,
    open_run_dir,
    prepare_run_dir,
    run_optimize,
    run_pipeline,
    run_report,
    run_stage1,
    run_stage3,
)

WORKERS_ENV = "TWPAOPT_WORKERS"


def resolve_workers(flag: int | None, cfg: RunConfig) -> int:
    if flag is not None:
        return flag
    if cfg.workers is not None:
        return cfg.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
            if value < 1:
                raise ValueError
        except ValueError:
            raise ConfigError(
                f"{WORKERS_ENV}={env!r} is not a positive integer") from None
        return value
    return 1


def _progress_printer(total: int):
    done = 0
    step = max(1, total // 20)

    def callback(_record):
        nonlocal done
        done += 1
        if done % step == 0 or done == total:
            print(f"stage1: {done}/{total} points done",
                  file=sys.stderr, flush=True)

    return callback


def _cmd_stage1(args) -> int:
    cfg = load_config(args.config)
    workers = resolve_workers(args.workers, cfg)
    paths, manifest = prepare_run_dir(args.config, cfg)
    with RunLock(paths):
        failed = run_stage1(cfg, paths, manifest, workers=workers,
                            progress=_progress_printer(cfg.grid.size))
    if failed:
        print(f"warning: {failed} grid point(s) failed and are flagged in "
              f"{paths.stage1_csv}", file=sys.stderr)
    print(paths.stage1_csv)
    return 0


def _cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    paths, manifest = prepare_run_dir(args.config, cfg)
    with RunLock(paths):
        doc = run_optimize(cfg, paths, manifest, stage1_csv=args.stage1,
                           seed=args.seed, budget=args.budget,
                           cold_start=args.cold_start)
    total = doc["metric"]["total"]
    print(f"p* metric {total:.6g} -> {paths.pstar_json}")
    return 0


def _cmd_stage3(args) -> int:
    cfg = load_config(args.config)
    paths, manifest = prepare_run_dir(args.config, cfg)
    with RunLock(paths):
        doc = run_stage3(cfg, paths, manifest, pstar_path=args.pstar)
    failed = doc["n_failed_drive_points"]
    if failed:
        print(f"warning: {failed} drive point(s) failed", file=sys.stderr)
    print(f"q* pump amplitude {doc['pump_amplitude_ua']:.6g} uA, "
          f"band-mean gain {doc['performance_db']:.4g} dB -> "
          f"{paths.qstar_json}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    workers = resolve_workers(args.workers, cfg)
    manifest = run_pipeline(args.config, cfg, workers=workers,
                            force=args.force,
                            progress=_progress_printer(cfg.grid.size))
    for name, stage in manifest["stages"].items():
        print(f"{name}: {stage['status']}")
    return 0


def _cmd_report(args) -> int:
    cfg, paths, manifest = open_run_dir(args.run_dir)
    with RunLock(paths):
        outputs = run_report(cfg, paths, manifest)
    for out in outputs:
        print(os.path.join(paths.run_dir, out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twpaopt",
        description="Three-stage traveling-wave parametric amplifier "
                    "design pipeline: grid sweep, surrogate optimization, "
                    "nonlinear gain.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p1 = sub.add_parser("stage1", help="run the linear parameter sweep")
    p1.add_argument("--config", required=True)
    p1.add_argument("--workers", type=int, default=None)
    p1.set_defaults(handler=_cmd_stage1)

    p2 = sub.add_parser("optimize", help="surrogate optimization for p*")
    p2.add_argument("--config", required=True)
    p2.add_argument("--stage1", default=None,
                    help="stage-1 CSV warm start (default: run dir)")
    p2.add_argument("--seed", type=int, default=None)
    p2.add_argument("--budget", type=int, default=None)
    p2.add_argument("--cold-start", action="store_true")
    p2.set_defaults(handler=_cmd_optimize)

    p3 = sub.add_parser("stage3", help="nonlinear gain at p*")
    p3.add_argument("--config", required=True)
    p3.add_argument("--pstar", default=None,
                    help="p* JSON (default: run dir)")
    p3.set_defaults(handler=_cmd_stage3)

    p4 = sub.add_parser("pipeline", help="run all stages with resume")
    p4.add_argument("--config", required=True)
    p4.add_argument("--workers", type=int, default=None)
    p4.add_argument("--force", action="store_true",
                    help="restart the run directory on config hash mismatch")
    p4.set_defaults(handler=_cmd_pipeline)

    p5 = sub.add_parser("report", help="emit plot-ready tables for a run")
    p5.add_argument("run_dir")
    p5.set_defaults(handler=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
