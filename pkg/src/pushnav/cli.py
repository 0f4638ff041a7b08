"""Command line interface: run one trial, benchmark scenarios, render maps."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .grid import read_pgm
from .render import export_costmap_image
from .scenario import bundled_scenarios, load_scenario
from .trial import CSV_HEADER, run_batch, run_trial, summary_csv_row


def _load_config(path: str | None) -> dict | None:
    if path is None:
        return None
    with open(path) as f:
        return yaml.safe_load(f)


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario, _load_config(args.config))
    frame_cb = None
    if args.export_frames:
        frame_dir = Path(args.export_frames)
        frame_dir.mkdir(parents=True, exist_ok=True)
        every = max(1, args.frame_every)

        def frame_cb(tick, world, master, path, registry):
            if tick % every == 0:
                export_costmap_image(
                    master,
                    frame_dir / f"frame_{tick:05d}.png",
                    path=path,
                    robot=world.robot,
                    clusters=registry,
                )

    metrics = run_trial(scenario, args.seed, baseline_mode=args.baseline or None,
                        frame_callback=frame_cb)
    print(json.dumps({
        "scenario": metrics.scenario,
        "seed": metrics.seed,
        "baseline_mode": metrics.baseline_mode,
        "success": metrics.success,
        "nav_time_s": metrics.nav_time,
        "final_levels": metrics.final_levels,
        "movability_correct": metrics.movability_correct,
        "escalations": [
            {"t": e.time, "level": e.level, "cluster": e.cluster_id, "body": e.body_id}
            for e in metrics.escalation_log
        ],
    }, indent=2))
    return 0 if metrics.success else 1


def _cmd_bench(args) -> int:
    names = [s.strip() for s in args.scenarios.split(",") if s.strip()]
    rows = [CSV_HEADER]
    for name in names:
        scenario = load_scenario(name, _load_config(args.config))
        summary = run_batch(scenario, args.trials, args.seed0)
        rows.append(summary_csv_row(summary))
        print(rows[-1])
    Path(args.out).write_text("\n".join(rows) + "\n")
    return 0


def _cmd_render(args) -> int:
    src = Path(args.input)
    if src.suffix == ".pgm":
        grid = read_pgm(src, args.resolution)
    else:
        grid = load_scenario(args.input).static_map
    export_costmap_image(grid, args.output, scale=args.scale)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pushnav",
        description="Adaptive cost-map navigation among movable obstacles (2D simulator)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario trial")
    p_run.add_argument("--scenario", required=True,
                       help=f"scenario file or bundled name ({', '.join(bundled_scenarios())})")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--baseline", action="store_true", help="disable the movable layer")
    p_run.add_argument("--export-frames", metavar="DIR", help="write per-tick costmap PNGs")
    p_run.add_argument("--frame-every", type=int, default=5, help="frame export stride in ticks")
    p_run.add_argument("--config", help="YAML file of parameter overrides")
    p_run.set_defaults(func=_cmd_run)

    p_bench = sub.add_parser("bench", help="run seeded batches and write a CSV summary")
    p_bench.add_argument("--scenarios", required=True, help="comma-separated scenario names/paths")
    p_bench.add_argument("--trials", type=int, default=20)
    p_bench.add_argument("--seed0", type=int, default=0)
    p_bench.add_argument("--out", default="results.csv")
    p_bench.add_argument("--config", help="YAML file of parameter overrides")
    p_bench.set_defaults(func=_cmd_bench)

    p_render = sub.add_parser("render", help="render a PGM map or scenario to PNG")
    p_render.add_argument("--input", required=True, help="PGM path or scenario name/path")
    p_render.add_argument("--output", required=True)
    p_render.add_argument("--resolution", type=float, default=0.1, help="meters per cell for PGM input")
    p_render.add_argument("--scale", type=int, default=4)
    p_render.set_defaults(func=_cmd_render)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
