"""Command-line front end: run sweeps to CSV, ship presets, print reports.

A run executes every (scheme, axis value) cell of the configured sweep
plus the reference runs the comparative metrics need: a building-free
run for the macro-loss pairing (one per drop, shared across the whole
sweep, since silencing the femtos makes the macro side independent of
building geometry) and a hard-cap run per axis value for the femto
ratio. References reuse the sweep's own cells when the scheme is
already listed, and their rows appear in the CSV either way.

Outputs per run directory: results.csv, summary.txt (the same rows as
a fixed-width table) and config.txt (the resolved configuration echo).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import metrics
from .config import ScenarioConfig, SweepSpec, format_config, parse_config_text
from .engine import run_drop_indexed

OUT_DIR_ENV = "FEMTOSIM_OUT"
FEMTO_SCHEMES = ("fixed_cap", "open_loop", "closed_loop")


def _run_task(task):
    cfg, drop_index = task
    return run_drop_indexed(cfg, drop_index)


def _execute(tasks, parallelism: int):
    if parallelism <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        # map preserves task order, so results are deterministic no
        # matter which worker finishes first
        return list(pool.map(_run_task, tasks, chunksize=1))


def run_sweep(spec: SweepSpec, parallelism: int = 1):
    """Execute a sweep and return its MetricRows (references included)."""
    spec.validate()
    base = spec.base
    drops = base.drops
    cell_list = list(spec.cells())

    plan: dict = {}
    for scheme, value, cfg in cell_list:
        plan[(scheme, value)] = cfg
    for scheme, value, cfg in cell_list:
        if scheme in FEMTO_SCHEMES and ("fixed_cap", value) not in plan:
            plan[("fixed_cap", value)] = cfg.replace(scheme="fixed_cap")
    free_key = None
    if any(s in FEMTO_SCHEMES for s, _ in plan):
        free_key = ("no_femto", None)
        if free_key not in plan:
            plan[free_key] = base.replace(
                scheme="no_femto", d_m=None, azimuth_deg=None, m_per_cell=0
            )

    tasks = [(cfg, d) for cfg in plan.values() for d in range(drops)]
    flat = _execute(tasks, parallelism)
    results = {}
    for i, key in enumerate(plan):
        results[key] = flat[i * drops:(i + 1) * drops]

    axis_name = spec.axis or ""
    free = results.get(free_key)
    rows = []
    for scheme, value, _cfg in cell_list:
        paired = scheme in FEMTO_SCHEMES
        rows.extend(
            metrics.summarize_cell(
                scheme, axis_name, value, results[(scheme, value)], seed=base.seed,
                femto_free=free if paired else None,
                hard_cap=results.get(("fixed_cap", value)) if paired else None,
            )
        )
    listed = {(scheme, value) for scheme, value, _ in cell_list}
    for key, res in results.items():
        if key in listed:
            continue
        scheme, value = key
        cell_axis = "" if key == free_key else axis_name
        rows.extend(metrics.summarize_cell(scheme, cell_axis, value, res, seed=base.seed))
    return rows


def _write_outputs(spec: SweepSpec, rows, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics.write_rows(rows, out_dir / "results.csv")
    (out_dir / "summary.txt").write_text(metrics.rows_as_table(rows))
    (out_dir / "config.txt").write_text(format_config(spec))


def _resolve_out(flag_value) -> Path:
    if flag_value:
        return Path(flag_value)
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env) if env else Path("runs")


# -- presets -----------------------------------------------------------------

def _single_building_base(le_db: float) -> ScenarioConfig:
    return ScenarioConfig(d_m=50.0, le_db=le_db, li_db=0.0)


def _grid_base() -> ScenarioConfig:
    # desk scale: the big grids cost seconds per frame, so trade drops
    # and frames to stay under ten minutes per sweep point
    return ScenarioConfig(
        m_per_cell=10, drops=6, warmup_frames=150, ni0_window_frames=100,
        data_frames=600,
    )


def preset_specs(name: str):
    """Named sweep bundles as (subdir label, spec) pairs."""
    d_values = (50.0, 100.0, 200.0, 400.0)
    m_values = (10.0, 20.0, 30.0, 40.0, 50.0)
    if name == "fig2":
        return [
            (f"le{int(le)}", SweepSpec(_single_building_base(le), "d_m", d_values, FEMTO_SCHEMES))
            for le in (1.0, 10.0)
        ]
    if name == "fig3":
        schemes = ("open_loop", "closed_loop")
        return [
            (f"le{int(le)}", SweepSpec(_single_building_base(le), "d_m", d_values, schemes))
            for le in (1.0, 10.0)
        ]
    if name in ("fig4", "fig5"):
        # same sweep feeds both: one reads the cell averages, the other
        # the 5th-percentile user rows
        return [("", SweepSpec(_grid_base(), "m_per_cell", m_values, FEMTO_SCHEMES))]
    raise ValueError(f"unknown preset {name!r}")


# -- commands ----------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        spec = parse_config_text(text, source=args.config)
        if args.seed is not None:
            spec = SweepSpec(spec.base.replace(seed=args.seed),
                             spec.axis, spec.values, spec.schemes)
            spec.validate()
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = _resolve_out(args.out)
    rows = run_sweep(spec, parallelism=args.parallelism)
    _write_outputs(spec, rows, out_dir)
    print(f"wrote {out_dir / 'results.csv'} ({len(rows)} rows)")
    return 0


def cmd_preset(args) -> int:
    out_root = _resolve_out(args.out) / args.name
    for label, spec in preset_specs(args.name):
        if args.seed is not None:
            spec = SweepSpec(spec.base.replace(seed=args.seed),
                             spec.axis, spec.values, spec.schemes)
        target = out_root / label if label else out_root
        rows = run_sweep(spec, parallelism=args.parallelism)
        _write_outputs(spec, rows, target)
        print(f"wrote {target / 'results.csv'} ({len(rows)} rows)")
    return 0


def cmd_report(args) -> int:
    root = Path(args.in_dir)
    found = sorted(root.rglob("results.csv"))
    if not found:
        print(f"no results.csv under {root}", file=sys.stderr)
        return 2
    for path in found:
        rows = metrics.read_rows(path)
        print(f"== {path} ==")
        print(metrics.rows_as_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="femtosim",
        description="two-tier uplink interference simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a sweep from a config file")
    p_run.add_argument("--config", required=True, help="key = value scenario file")
    p_run.add_argument("--out", help=f"output directory (default $'{OUT_DIR_ENV}' or ./runs)")
    p_run.add_argument("--seed", type=int, help="override the config's master seed")
    p_run.add_argument("--parallelism", type=int, default=1, help="worker processes")
    p_run.set_defaults(func=cmd_run)

    p_pre = sub.add_parser("preset", help="run a named sweep bundle")
    p_pre.add_argument("--name", required=True, choices=("fig2", "fig3", "fig4", "fig5"))
    p_pre.add_argument("--out", help="output root (a subdirectory per preset is created)")
    p_pre.add_argument("--seed", type=int)
    p_pre.add_argument("--parallelism", type=int, default=1)
    p_pre.set_defaults(func=cmd_preset)

    p_rep = sub.add_parser("report", help="re-render results.csv files as tables")
    p_rep.add_argument("--in", dest="in_dir", required=True)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
