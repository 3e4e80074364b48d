"""``co3-lab`` command line: run experiments and identity checks."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_config
from .evaluation import assign_modes
from .identities import composition_suite, score_suite
from .pipeline import CO3, PLAIN_CFG, sweep
from .render import render_contours
from .schedule import default_schedule

log = logging.getLogger("co3lab")

SAMPLE_COLUMNS = ["seed", "method", "x", "y", "mode_tag"]
CONFIG_COLUMNS = ["config_index", "method", "lam", "num_steps", "num_resampling", "num_correct", "num_iters", "beta", "seed"]


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def _csv(rows: List[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def samples_csv(results, system, radius) -> str:
    rows = [SAMPLE_COLUMNS]
    for r in results:
        assignments, _ = assign_modes(r.samples, system, radius)
        label = r.config.label()
        for seed, (x, y), a in zip(r.seeds, r.samples, assignments):
            rows.append([fmt(int(seed)), label, fmt(x), fmt(y), a.tag or "unassigned"])
    return _csv(rows)


def report_csv(results) -> str:
    header = None
    rows = []
    for r in results:
        c = r.config
        row = dict(zip(CONFIG_COLUMNS, [r.config_index, c.label(), c.lam, c.num_steps, c.num_resampling,
                                         c.num_correct, c.num_iters, c.beta, c.seed]))
        row.update(r.report.as_row())
        if header is None:
            header = list(row)
        rows.append([fmt(row[k]) for k in header])
    return _csv([header] + rows)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Path] = None) -> List[Path]:
    """Run every sampler config and write samples.csv, report.csv and contour.svg.

    Files are rendered in memory first; if writing fails any file already
    written is removed.
    """
    out_dir = Path(out_dir or cfg.output_dir)
    system = cfg.system
    schedule = cfg.schedule()
    results = sweep(cfg.samplers, system, schedule, cfg.replicates, cfg.radius)
    artifacts = {
        "samples.csv": samples_csv(results, system, cfg.radius),
        "report.csv": report_csv(results),
    }
    if cfg.plots:
        k = system.num_concepts
        weights = np.array([2.0] + [-1.0 / k] * k)
        base = next((r.samples for r in results if r.config.method == PLAIN_CFG), None)
        co3 = next((r.samples for r in results if r.config.method == CO3), None)
        artifacts["contour.svg"] = render_contours(system, weights, cfg.grid_resolution, base, co3)

    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for name, text in artifacts.items():
            path = out_dir / name
            path.write_text(text)
            written.append(path)
    except OSError:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def run_checks(trials: int = 1000, seed: int = 0) -> bool:
    ok = True
    lem = composition_suite(trials, seed)
    checks = [
        ("unit-sum composition residual <= 1e-10", lem["unit_sum_max_residual"] <= 1e-10, lem["unit_sum_max_residual"]),
        ("unit-sum form breaks off-regime (>=99%)", lem["unit_sum_offregime_detect_rate"] >= 0.99, lem["unit_sum_offregime_detect_rate"]),
        ("zero-sum composition residual <= 1e-10", lem["zero_sum_max_residual"] <= 1e-10, lem["zero_sum_max_residual"]),
        ("zero-sum form breaks off-regime (>=99%)", lem["zero_sum_offregime_detect_rate"] >= 0.99, lem["zero_sum_offregime_detect_rate"]),
    ]
    fd = score_suite(default_schedule(), trials=100, seed=seed)
    checks.append(("exact epsilon vs finite differences < 1e-5", fd < 1e-5, fd))
    for name, passed, value in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}  ({value:.3g})")
        ok &= passed
    return ok


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="co3-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (overrides the config)")
    p_run.add_argument("--seed", type=int, default=None, help="base seed for every sampler")
    p_run.add_argument("--no-plots", action="store_true")
    p_check = sub.add_parser("check", help="run the identity suites")
    p_check.add_argument("--trials", type=int, default=1000)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "check":
        return 0 if run_checks(args.trials) else 1

    try:
        cfg = parse_config(args.config)
    except ConfigError as err:
        for p in err.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.samplers = [replace(s, seed=args.seed) for s in cfg.samplers]
    if args.no_plots:
        cfg.plots = False
    try:
        paths = run_experiment(cfg, Path(args.out) if args.out else None)
    except Exception as err:  # noqa: BLE001 - any module error is a failed run
        log.error("experiment failed: %s", err)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
