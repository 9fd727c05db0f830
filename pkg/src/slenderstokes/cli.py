"""stokes-bench: run a benchmark experiment and write CSV/JSON/SVG artifacts.

Usage: stokes-bench <experiment> [--config file] [--override key=value ...]
       [--out dir] [--no-plot]

Writes <experiment>.csv and <experiment>.meta.json (plus <experiment>.svg
unless plotting is disabled) into the output directory. Exit code 0 on full
success, 2 if any solve failed to converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    meta_sidecar,
    run_experiment,
)


def _load_config(experiment: str, path: str | None,
                 overrides: list[str]) -> ExperimentConfig:
    d = {}
    if path:
        with open(path) as fh:
            d = json.load(fh)
    d["experiment"] = experiment
    cfg = ExperimentConfig.from_dict(d)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise SystemExit(f"bad override {item!r}: expected key=value")
        cfg = cfg.override(key.strip(), raw.strip())
    return cfg


def write_csv(path: str, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow(r)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stokes-bench",
        description="Stokes slender-channel preconditioner benchmarks")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE", help="config override (repeatable)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--no-plot", action="store_true",
                        help="skip the SVG figure")
    args = parser.parse_args(argv)

    cfg = _load_config(args.experiment, args.config, args.override)
    os.makedirs(args.out, exist_ok=True)

    columns, rows, ok = run_experiment(cfg)

    base = os.path.join(args.out, cfg.experiment)
    write_csv(base + ".csv", columns, rows)
    with open(base + ".meta.json", "w") as fh:
        json.dump(meta_sidecar(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not args.no_plot:
        from .plots import render_figure

        render_figure(cfg.experiment, columns, rows, base + ".svg")

    print(f"{cfg.experiment}: {len(rows)} rows -> {base}.csv")
    if not ok:
        print("warning: at least one solve did not converge", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
