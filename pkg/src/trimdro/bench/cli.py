"""Command line: ``bench run`` (tuned replications) and ``bench sweep`` (parameter curves)."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ExperimentConfig
from .runner import run_experiment, run_sweep, write_outputs, write_sweep


def _grid(text: str | None):
    if text is None:
        return None
    text = text.strip()
    if text.startswith("["):
        return [float(v) for v in json.loads(text)]
    return [float(v) for v in text.split(",") if v.strip()]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="bench", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("run", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--runs", type=int, default=None, help="overrides the number of runs")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep":
            p.add_argument("--param-grid", default=None,
                           help="comma-separated or JSON list; defaults to each method's grid")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = ExperimentConfig.load(args.config).with_overrides(seed=args.seed, runs=args.runs)
    if args.cmd == "run":
        records, summary = run_experiment(cfg, threads=args.threads)
        write_outputs(args.out, records, summary)
        print(f"wrote {len(records)} records to {args.out}")
    else:
        rows, summary = run_sweep(cfg, _grid(args.param_grid), threads=args.threads)
        write_sweep(args.out, rows, summary)
        print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
