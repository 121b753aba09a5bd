"""Command-line interface: ``ewls simulate | estimate | compare``.

Exit codes
----------
0  success
2  usage or configuration error (diagnostic names the offending key)
3  the information never became full rank, so no estimate could be written
4  ``estimate --mode kf`` was given an out-of-sequence measurement
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .batch import BatchProblem, batch_solve
from .config import load_scenario
from .csvio import CSVFormatError, atomic_write_text, read_measurements, write_estimates, write_measurements, write_truth
from .errors import ConfigInvalid, SingularInformation
from .kalman import KalmanState, kf_predict, kf_update
from .model import ExponentialWeight, Measurement
from .recursive import init_uninformative, smooth_fixed_lag, update_oosm
from .simulation import FilterSpec, Scenario, generate, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SINGULAR = 3
EXIT_KF_OOSM = 4


class OutOfSequence(Exception):
    pass


def _pick_filter(scenario: Scenario, mode: str) -> FilterSpec:
    kinds = ("kf",) if mode == "kf" else ("ewif", "ewis")
    for f in scenario.filters:
        if f.kind in kinds:
            return f
    raise ConfigInvalid(f"no filter of kind {' or '.join(kinds)} for mode {mode!r}", "filters")


def _sensor_table(scenario: Scenario, dim: int) -> dict:
    return {s.name: (s.H_matrix[:, :dim], s.noise_covariance()) for s in scenario.sensors}


def estimate_rows(mode: str, spec: FilterSpec, measurements: list[Measurement], lag: float = 0.0):
    """Estimate after every measurement; rows are ``(t, x, P)``.

    Rows are produced only once the estimate is defined.
    """
    rows = []
    if mode == "kf":
        n = spec.dim
        ks = KalmanState(np.zeros(n), spec.prior_variance * np.eye(n),
                         measurements[0].valid_time if measurements else 0.0,
                         spec.transition_model(), spec.process_noise())
        for i, m in enumerate(measurements):
            if m.valid_time < ks.time:
                raise OutOfSequence(
                    f"row {i + 2}: t_valid={m.valid_time!r} precedes filter time {ks.time!r}; "
                    "the reference Kalman filter has no out-of-sequence path"
                )
            ks = kf_update(kf_predict(ks, m.valid_time), m)
            rows.append((ks.time, ks.x_hat, ks.P))
        return rows

    model = spec.transition_model()
    weight = ExponentialWeight(spec.tau)
    if mode == "ewif":
        fs = init_uninformative(model, weight, measurements[0].arrival_time if measurements else 0.0)
        for m in measurements:
            fs = smooth_fixed_lag(fs, m, lag) if lag else update_oosm(fs, m)
            if fs.estimate.is_defined:
                rows.append((fs.time, fs.x_hat, fs.covariance))
        return rows

    if mode == "batch":
        for i, m in enumerate(measurements):
            problem = BatchProblem(m.arrival_time - lag, measurements[: i + 1], model, weight)
            try:
                est = batch_solve(problem)
            except SingularInformation:
                continue
            rows.append((est.time, est.x_hat, est.covariance))
        return rows
    raise ValueError(f"unknown mode {mode!r}")


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.config)
    seed = scenario.seed if args.seed is None else args.seed
    truth, measurements = generate(scenario, seed)
    write_measurements(args.out, measurements)
    if args.truth:
        write_truth(args.truth, truth.times, truth.states)
    return EXIT_OK


def cmd_estimate(args) -> int:
    scenario = load_scenario(args.config)
    spec = _pick_filter(scenario, args.mode)
    lag = args.lag
    if lag is None:
        lag = spec.lag if spec.kind == "ewis" else 0.0
    if lag < 0:
        raise ConfigInvalid("must be >= 0", "--lag")
    if args.mode == "kf" and lag:
        raise ConfigInvalid("the reference Kalman filter has no smoother", "--lag")
    measurements = read_measurements(args.measurements, _sensor_table(scenario, spec.dim))
    try:
        rows = estimate_rows(args.mode, spec, measurements, lag)
    except OutOfSequence as exc:
        print(f"ewls estimate: {exc}", file=sys.stderr)
        return EXIT_KF_OOSM
    if not rows:
        print("ewls estimate: information never became full rank; no estimate written", file=sys.stderr)
        return EXIT_SINGULAR
    write_estimates(args.out, rows, spec.dim)
    return EXIT_OK


def compare_report(scenario: Scenario, runs: int, base_seed: int) -> dict:
    names = [f.name for f in scenario.filters]
    rms = {n: [] for n in names}
    seconds = {n: 0.0 for n in names}
    start = time.perf_counter()
    for i in range(runs):
        rep = run(scenario, base_seed + i)
        for n in names:
            rms[n].append(rep.filters[n].rms)
            seconds[n] += rep.filters[n].seconds
    wall = time.perf_counter() - start
    arr = {n: np.array(v) for n, v in rms.items()}
    filters = {
        n: {
            "mean_rms": float(np.mean(arr[n])),
            "std_rms": float(np.std(arr[n], ddof=1)) if runs > 1 else 0.0,
            "rms": [float(v) for v in arr[n]],
            "seconds": seconds[n],
        }
        for n in names
    }
    wins = {a: {b: float(np.mean(arr[a] < arr[b])) for b in names if b != a} for a in names}
    return {
        "runs": runs,
        "base_seed": base_seed,
        "filters": filters,
        "win_rates": wins,
        "wall_clock_seconds": wall,
    }


def cmd_compare(args) -> int:
    if args.runs < 1:
        raise ConfigInvalid("must be >= 1", "--runs")
    scenario = load_scenario(args.config)
    if not scenario.filters:
        raise ConfigInvalid("at least one filter is required", "filters")
    seed = scenario.seed if args.seed is None else args.seed
    report = compare_report(scenario, args.runs, seed)
    report["config"] = str(args.config)
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=True) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ewls", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw truth and measurement CSVs from a scenario")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", required=True, type=Path, help="measurement CSV to write")
    p.add_argument("--truth", type=Path, default=None, help="truth CSV to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run an estimator over a measurement CSV")
    p.add_argument("measurements", type=Path)
    p.add_argument("--mode", required=True, choices=["ewif", "kf", "batch"])
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--lag", type=float, default=None, help="fixed-lag smoothing delay (s)")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare", help="Monte Carlo RMS comparison of the configured filters")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, help="first seed (default: config seed)")
    p.add_argument("--out", type=Path, default=None, help="JSON report (default: stdout)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, CSVFormatError) as exc:
        print(f"ewls {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularInformation as exc:
        print(f"ewls {args.command}: {exc}", file=sys.stderr)
        return EXIT_SINGULAR


if __name__ == "__main__":
    sys.exit(main())
