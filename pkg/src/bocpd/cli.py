"""Command-line entry point: ``bocpd detect | simulate | oracle``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure, 5 oracle mismatch.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from contextlib import ExitStack

import numpy as np

from .config import load_config
from .datasets import PosteriorWriter, PredictiveWriter, fmt, iter_series, write_changepoints, write_series
from .engine import Detector, DetectorConfig
from .errors import ConfigError, DataError, NumericalError
from .simulate import simulate
from .testkit import MAX_ENUMERATION_LENGTH, enumerate_posterior, max_relative_error

log = logging.getLogger("bocpd")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_MISMATCH = 5
ORACLE_TOLERANCE = 1e-9
CHUNK_SIZE = 1024


def _chunks(records, size):
    buf = []
    for rec in records:
        buf.append(rec.value)
        if len(buf) == size:
            yield buf
            buf = []
    if buf:
        yield buf


def cmd_detect(args) -> int:
    cfg = load_config(args.config).detector
    detector = Detector(cfg)
    steps, total, changepoints, prev_map = 0, 0.0, [], None
    with ExitStack() as stack:
        post = PosteriorWriter(
            stack.enter_context(open(args.posterior_out, "w", encoding="utf-8", newline="\n")),
            floor=cfg.truncation_threshold,
        )
        pred = PredictiveWriter(stack.enter_context(open(args.predictive_out, "w", encoding="utf-8", newline="\n")))
        for chunk in _chunks(iter_series(args.input), CHUNK_SIZE):
            block = detector.process(chunk, floor=cfg.truncation_threshold)
            post.write_block(block)
            pred.write_block(block)
            steps += len(block)
            total += math.fsum(block.log_evidence_increments)
            maps = block.map_run_lengths
            if prev_map is not None:
                maps = np.concatenate([[prev_map], maps])
                offset = block.t0
            else:
                offset = block.t0 + 1
            drops = np.flatnonzero(np.diff(maps) < 0)
            changepoints.extend((drops + 1 + offset).tolist())
            if len(block):
                prev_map = int(block.map_run_lengths[-1])
    summary = (
        f"steps = {steps}\n"
        f"total_log_evidence = {fmt(total)}\n"
        f"map_changepoints = {' '.join(map(str, changepoints))}\n"
    )
    if args.summary_out:
        with open(args.summary_out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(summary)
    else:
        sys.stdout.write(summary)
    log.info("processed %d observations", steps)
    return 0


def cmd_simulate(args) -> int:
    run = load_config(args.config)
    if run.length is None:
        raise ConfigError("missing config key 'length'")
    if run.length <= 0:
        raise ConfigError("config key 'length' must be positive")
    rng = np.random.default_rng(args.seed)
    data, changepoints = simulate(run.detector.model, run.gap, run.length, rng)
    write_series(data, args.out)
    write_changepoints(changepoints, args.truth_out)
    log.info("simulated %d points with %d changepoints", run.length, len(changepoints))
    return 0


def cmd_oracle(args) -> int:
    cfg = load_config(args.config).detector
    data = [rec.value for rec in iter_series(args.input)]
    if len(data) > MAX_ENUMERATION_LENGTH:
        raise ConfigError(f"oracle needs T <= {MAX_ENUMERATION_LENGTH}, input has {len(data)} points")
    exact = DetectorConfig(cfg.hazard, cfg.model, cfg.boundary, cfg.survival_horizon, 0.0)
    detector = Detector(exact)
    outcome = detector.run(data)[-1]
    horizon = exact.horizon() if exact.boundary == "survival" else None
    reference = enumerate_posterior(data, exact.model, exact.hazard, exact.boundary, horizon)
    err = max_relative_error(outcome.run_lengths, outcome.probabilities, reference)
    print(f"T = {len(data)}")
    print(f"max_relative_error = {err:.3e}")
    return 0 if err < ORACLE_TOLERANCE else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bocpd", description="Bayesian online changepoint detection")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the detector over a series")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--posterior-out", required=True)
    p.add_argument("--predictive-out", required=True)
    p.add_argument("--summary-out")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="sample a series from the generative model")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="compare the recursion with exhaustive enumeration")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
