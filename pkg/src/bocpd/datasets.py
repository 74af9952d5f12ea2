"""Series ingestion, preprocessing transforms and output serialisation.

Text formats (UTF-8, LF line endings, numbers as ``%.12g``):

* series: one value per line, or ``index,value``; ``#`` starts a comment.
* posterior matrix: header ``t,r,prob`` then one retained hypothesis per line.
* predictive series: header
  ``t,pred_mean,pred_std,log_evidence_increment,map_run_length``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from . import _kernels
from .engine import BlockResult, StepOutcome
from .errors import DataError

POSTERIOR_HEADER = "t,r,prob"
PREDICTIVE_HEADER = "t,pred_mean,pred_std,log_evidence_increment,map_run_length"
_EMIT_SLICE = 1 << 15  # triplets rendered per write
DAYS_PER_WEEK = 7


def fmt(v: float) -> str:
    return f"{v:.12g}"


@dataclass(frozen=True)
class SeriesRecord:
    index: int
    value: float


def iter_series(path) -> Iterator[SeriesRecord]:
    """Stream records from a series file without holding it in memory."""
    expected = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                if len(parts) == 1:
                    index, value = expected, float(parts[0])
                elif len(parts) == 2:
                    index, value = int(parts[0]), float(parts[1])
                else:
                    raise ValueError
            except ValueError:
                raise DataError(f"{path}:{lineno}: cannot parse {line!r}") from None
            if index != expected:
                raise DataError(f"{path}:{lineno}: index {index} breaks contiguity (expected {expected})")
            yield SeriesRecord(index, value)
            expected += 1
    if expected == 0:
        raise DataError(f"{path}: no observations")


def load_series(path) -> list[SeriesRecord]:
    return list(iter_series(path))


def returns_from_prices(prices) -> list[float]:
    """Simple returns ``p_t / p_{t-1} - 1`` of a closing-price series."""
    prices = [float(p) for p in prices]
    if len(prices) < 2:
        raise DataError("need at least two prices")
    for i, p in enumerate(prices):
        if not (p > 0 and math.isfinite(p)):
            raise DataError(f"price {i} is not positive: {p!r}")
    return [b / a - 1.0 for a, b in zip(prices, prices[1:])]


def bin_events_weekly(event_days, total_days: int) -> list[int]:
    """Count events per week; week ``k`` covers days ``[7k, 7k + 7)``.

    A trailing partial week gets its own bin.
    """
    if total_days <= 0:
        raise DataError("total_days must be positive")
    counts = [0] * -(-total_days // DAYS_PER_WEEK)
    for day in event_days:
        if day != int(day) or not 0 <= day < total_days:
            raise DataError(f"event day {day!r} outside [0, {total_days})")
        counts[int(day) // DAYS_PER_WEEK] += 1
    return counts


class PosteriorWriter:
    """Streams run-length posteriors as sparse ``t,r,prob`` triplets.

    Entries with probability below ``floor`` are skipped.
    """

    def __init__(self, fh: TextIO, floor: float = 0.0):
        self.fh = fh
        self.floor = floor
        fh.write(POSTERIOR_HEADER + "\n")

    def write(self, outcome: StepOutcome) -> None:
        probs = outcome.probabilities
        keep = probs >= self.floor
        self._emit(np.full(int(keep.sum()), outcome.t), outcome.run_lengths[keep], probs[keep])

    def write_block(self, block: BlockResult) -> None:
        # the block was produced with its own floor; re-apply ours
        keep = block.triplet_p >= self.floor
        self._emit(block.triplet_t[keep], block.triplet_r[keep], block.triplet_p[keep])

    def _emit(self, t, r, p) -> None:
        # render in bounded slices so the text buffer stays small on wide posteriors
        for lo in range(0, p.size, _EMIT_SLICE):
            hi = lo + _EMIT_SLICE
            self._emit_slice(t[lo:hi], r[lo:hi], p[lo:hi])

    def _emit_slice(self, t, r, p) -> None:
        n = p.size
        if p.min() >= _kernels.FORMAT_MIN:
            # compiled renderer, byte-identical to the %-format below
            buf = _kernels.format_triplets(
                np.ascontiguousarray(t, dtype=np.int64),
                np.ascontiguousarray(r, dtype=np.int64),
                np.ascontiguousarray(p, dtype=float),
            )
            self.fh.write(buf.tobytes().decode("ascii"))
            return
        flat: list = [None] * (3 * n)
        flat[0::3] = t.tolist()
        flat[1::3] = r.tolist()
        flat[2::3] = p.tolist()
        self.fh.write(("%d,%d,%.12g\n" * n) % tuple(flat))


class PredictiveWriter:
    def __init__(self, fh: TextIO):
        self.fh = fh
        fh.write(PREDICTIVE_HEADER + "\n")

    def write(self, outcome: StepOutcome) -> None:
        pred = outcome.predictive
        self.fh.write(
            "%d,%.12g,%.12g,%.12g,%d\n"
            % (outcome.t, pred.mean, pred.std, outcome.log_evidence_increment, outcome.map_run_length)
        )

    def write_block(self, block: BlockResult) -> None:
        n = len(block)
        if not n:
            return
        with np.errstate(invalid="ignore"):
            std = np.sqrt(block.predictive_variances)
        flat: list = [None] * (5 * n)
        flat[0::5] = range(block.t0 + 1, block.t0 + n + 1)
        flat[1::5] = block.predictive_means.tolist()
        flat[2::5] = std.tolist()
        flat[3::5] = block.log_evidence_increments.tolist()
        flat[4::5] = block.map_run_lengths.tolist()
        self.fh.write(("%d,%.12g,%.12g,%.12g,%d\n" * n) % tuple(flat))


def _write_all(outcomes: Iterable[StepOutcome], path, make_writer) -> None:
    outcomes = list(outcomes)
    if not outcomes:
        raise DataError("no outcomes to write")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = make_writer(fh)
        for o in outcomes:
            writer.write(o)


def write_posterior_matrix(outcomes: Iterable[StepOutcome], path, floor: float = 0.0) -> None:
    _write_all(outcomes, path, lambda fh: PosteriorWriter(fh, floor))


def write_predictive_series(outcomes: Iterable[StepOutcome], path) -> None:
    _write_all(outcomes, path, PredictiveWriter)


def _rows(path, header: str):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != header:
            raise DataError(f"{path}: expected header {header!r}, got {first!r}")
        for line in fh:
            if line.strip():
                yield line.rstrip("\n").split(",")


def read_posterior_matrix(path) -> dict[int, dict[int, float]]:
    out: dict[int, dict[int, float]] = {}
    for t, r, p in _rows(path, POSTERIOR_HEADER):
        out.setdefault(int(t), {})[int(r)] = float(p)
    return out


def read_predictive_series(path) -> list[dict[str, float]]:
    names = PREDICTIVE_HEADER.split(",")
    rows = []
    for parts in _rows(path, PREDICTIVE_HEADER):
        row = dict(zip(names, (float(v) for v in parts)))
        row["t"] = int(row["t"])
        row["map_run_length"] = int(row["map_run_length"])
        rows.append(row)
    return rows


def write_series(values: Iterable[float], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(fmt(v) + "\n" for v in values))


def write_changepoints(steps: Iterable[int], path) -> None:
    Path(path).write_text("".join(f"{s}\n" for s in steps), encoding="utf-8", newline="\n")
