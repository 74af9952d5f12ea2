"""Gap distributions, hazard functions and survival functions.

A gap distribution is a pmf over segment lengths ``g >= 1``.  The hazard
``H(tau)`` is the probability that a run ends at length ``tau`` given that it
reached ``tau``, and the survival ``S(tau)`` is the probability that a gap is
longer than ``tau``.  Everything the detector needs is exposed in log space
through :meth:`HazardFunction.log_terms`.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from .errors import ConfigError

DEFAULT_SURVIVAL_TOL = 1e-6


class GapDistribution(ABC):
    """Prior over the number of steps between consecutive changepoints."""

    @abstractmethod
    def pmf(self, g) -> np.ndarray:
        """P_gap(g) for integer ``g`` (zero outside ``g >= 1``)."""

    @abstractmethod
    def survival(self, tau) -> np.ndarray:
        """Tail mass ``sum_{t > tau} P_gap(t)``."""

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> int:
        ...


class GeometricGap(GapDistribution):
    """Discrete exponential gap with timescale ``lam`` (mean gap ``lam``)."""

    def __init__(self, timescale: float):
        if not timescale >= 1:
            raise ConfigError(f"geometric timescale must be >= 1, got {timescale!r}")
        self.timescale = float(timescale)
        self.p = 1.0 / self.timescale

    def pmf(self, g):
        g = np.asarray(g, dtype=float)
        # 0**0 == 1 keeps lam == 1 a point mass at g = 1
        out = self.p * np.power(1.0 - self.p, np.maximum(g - 1.0, 0.0))
        return np.where(g >= 1, out, 0.0)

    def survival(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.where(tau <= 0, 1.0, np.power(1.0 - self.p, np.maximum(tau, 0.0)))

    def sample(self, rng):
        return int(rng.geometric(self.p))

    def __repr__(self):
        return f"GeometricGap({self.timescale!r})"


class TabulatedGap(GapDistribution):
    """Explicit finite pmf over ``g = 1..G``.

    Suffix sums are precomputed so survival and hazard queries are O(1).
    """

    def __init__(self, probabilities):
        probs = np.asarray(probabilities, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ConfigError("gap table must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ConfigError("gap probabilities must be finite and non-negative")
        total = probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"gap probabilities sum to {total!r}, expected 1")
        self.probs = probs
        # tail[k] = S(k) = sum_{g > k} pmf(g), k = 0..G
        tail = np.concatenate([np.cumsum(probs[::-1])[::-1], [0.0]])
        tail[0] = 1.0
        self._tail = tail
        if np.any(tail[:-1] <= 0):
            bad = int(np.argmax(tail[:-1] <= 0)) + 1
            raise ConfigError(f"gap table has zero tail mass at g={bad} inside its support")

    @classmethod
    def from_mapping(cls, table: dict[int, float]) -> "TabulatedGap":
        if not table:
            raise ConfigError("empty gap table")
        if min(table) < 1:
            raise ConfigError("gap lengths must be positive integers")
        probs = np.zeros(max(table))
        for g, p in table.items():
            probs[g - 1] = p
        return cls(probs)

    @property
    def max_gap(self) -> int:
        return self.probs.size

    def pmf(self, g):
        g = np.asarray(g)
        idx = np.clip(g - 1, 0, self.max_gap - 1).astype(int)
        return np.where((g >= 1) & (g <= self.max_gap), self.probs[idx], 0.0)

    def survival(self, tau):
        tau = np.asarray(tau)
        return self._tail[np.clip(tau, 0, self.max_gap).astype(int)]

    def sample(self, rng):
        return int(rng.choice(self.max_gap, p=self.probs)) + 1

    def __repr__(self):
        return f"TabulatedGap({self.probs.tolist()!r})"


def survival(gap: GapDistribution, tau: int) -> float:
    """Probability that a gap drawn from ``gap`` exceeds ``tau`` steps."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return float(gap.survival(tau))


class HazardFunction(ABC):
    """Maps a run length ``tau >= 1`` to the probability the run ends there."""

    def __call__(self, tau) -> np.ndarray:
        tau = np.asarray(tau)
        log_h, _ = self.log_terms(tau)
        return np.exp(np.broadcast_to(log_h, tau.shape))

    @abstractmethod
    def log_terms(self, tau):
        """Return ``(log H(tau), log(1 - H(tau)))``.

        Implementations may return scalars when the hazard does not depend
        on ``tau``; callers rely on broadcasting.
        """

    def log_term_arrays(self, tau):
        """:meth:`log_terms` as float arrays: length one when constant, else aligned with ``tau``."""
        log_h, log_c = self.log_terms(tau)
        if np.ndim(log_h) == 0 and np.ndim(log_c) == 0:
            return np.full(1, float(log_h)), np.full(1, float(log_c))
        shape = np.shape(tau)
        return (
            np.ascontiguousarray(np.broadcast_to(np.asarray(log_h, dtype=float), shape)),
            np.ascontiguousarray(np.broadcast_to(np.asarray(log_c, dtype=float), shape)),
        )

    def kernel_tables(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Hazard/continuation log tables for the compiled block driver.

        Length one means constant; otherwise entry ``k`` is the value at
        ``tau = k + 1`` and the last entry holds beyond the table.
        """
        return None

    def log_survival(self, horizon: int) -> np.ndarray:
        """``log S(tau)`` for ``tau = 0..horizon`` via the product of continuation terms."""
        tau = np.arange(1, horizon + 1)
        _, log_cont = self.log_terms(tau)
        log_cont = np.broadcast_to(log_cont, tau.shape)
        return np.concatenate([[0.0], np.cumsum(log_cont)])

    @abstractmethod
    def default_horizon(self, tol: float = DEFAULT_SURVIVAL_TOL) -> int:
        """Smallest ``tau`` with ``S(tau) < tol``."""


class ConstantHazard(HazardFunction):
    """Memoryless hazard ``H = 1/lam`` of a geometric gap.

    ``lam = inf`` gives a hazard of exactly zero (no changepoints).
    """

    def __init__(self, timescale: float):
        timescale = float(timescale)
        if not timescale >= 1:
            raise ConfigError(f"hazard timescale must be >= 1, got {timescale!r}")
        self.timescale = timescale
        self.rate = 1.0 / timescale
        with np.errstate(divide="ignore"):
            self._log_h = float(np.log(self.rate))
            self._log_cont = float(np.log1p(-self.rate))
        self._arrays = (np.full(1, self._log_h), np.full(1, self._log_cont))
        self._arrays[0].flags.writeable = False
        self._arrays[1].flags.writeable = False

    def log_terms(self, tau):
        return self._log_h, self._log_cont

    def log_term_arrays(self, tau):
        return self._arrays

    def kernel_tables(self):
        return self._arrays[0].copy(), self._arrays[1].copy()

    @property
    def gap(self) -> GeometricGap:
        return GeometricGap(self.timescale)

    def default_horizon(self, tol=DEFAULT_SURVIVAL_TOL):
        if self.rate == 0:
            raise ConfigError("zero hazard has no finite survival horizon; set one explicitly")
        if self.rate == 1:
            return 1
        # smallest tau with (1 - p)^tau < tol
        tau = max(math.ceil(math.log(tol) / self._log_cont), 1)
        if tau * self._log_cont >= math.log(tol):
            tau += 1
        return tau

    def __repr__(self):
        return f"ConstantHazard({self.timescale!r})"


class GapHazard(HazardFunction):
    """Hazard derived from a gap pmf: ``H(tau) = P_gap(tau) / sum_{t >= tau} P_gap(t)``."""

    def __init__(self, gap: GapDistribution):
        self.gap = gap
        if isinstance(gap, TabulatedGap):
            tail = gap._tail
            with np.errstate(divide="ignore"):
                # index tau - 1 for tau = 1..G; beyond the support H = 1
                self._log_h = np.log(gap.probs) - np.log(tail[:-1])
                self._log_cont = np.log(tail[1:]) - np.log(tail[:-1])
            self._log_cont[-1] = -np.inf
            self._log_h[-1] = 0.0

    def log_terms(self, tau):
        gap = self.gap
        if isinstance(gap, GeometricGap):
            # memoryless: closed form, no tail summation
            log_cont = math.log1p(-gap.p) if gap.p < 1 else -math.inf
            return math.log(gap.p), log_cont
        if isinstance(gap, TabulatedGap):
            tau = np.asarray(tau)
            idx = np.clip(tau, 1, gap.max_gap) - 1
            return self._log_h[idx], self._log_cont[idx]
        tau = np.asarray(tau)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = gap.pmf(tau)
            prev = gap.survival(tau - 1)
            nxt = gap.survival(tau)
            if np.any(prev <= 0):
                raise ConfigError("hazard undefined where the gap tail is exhausted")
            return np.log(p) - np.log(prev), np.log(nxt) - np.log(prev)

    def kernel_tables(self):
        gap = self.gap
        if isinstance(gap, GeometricGap):
            log_h, log_c = self.log_terms(None)
            return np.array([log_h]), np.array([log_c])
        if isinstance(gap, TabulatedGap):
            # one extra entry so a one-point support is not mistaken for a constant
            return np.append(self._log_h, 0.0), np.append(self._log_cont, -np.inf)
        return None

    def default_horizon(self, tol=DEFAULT_SURVIVAL_TOL):
        gap = self.gap
        if isinstance(gap, GeometricGap):
            return ConstantHazard(gap.timescale).default_horizon(tol)
        if isinstance(gap, TabulatedGap):
            return int(np.argmax(gap._tail < tol))
        tau = 0
        while gap.survival(tau) >= tol:
            tau += 1
        return tau

    def __repr__(self):
        return f"GapHazard({self.gap!r})"


def hazard_constant(timescale: float) -> ConstantHazard:
    return ConstantHazard(timescale)


def hazard_from_gap(gap: GapDistribution) -> GapHazard:
    return GapHazard(gap)


def read_gap_table(path) -> TabulatedGap:
    """Read a two-column ``g, probability`` file (comma or whitespace separated)."""
    table: dict[int, float] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        try:
            if len(parts) != 2:
                raise ValueError
            g_float, p = float(parts[0]), float(parts[1])
            g = int(g_float)
            if g != g_float:
                raise ValueError
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: expected 'g, probability', got {raw!r}") from None
        if g in table:
            raise ConfigError(f"{path}:{lineno}: duplicate gap length {g}")
        table[g] = p
    return TabulatedGap.from_mapping(table)
