"""Recursive run-length filtering.

The state carries the log posterior over retained run lengths together with
the accumulated log evidence, so ``log P(r_t, x_{1:t})`` is recovered as
their sum without the joint drifting towards ``-inf`` on long streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Optional

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericalError
from .hazard import HazardFunction
from .models import ConjugateModel, GaussianMean, GaussianScale, HyperparameterBank, PoissonRate

RESET = "reset"
SURVIVAL = "survival"
# suffix sums within this relative distance of the threshold count as equal to it
_TRUNCATION_RTOL = 1e-12


def logsumexp(a: np.ndarray) -> float:
    m = a.max()
    if m == -math.inf:
        return -math.inf
    return float(m + math.log(np.exp(a - m).sum()))


@dataclass
class DetectorConfig:
    hazard: HazardFunction
    model: ConjugateModel
    boundary: str = RESET
    survival_horizon: Optional[int] = None
    truncation_threshold: float = 0.0

    def __post_init__(self):
        if not isinstance(self.hazard, HazardFunction):
            raise ConfigError(f"hazard must be a HazardFunction, got {type(self.hazard).__name__}")
        if not isinstance(self.model, ConjugateModel):
            raise ConfigError(f"model must be a ConjugateModel, got {type(self.model).__name__}")
        if self.boundary not in (RESET, SURVIVAL):
            raise ConfigError(f"boundary must be 'reset' or 'survival', got {self.boundary!r}")
        if self.survival_horizon is not None:
            if int(self.survival_horizon) != self.survival_horizon or self.survival_horizon < 0:
                raise ConfigError("survival horizon must be a non-negative integer")
        if not 0.0 <= self.truncation_threshold < 1.0:
            raise ConfigError("truncation threshold must lie in [0, 1)")

    def horizon(self) -> int:
        if self.survival_horizon is not None:
            return int(self.survival_horizon)
        return self.hazard.default_horizon()


@dataclass(slots=True)
class RunLengthState:
    """Retained run-length hypotheses after ``time_index`` observations.

    ``log_posterior`` holds ``log P(r_t | x_{1:t})`` as computed before any
    truncation, so after truncation it sums to at most one; ``log_mass`` is
    its log-sum-exp.
    """

    time_index: int
    run_lengths: np.ndarray
    log_posterior: np.ndarray
    log_evidence: float = 0.0
    log_mass: Optional[float] = None

    def __post_init__(self):
        if self.log_mass is None:
            self.log_mass = logsumexp(self.log_posterior)

    @property
    def log_joint(self) -> np.ndarray:
        """log P(r_t, x_{1:t}) for each retained run length."""
        return self.log_posterior + self.log_evidence

    def posterior(self) -> np.ndarray:
        """Posterior renormalised over the retained hypotheses."""
        return np.exp(self.log_posterior - self.log_mass)

    def __len__(self):
        return self.run_lengths.size


class PredictiveMixture:
    """Posterior-weighted mixture of per-run-length predictives for the next datum.

    Moments are computed on first access.  ``variance`` is ``inf`` when a
    component with positive weight has no finite variance.
    """

    def __init__(self, weights, run_lengths, model: ConjugateModel, nu, chi):
        self.weights = weights
        self.run_lengths = run_lengths
        self.model = model
        self.nu = nu
        self.chi = chi

    @cached_property
    def _moments(self) -> tuple[float, float]:
        w = np.asarray(self.weights, dtype=float)
        m, v = self.model.predictive_moments(self.nu, self.chi)
        if np.shape(m) != w.shape or np.shape(v) != w.shape:
            m = np.broadcast_to(np.asarray(m, dtype=float), w.shape)
            v = np.broadcast_to(np.asarray(v, dtype=float), w.shape)
        mean, var = _kernels.mixture_moments(w, m, v)
        return float(mean), float(var)

    @property
    def mean(self) -> float:
        return self._moments[0]

    @property
    def variance(self) -> float:
        return self._moments[1]

    @property
    def std(self) -> float:
        return math.sqrt(self.variance) if self.variance == self.variance else math.nan

    @property
    def components(self) -> list[tuple[float, dict[str, float]]]:
        """(weight, predictive parameters) for every retained run length."""
        params = {
            k: np.broadcast_to(v, self.weights.shape)
            for k, v in self.model.predictive_params(self.nu, self.chi).items()
        }
        return [
            (float(w), {k: float(v[i]) for k, v in params.items()})
            for i, w in enumerate(self.weights)
        ]

    def log_density(self, x: float) -> float:
        with np.errstate(divide="ignore"):
            return logsumexp(np.log(self.weights) + self.model.log_predictive(self.nu, self.chi, x))


@dataclass(slots=True)
class StepOutcome:
    t: int
    run_lengths: np.ndarray
    probabilities: np.ndarray
    log_evidence_increment: float
    map_run_length: int
    predictive: PredictiveMixture

    @property
    def posterior(self) -> list[tuple[int, float]]:
        return list(zip(self.run_lengths.tolist(), self.probabilities.tolist()))


def init(config: DetectorConfig) -> tuple[RunLengthState, HyperparameterBank]:
    """Initial run-length prior and the matching prior hyperparameter bank."""
    if config.boundary == RESET:
        state = RunLengthState(0, np.zeros(1, dtype=np.int64), np.zeros(1))
    else:
        horizon = config.horizon()
        log_s = config.hazard.log_survival(horizon)
        state = RunLengthState(0, np.arange(horizon + 1, dtype=np.int64), log_s - logsumexp(log_s))
    # no pre-window data: every hypothesis starts from the prior
    return state, HyperparameterBank.prior(config.model, len(state))


def _suffix_keep(probs: np.ndarray, threshold: float) -> int:
    """Number of leading hypotheses to keep under a tail-mass threshold."""
    n = probs.size
    if threshold <= 0 or n <= 2:
        return n
    tail = np.cumsum(probs[::-1])
    # trailing entries whose suffix sum is strictly below the threshold
    drop = int(np.searchsorted(tail, threshold * (1.0 - _TRUNCATION_RTOL) * tail[-1], side="left"))
    return max(n - drop, 2)


def truncate(state: RunLengthState, threshold: float) -> RunLengthState:
    """Drop the longest tail of run lengths whose posterior mass is below ``threshold``.

    ``r = 0`` and at least two hypotheses always survive.  Survivors keep
    their log values; nothing is renormalised.
    """
    keep = _suffix_keep(state.posterior(), threshold)
    if keep >= len(state):
        return state
    return RunLengthState(
        state.time_index, state.run_lengths[:keep], state.log_posterior[:keep], state.log_evidence
    )


def step(
    state: RunLengthState,
    bank: HyperparameterBank,
    datum: float,
    hazard: HazardFunction,
    threshold: float = 0.0,
) -> tuple[RunLengthState, HyperparameterBank, StepOutcome]:
    """Absorb one observation: predictive, growth, changepoint, evidence, posterior.

    Growth mass for hypothesis ``r`` is its posterior times the predictive
    times ``1 - H(r + 1)``; the changepoint mass at ``r = 0`` sums the same
    products with ``H(r + 1)``.  The evidence increment is the log of the
    posterior-weighted predictive mixture.
    """
    datum = float(datum)
    model = bank.model
    model.check_datum(datum)
    weighted = state.log_posterior + model.log_predictive(bank.nu, bank.chi, datum)
    log_h, log_cont = hazard.log_term_arrays(state.run_lengths + 1)
    new, probs, keep, total, log_mass, best, status = _kernels.advance(
        weighted, log_h, log_cont, threshold, _TRUNCATION_RTOL
    )
    if status != _kernels.OK:
        what = "is NaN" if status == _kernels.NAN_MASS else "is zero under every run-length hypothesis"
        raise NumericalError(f"predictive mass of x={datum!r} {what} at t={state.time_index + 1}")

    increment = total - state.log_mass
    run_lengths = _kernels.shift(state.run_lengths, 0, 1, keep)
    bank = bank.update(datum, keep)
    probs = probs[:keep]
    state = RunLengthState(
        state.time_index + 1, run_lengths, new[:keep], state.log_evidence + increment, log_mass
    )
    # ties go to the shorter run (first maximum)
    map_r = int(run_lengths[best])
    mixture = PredictiveMixture(probs, run_lengths, model, bank.nu, bank.chi)
    return state, bank, StepOutcome(state.time_index, run_lengths, probs, increment, map_r, mixture)


def predict(state: RunLengthState, bank: HyperparameterBank) -> PredictiveMixture:
    return PredictiveMixture(state.posterior(), state.run_lengths, bank.model, bank.nu, bank.chi)


def map_changepoints(map_run_lengths: Iterable) -> list[int]:
    """1-indexed steps at which the MAP run length decreased.

    Accepts a sequence of :class:`StepOutcome` or of plain MAP run lengths.
    """
    out = []
    prev = None
    for t, item in enumerate(map_run_lengths, start=1):
        r = item.map_run_length if isinstance(item, StepOutcome) else int(item)
        if prev is not None and r < prev:
            out.append(t)
        prev = r
    return out


@dataclass
class BlockResult:
    """Per-step outputs of :meth:`Detector.process` for steps ``t0 + 1 .. t0 + n``.

    ``triplet_*`` hold the posterior entries at or above the requested floor,
    with ``triplet_t`` as absolute 1-indexed step numbers.
    """

    t0: int
    log_evidence_increments: np.ndarray
    map_run_lengths: np.ndarray
    predictive_means: np.ndarray
    predictive_variances: np.ndarray
    triplet_t: np.ndarray
    triplet_r: np.ndarray
    triplet_p: np.ndarray

    def __len__(self):
        return self.log_evidence_increments.size


_BUNDLED_MODELS = (GaussianMean, GaussianScale, PoissonRate)


class Detector:
    """Streaming detector for a single series.

    Not safe for concurrent mutation; independent instances share nothing.
    """

    def __init__(self, config: DetectorConfig):
        self.config = config
        self.state, self.bank = init(config)

    @property
    def hazard(self) -> HazardFunction:
        return self.config.hazard

    def update(self, x: float) -> StepOutcome:
        self.state, self.bank, outcome = step(
            self.state, self.bank, x, self.config.hazard, self.config.truncation_threshold
        )
        return outcome

    def predict(self) -> PredictiveMixture:
        return predict(self.state, self.bank)

    def process(self, values, floor: float = 0.0) -> BlockResult:
        """Absorb a block of observations, returning arrays instead of outcomes.

        Bundled models with constant or tabulated hazards run through the
        compiled driver; anything else falls back to :meth:`update`.  On a
        bad datum the state is left just before it and the error is raised.
        """
        values = np.ascontiguousarray(values, dtype=float)
        model, hazard = self.config.model, self.config.hazard
        spec = model.kernel_spec() if type(model) in _BUNDLED_MODELS else None
        tables = hazard.kernel_tables() if spec is not None else None
        t0 = self.state.time_index
        if tables is None:
            return self._process_slow(values, floor)
        kind, consts = spec
        state, bank = self.state, self.bank
        (log_post, run_lengths, nu, chi, log_mass, incr, map_r, pmean, pvar,
         tri_t, tri_r, tri_p, done, status) = _kernels.run_block(
            state.log_posterior, state.run_lengths, bank.nu, bank.chi, state.log_mass, values,
            kind, consts, float(model.prior_nu), float(model.prior_chi), tables[0], tables[1],
            float(self.config.truncation_threshold), _TRUNCATION_RTOL, float(floor),
        )
        if done:
            self.state = RunLengthState(
                t0 + done, run_lengths, log_post, state.log_evidence + math.fsum(incr), log_mass
            )
            self.bank = HyperparameterBank(model, nu, chi)
        if status != _kernels.OK:
            # replay the failing datum on the reference path for its diagnostic
            self.update(values[done])
            raise NumericalError(f"block driver failed at t={t0 + done + 1}")
        return BlockResult(t0, incr, map_r, pmean, pvar, tri_t + (t0 + 1), tri_r, tri_p)

    def _process_slow(self, values, floor) -> BlockResult:
        t0 = self.state.time_index
        incr, map_r, pmean, pvar = [], [], [], []
        tri = [], [], []
        for x in values:
            o = self.update(x)
            incr.append(o.log_evidence_increment)
            map_r.append(o.map_run_length)
            pmean.append(o.predictive.mean)
            pvar.append(o.predictive.variance)
            sel = o.probabilities >= floor
            tri[0].append(np.full(int(sel.sum()), o.t, dtype=np.int64))
            tri[1].append(o.run_lengths[sel])
            tri[2].append(o.probabilities[sel])

        def cat(parts, dtype):
            return np.concatenate(parts).astype(dtype) if parts else np.empty(0, dtype)

        return BlockResult(
            t0,
            np.asarray(incr, dtype=float),
            np.asarray(map_r, dtype=np.int64),
            np.asarray(pmean, dtype=float),
            np.asarray(pvar, dtype=float),
            cat(tri[0], np.int64),
            cat(tri[1], np.int64),
            cat(tri[2], float),
        )

    def stream(self, data: Iterable[float]) -> Iterator[StepOutcome]:
        for x in data:
            yield self.update(x)

    def run(self, data: Iterable[float]) -> list[StepOutcome]:
        return list(self.stream(data))
