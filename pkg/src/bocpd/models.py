"""Conjugate-exponential observation models.

Each model summarises the data of a run by a count ``nu`` and a running sum
``chi`` of the sufficient statistic ``u(x)``.  The prior enters as
``(prior_nu, prior_chi)`` together with model constants, so the posterior
after a run ``x_1..x_r`` is always ``(prior_nu + r, prior_chi + sum u(x_i))``.

Third-party models plug in by subclassing :class:`ConjugateModel` and
providing ``sufficient_stat``, ``check_datum``, ``log_predictive`` and
``predictive_moments``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError


class ConjugateModel(ABC):
    """Contract for an exponential-family likelihood with a conjugate prior."""

    name: str = "model"
    prior_nu: float = 0.0
    prior_chi: float = 0.0

    @abstractmethod
    def sufficient_stat(self, x: float) -> float:
        """u(x)."""

    def check_datum(self, x: float) -> None:
        """Raise :class:`DataError` if ``x`` is outside the support."""
        if not math.isfinite(x):
            raise DataError(f"non-finite observation {x!r}")

    @abstractmethod
    def log_predictive(self, nu: np.ndarray, chi: np.ndarray, x: float) -> np.ndarray:
        """Parameter-marginal predictive log density of ``x`` for each ``(nu, chi)``."""

    @abstractmethod
    def predictive_moments(self, nu: np.ndarray, chi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean and variance (``inf`` where the variance diverges)."""

    def predictive_params(self, nu: np.ndarray, chi: np.ndarray) -> dict[str, np.ndarray]:
        return {"nu": np.asarray(nu), "chi": np.asarray(chi)}

    def kernel_spec(self) -> tuple[int, np.ndarray] | None:
        """(model kind, constants) for the compiled block driver, if supported."""
        return None

    # generative side, used by the simulator
    def sample_parameter(self, rng: np.random.Generator) -> float:
        raise NotImplementedError(f"{self.name} has no parameter sampler")

    def sample_datum(self, param: float, rng: np.random.Generator) -> float:
        raise NotImplementedError(f"{self.name} has no data sampler")


def _flat(nu, chi):
    if (
        type(nu) is np.ndarray and type(chi) is np.ndarray
        and nu.ndim == 1 and nu.dtype == np.float64 and chi.dtype == np.float64
        and nu.shape == chi.shape
    ):
        return nu, chi, None
    nu, chi = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(chi, dtype=float))
    return np.ascontiguousarray(nu).ravel(), np.ascontiguousarray(chi).ravel(), nu.shape


def _vectorised(kernel, nu, chi, x, *consts):
    """Apply a compiled per-slot density kernel to broadcastable ``nu``/``chi``."""
    nu, chi, shape = _flat(nu, chi)
    out = kernel(nu, chi, float(x), *consts)
    return out if shape is None else out.reshape(shape)


def _vectorised_moments(kernel, nu, chi, *consts):
    nu, chi, shape = _flat(nu, chi)
    m, v = kernel(nu, chi, *consts)
    return (m, v) if shape is None else (m.reshape(shape), v.reshape(shape))


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class GaussianMean(ConjugateModel):
    """Unknown mean, known noise variance, Gaussian prior on the mean.

    ``u(x) = x``.  The predictive for a run is Gaussian with the posterior mean
    as location and the posterior variance of the mean plus the noise
    variance as variance.
    """

    prior_mean: float = 0.0
    prior_var: float = 1.0
    noise_var: float = 1.0

    name = "gaussian_mean"

    def __post_init__(self):
        _positive("prior_var", self.prior_var)
        _positive("noise_var", self.noise_var)
        if not math.isfinite(self.prior_mean):
            raise ConfigError("prior_mean must be finite")

    def sufficient_stat(self, x):
        return x

    def posterior(self, nu, chi):
        """Posterior mean and variance of the unknown mean."""
        prec = 1.0 / self.prior_var + nu / self.noise_var
        # centred on the prior mean so a common shift of data and prior cancels
        mean = self.prior_mean + (chi - nu * self.prior_mean) / (self.noise_var * prec)
        return mean, 1.0 / prec

    def log_predictive(self, nu, chi, x):
        return _vectorised(
            _kernels.gaussian_mean_logpdf, nu, chi, x, self.prior_mean, self.prior_var, self.noise_var
        )

    def predictive_moments(self, nu, chi):
        return _vectorised_moments(
            _kernels.gaussian_mean_moments, nu, chi, self.prior_mean, self.prior_var, self.noise_var
        )

    def predictive_params(self, nu, chi):
        mean, var = self.predictive_moments(nu, chi)
        return {"loc": mean, "scale": np.sqrt(var)}

    def kernel_spec(self):
        return _kernels.GAUSSIAN_MEAN, np.array([self.prior_mean, self.prior_var, self.noise_var], dtype=float)

    def sample_parameter(self, rng):
        return float(rng.normal(self.prior_mean, math.sqrt(self.prior_var)))

    def sample_datum(self, param, rng):
        return float(rng.normal(param, math.sqrt(self.noise_var)))


@dataclass(frozen=True)
class GaussianScale(ConjugateModel):
    """Zero-mean Gaussian with a Gamma(a, b) prior on the precision (b is a rate).

    ``u(x) = x**2``; the run posterior is Gamma(a + nu/2, b + chi/2) and the
    predictive is a Student-t with ``2a'`` degrees of freedom and squared
    scale ``b'/a'``.
    """

    a: float = 1.0
    b: float = 1.0

    name = "gaussian_scale"

    def __post_init__(self):
        _positive("a", self.a)
        _positive("b", self.b)

    def sufficient_stat(self, x):
        return x * x

    def posterior(self, nu, chi):
        return self.a + 0.5 * nu, self.b + 0.5 * chi

    def log_predictive(self, nu, chi, x):
        # Student-t: lgamma(a' + 1/2) - lgamma(a') - log(2 pi b')/2 - (a' + 1/2) log(1 + x^2 / 2b')
        return _vectorised(_kernels.gaussian_scale_logpdf, nu, chi, x, self.a, self.b)

    def predictive_moments(self, nu, chi):
        # variance b'/(a'-1) exists only for a' > 1
        return _vectorised_moments(_kernels.gaussian_scale_moments, nu, chi, self.a, self.b)

    def predictive_params(self, nu, chi):
        a, b = self.posterior(np.asarray(nu, dtype=float), np.asarray(chi, dtype=float))
        return {"df": 2 * a, "loc": np.zeros_like(a), "scale": np.sqrt(b / a)}

    def kernel_spec(self):
        return _kernels.GAUSSIAN_SCALE, np.array([self.a, self.b], dtype=float)

    def sample_parameter(self, rng):
        return float(rng.gamma(self.a, 1.0 / self.b))

    def sample_datum(self, param, rng):
        return float(rng.normal(0.0, 1.0 / math.sqrt(param)))


@dataclass(frozen=True)
class PoissonRate(ConjugateModel):
    """Poisson counts with a Gamma(a, b) prior on the rate (b is a rate).

    ``u(k) = k``; the run posterior is Gamma(a + chi, b + nu) and the
    predictive is negative binomial.
    """

    a: float = 1.0
    b: float = 1.0

    name = "poisson"

    def __post_init__(self):
        _positive("a", self.a)
        _positive("b", self.b)

    def sufficient_stat(self, x):
        return x

    def check_datum(self, x):
        if not (math.isfinite(x) and x >= 0 and x == int(x)):
            raise DataError(f"Poisson observations must be non-negative integers, got {x!r}")

    def posterior(self, nu, chi):
        return self.a + chi, self.b + nu

    def log_predictive(self, nu, chi, x):
        # negative binomial: lgamma(k + a') - lgamma(a') - lgamma(k + 1) + a' log(b'/(b'+1)) - k log(b'+1)
        return _vectorised(_kernels.poisson_logpmf, nu, chi, x, self.a, self.b)

    def predictive_moments(self, nu, chi):
        return _vectorised_moments(_kernels.poisson_moments, nu, chi, self.a, self.b)

    def predictive_params(self, nu, chi):
        a, b = self.posterior(np.asarray(nu, dtype=float), np.asarray(chi, dtype=float))
        # scipy.stats.nbinom(n, p) parameterisation
        return {"n": a, "p": b / (b + 1.0)}

    def kernel_spec(self):
        return _kernels.POISSON, np.array([self.a, self.b], dtype=float)

    def sample_parameter(self, rng):
        return float(rng.gamma(self.a, 1.0 / self.b))

    def sample_datum(self, param, rng):
        return float(rng.poisson(param))


class HyperparameterBank:
    """Per-run-length ``(nu, chi)`` aligned with the engine's hypotheses."""

    __slots__ = ("model", "nu", "chi")

    def __init__(self, model: ConjugateModel, nu, chi):
        self.model = model
        self.nu = np.asarray(nu, dtype=float)
        self.chi = np.asarray(chi, dtype=float)

    @classmethod
    def prior(cls, model: ConjugateModel, size: int = 1) -> "HyperparameterBank":
        return cls(model, np.full(size, model.prior_nu), np.full(size, model.prior_chi))

    def __len__(self):
        return self.nu.size

    def update(self, x: float, keep: int | None = None) -> "HyperparameterBank":
        """Shift every slot one run length up with ``x`` folded in; reset ``r = 0``.

        ``keep`` limits the result to the first ``keep`` slots.
        """
        model = self.model
        model.check_datum(x)
        u = float(model.sufficient_stat(x))
        n = self.nu.size + 1 if keep is None else keep
        return HyperparameterBank(
            model,
            _kernels.shift(self.nu, float(model.prior_nu), 1.0, n),
            _kernels.shift(self.chi, float(model.prior_chi), u, n),
        )

    def keep(self, n: int) -> "HyperparameterBank":
        if n >= self.nu.size:
            return self
        return HyperparameterBank(self.model, self.nu[:n], self.chi[:n])

    def log_predictive(self, x: float) -> np.ndarray:
        return self.model.log_predictive(self.nu, self.chi, x)


def update_bank(bank: HyperparameterBank, datum: float) -> HyperparameterBank:
    return bank.update(datum)


def gaussian_mean_predictive(nu, chi, model: GaussianMean) -> dict[str, np.ndarray]:
    return model.predictive_params(nu, chi)


def gaussian_scale_predictive(nu, chi, model: GaussianScale) -> dict[str, np.ndarray]:
    return model.predictive_params(nu, chi)


def poisson_rate_predictive(nu, chi, model: PoissonRate) -> dict[str, np.ndarray]:
    return model.predictive_params(nu, chi)
