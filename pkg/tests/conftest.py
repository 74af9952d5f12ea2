"""Shared fixtures: seeded streams and small stand-in models."""

import math
import sys

import numpy as np
import pytest

from bocpd import ConjugateModel, GaussianMean, GaussianScale, PoissonRate

MODELS = {
    "gaussian_mean": GaussianMean(0.0, 4.0, 1.0),
    "gaussian_scale": GaussianScale(1.0, 1e-4),
    "poisson": PoissonRate(1.0, 1.0),
}


def seeded_stream(name: str, length: int, seed: int) -> np.ndarray:
    """Piecewise-stationary data in the support of the named model."""
    rng = np.random.default_rng(seed)
    cuts = np.sort(rng.choice(np.arange(1, length), size=min(max(length // 60, 1), length - 1), replace=False))
    level = np.zeros(length)
    for c in cuts:
        level[c:] += rng.normal(0, 1)
    if name == "gaussian_mean":
        return 3.0 * level + rng.normal(size=length)
    if name == "gaussian_scale":
        return 0.01 * np.exp(0.5 * level) * rng.normal(size=length)
    return rng.poisson(np.exp(1.0 + 0.5 * level)).astype(float)


class FixedGaussians(ConjugateModel):
    """Toy model whose slot ``i`` predicts N(loc[i], scale[i]**2) regardless of data.

    Used where a test needs to dictate predictive components directly.
    """

    name = "fixed_gaussians"

    def __init__(self, loc, scale):
        self.loc = np.asarray(loc, dtype=float)
        self.scale = np.asarray(scale, dtype=float)

    def sufficient_stat(self, x):
        return x

    def log_predictive(self, nu, chi, x):
        return -0.5 * ((x - self.loc) / self.scale) ** 2 - np.log(self.scale) - 0.5 * math.log(2 * math.pi)

    def predictive_moments(self, nu, chi):
        return self.loc, self.scale**2


class MomentFree(ConjugateModel):
    """Toy model with a density but no usable moments."""

    name = "moment_free"

    def sufficient_stat(self, x):
        return x

    def log_predictive(self, nu, chi, x):
        return np.full(np.shape(nu), -0.5 * x * x - 0.5 * math.log(2 * math.pi))

    def predictive_moments(self, nu, chi):
        return np.full(np.shape(nu), math.nan), np.full(np.shape(nu), math.nan)


@pytest.fixture(params=sorted(MODELS))
def model_name(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
