"""Sampling from the product-partition generative model."""

from __future__ import annotations

import numpy as np

from .hazard import GapDistribution
from .models import ConjugateModel


def simulate(
    model: ConjugateModel,
    gap: GapDistribution,
    length: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[int]]:
    """Draw a series of ``length`` points and its true changepoints.

    Gap lengths are drawn from ``gap``; each partition gets its own parameter
    drawn i.i.d. from the model prior and i.i.d. data given that parameter.
    Changepoints are the 1-indexed steps at which a new partition begins
    (the first partition, starting at step 1, is not reported).
    """
    data = np.empty(length)
    changepoints = []
    t = 0
    while t < length:
        g = gap.sample(rng)
        param = model.sample_parameter(rng)
        if t > 0:
            changepoints.append(t + 1)
        for i in range(t, min(t + g, length)):
            data[i] = model.sample_datum(param, rng)
        t += g
    return data, changepoints


def mean_shift_stream(
    rng: np.random.Generator,
    n_segments: int = 10,
    segment_length: int = 100,
    shift: float = 3.0,
    noise_std: float = 1.0,
) -> tuple[np.ndarray, list[int]]:
    """Gaussian stream whose mean jumps by ``+-shift`` every ``segment_length`` steps."""
    means = np.cumsum(np.concatenate([[0.0], rng.choice([-shift, shift], size=n_segments - 1)]))
    data = np.repeat(means, segment_length) + noise_std * rng.standard_normal(n_segments * segment_length)
    changepoints = [k * segment_length + 1 for k in range(1, n_segments)]
    return data, changepoints
