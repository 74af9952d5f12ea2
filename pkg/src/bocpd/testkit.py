"""Independent oracles for the detector.

* :func:`enumerate_posterior` computes the run-length posterior the slow way,
  by summing over every segmentation of the data.
* :func:`quadrature_predictive` integrates likelihood against the run
  posterior numerically instead of using the closed-form predictive.

Both are deliberately simple and exponential/slow; they exist to check the
fast paths.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np
from scipy import integrate, optimize, stats

from .errors import ConfigError
from .hazard import HazardFunction
from .models import ConjugateModel, GaussianMean, GaussianScale, PoissonRate

MAX_ENUMERATION_LENGTH = 16


def _log(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


def _hazard_at(hazard: HazardFunction, tau: int) -> float:
    return float(np.ravel(hazard(np.array([tau])))[0])


def _initial_prior(hazard: HazardFunction, boundary: str, horizon: int | None) -> list[float]:
    if boundary == "reset":
        return [1.0]
    gap = getattr(hazard, "gap", None)
    if gap is not None:
        s = [float(gap.survival(tau)) for tau in range(horizon + 1)]
    else:
        s, acc = [], 1.0
        for tau in range(horizon + 1):
            s.append(acc)
            acc *= 1.0 - _hazard_at(hazard, tau + 1)
    z = math.fsum(s)
    return [v / z for v in s]


def segment_log_marginal(model: ConjugateModel, segment) -> float:
    """log p(x_a..x_b) for one partition via the predictive chain rule."""
    nu, chi, total = model.prior_nu, model.prior_chi, 0.0
    for x in segment:
        total += float(model.log_predictive(np.array([nu]), np.array([chi]), x)[0])
        nu += 1.0
        chi += model.sufficient_stat(x)
    return total


def enumerate_posterior(
    data,
    model: ConjugateModel,
    hazard: HazardFunction,
    boundary: str = "reset",
    horizon: int | None = None,
) -> dict[int, float]:
    """Exact ``P(r_T | x_{1:T})`` by exhaustive enumeration.

    Every configuration is an initial run length ``r_0``, a set of partition
    starts in ``{2..T}``, and whether the final partition ends at ``T``.  A
    finished partition of length ``g`` that began ``off`` steps before its
    first datum contributes ``prod_{k<g} (1 - H(off+k)) * H(off+g)``; an
    unfinished one contributes ``prod_{k<=g} (1 - H(off+k))``.
    """
    data = [float(x) for x in data]
    T = len(data)
    if T > MAX_ENUMERATION_LENGTH:
        raise ConfigError(f"enumeration oracle limited to T <= {MAX_ENUMERATION_LENGTH}, got {T}")
    if T == 0:
        raise ConfigError("enumeration needs at least one datum")
    if boundary != "reset" and horizon is None:
        horizon = hazard.default_horizon()
    prior = _initial_prior(hazard, boundary, horizon)

    seg_ll = {}
    for i in range(T):
        for j in range(i + 1, T + 1):
            seg_ll[i, j] = segment_log_marginal(model, data[i:j])
    max_tau = len(prior) + T + 1
    log_h = [None] + [_log(_hazard_at(hazard, tau)) for tau in range(1, max_tau)]
    log_c = [None] + [_log(1.0 - _hazard_at(hazard, tau)) for tau in range(1, max_tau)]

    terms: dict[int, list[float]] = {}
    for r0, w0 in enumerate(prior):
        if w0 == 0:
            continue
        for cuts in product((False, True), repeat=T - 1):
            starts = [0] + [i + 1 for i, c in enumerate(cuts) if c]
            bounds = list(zip(starts, starts[1:] + [T]))
            for ended in (False, True):
                logw = math.log(w0)
                r_final = 0
                for k, (a, b) in enumerate(bounds):
                    off = r0 if k == 0 else 0
                    g = b - a
                    logw += seg_ll[a, b]
                    logw += sum(log_c[off + i] for i in range(1, g))
                    if k < len(bounds) - 1 or ended:
                        logw += log_h[off + g]
                    else:
                        logw += log_c[off + g]
                        r_final = off + g
                terms.setdefault(r_final, []).append(logw)

    per_r = {r: _lse(ws) for r, ws in terms.items()}
    norm = _lse(list(per_r.values()))
    return {r: math.exp(v - norm) for r, v in sorted(per_r.items())}


def _lse(values) -> float:
    m = max(values)
    if m == -math.inf:
        return -math.inf
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


def max_relative_error(run_lengths, probabilities, reference: dict[int, float]) -> float:
    """Largest relative deviation between an engine posterior and a reference."""
    got = dict(zip((int(r) for r in run_lengths), (float(p) for p in probabilities)))
    worst = 0.0
    for r in set(got) | set(reference):
        a, b = got.get(r, 0.0), reference.get(r, 0.0)
        if a == b:
            continue
        if b == 0:
            return math.inf
        worst = max(worst, abs(a - b) / abs(b))
    return worst


# -- quadrature ---------------------------------------------------------------


def _kernels(model: ConjugateModel, nu: float, chi: float, x: float):
    """Log posterior kernel over the integration variable, and the log likelihood of x."""
    if isinstance(model, GaussianMean):
        s2 = model.noise_var

        def log_post(m):
            return (
                stats.norm.logpdf(m, model.prior_mean, math.sqrt(model.prior_var))
                + chi * m / s2
                - nu * m * m / (2 * s2)
            )

        def log_lik(m):
            return stats.norm.logpdf(x, m, math.sqrt(s2))

        return log_post, log_lik, model.prior_mean

    # positive parameters are integrated over their logarithm
    if isinstance(model, GaussianScale):
        def log_post(s):
            lam = math.exp(s)
            return stats.gamma.logpdf(lam, model.a, scale=1 / model.b) + 0.5 * nu * s - 0.5 * chi * lam + s

        def log_lik(s):
            return stats.norm.logpdf(x, 0.0, math.exp(-0.5 * s))

        return log_post, log_lik, math.log(model.a / model.b)

    if isinstance(model, PoissonRate):
        def log_post(s):
            lam = math.exp(s)
            return stats.gamma.logpdf(lam, model.a, scale=1 / model.b) + chi * s - nu * lam + s

        def log_lik(s):
            return stats.poisson.logpmf(x, math.exp(s))

        return log_post, log_lik, math.log(model.a / model.b)

    raise TypeError(f"no quadrature oracle for {type(model).__name__}")


def _log_integral(logf, start: float, limit: int, cutoff: float) -> float:
    res = optimize.minimize_scalar(lambda v: -logf(v), bracket=(start - 1.0, start + 1.0))
    mode = float(res.x)
    peak = logf(mode)

    def edge(direction):
        w = 1e-3 * max(1.0, abs(mode))
        while logf(mode + direction * w) > peak - cutoff:
            w *= 2.0
        return mode + direction * w

    lo, hi = edge(-1.0), edge(1.0)
    f = lambda v: math.exp(logf(v) - peak)  # noqa: E731
    left, _ = integrate.quad(f, lo, mode, epsabs=0.0, epsrel=1e-12, limit=limit)
    right, _ = integrate.quad(f, mode, hi, epsabs=0.0, epsrel=1e-12, limit=limit)
    return peak + math.log(left + right)


def quadrature_predictive(
    model: ConjugateModel,
    nu: float,
    chi: float,
    x: float,
    limit: int = 200,
    cutoff: float = 745.0,
) -> float:
    """Predictive density of ``x`` by integrating likelihood x run posterior.

    The posterior kernel is prior(eta) * exp(eta . chi - nu A(eta)); both it
    and its product with the likelihood are integrated adaptively between
    the points where they fall ``cutoff`` nats below their peak (745 nats is
    roughly 1e-300 of the peak).
    """
    log_post, log_lik, start = _kernels(model, float(nu), float(chi), float(x))
    den = _log_integral(log_post, start, limit, cutoff)
    num = _log_integral(lambda v: log_post(v) + log_lik(v), start, limit, cutoff)
    return math.exp(num - den)
