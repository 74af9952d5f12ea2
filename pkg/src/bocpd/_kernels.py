"""Compiled inner loops for the per-step recursion and the bundled models.

Each step touches a few hundred hypotheses; at that size numpy's per-call
overhead dominates, so the hot path is fused into single passes here.
"""

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)

# status codes returned by advance()
OK = 0
ZERO_MASS = 1
NAN_MASS = 2


@njit(cache=True)
def advance(weighted, log_h, log_c, threshold, rtol):
    """One recursion step in log space.

    ``weighted[i]`` is log P(r_{t-1}=i-th hypothesis | x_{1:t-1}) + log pi_i.
    ``log_h``/``log_c`` are the hazard and continuation logs, either length
    one (constant hazard) or aligned with ``weighted``.

    Returns ``(log_post, probs, keep, log_total, log_kept_mass, argmax, status)``
    where ``log_post`` is normalised before truncation and ``probs[:keep]``
    after it.
    """
    n = weighted.size
    new = np.empty(n + 1)
    probs = np.empty(n + 1)
    peak = -np.inf
    for i in range(n):
        w = weighted[i]
        if w != w:
            return new, probs, 0, np.nan, np.nan, 0, NAN_MASS
        if w > peak:
            peak = w
    if peak == -np.inf:
        return new, probs, 0, -np.inf, -np.inf, 0, ZERO_MASS

    # work relative to the peak so large log densities keep full precision
    if log_h.size == 1:
        # constant hazard: growth and changepoint masses partition the mixture
        s = 0.0
        lc = log_c[0]
        for i in range(n):
            w = weighted[i] - peak
            s += math.exp(w)
            new[i + 1] = w + lc
        rel = math.log(s)
        new[0] = log_h[0] + rel
    else:
        cp = 0.0
        top = -np.inf
        for i in range(n):
            w = weighted[i] - peak
            cp += math.exp(w + log_h[i])
            v = w + log_c[i]
            new[i + 1] = v
            if v > top:
                top = v
        new[0] = math.log(cp) if cp > 0 else -np.inf
        if new[0] > top:
            top = new[0]
        if top == -np.inf:
            return new, probs, 0, -np.inf, -np.inf, 0, ZERO_MASS
        s = 0.0
        for i in range(n + 1):
            s += math.exp(new[i] - top)
        rel = top + math.log(s)
    total = peak + rel

    mass = 0.0
    for i in range(n + 1):
        new[i] -= rel
        probs[i] = math.exp(new[i])
        mass += probs[i]

    keep = n + 1
    if threshold > 0 and n + 1 > 2:
        cutoff = threshold * (1.0 - rtol) * mass
        acc = 0.0
        j = n
        while j >= 2:
            acc += probs[j]
            if acc < cutoff:
                keep = j
                j -= 1
            else:
                break
        kept = 0.0
        for i in range(keep):
            kept += probs[i]
        mass = kept

    best = 0
    for i in range(keep):
        probs[i] /= mass
        if probs[i] > probs[best]:
            best = i
    return new, probs, keep, total, math.log(mass), best, OK


@njit(cache=True)
def shift(values, prior, increment, keep):
    """Slot 0 gets ``prior``; slot i+1 gets ``values[i] + increment``; first ``keep`` only."""
    out = np.empty(keep, values.dtype)
    out[0] = prior
    for i in range(keep - 1):
        out[i + 1] = values[i] + increment
    return out


@njit(cache=True)
def gaussian_mean_logpdf(nu, chi, x, prior_mean, prior_var, noise_var):
    out = np.empty(nu.size)
    for i in range(nu.size):
        prec = 1.0 / prior_var + nu[i] / noise_var
        mean = prior_mean + (chi[i] - nu[i] * prior_mean) / (noise_var * prec)
        var = 1.0 / prec + noise_var
        d = x - mean
        out[i] = -0.5 * (LOG_2PI + math.log(var)) - 0.5 * d * d / var
    return out


@njit(cache=True)
def gaussian_scale_logpdf(nu, chi, x, a0, b0):
    out = np.empty(nu.size)
    for i in range(nu.size):
        a = a0 + 0.5 * nu[i]
        b = b0 + 0.5 * chi[i]
        out[i] = (
            math.lgamma(a + 0.5)
            - math.lgamma(a)
            - 0.5 * (LOG_2PI + math.log(b))
            - (a + 0.5) * math.log1p(0.5 * x * x / b)
        )
    return out


@njit(cache=True)
def poisson_logpmf(nu, chi, x, a0, b0):
    out = np.empty(nu.size)
    lfx = math.lgamma(x + 1.0)
    for i in range(nu.size):
        a = a0 + chi[i]
        b = b0 + nu[i]
        out[i] = (
            math.lgamma(x + a)
            - math.lgamma(a)
            - lfx
            - a * math.log1p(1.0 / b)
            - x * math.log1p(b)
        )
    return out


@njit(cache=True)
def mixture_moments(w, m, v):
    """Mean and variance of a finite mixture (law of total variance)."""
    mean = 0.0
    for i in range(w.size):
        if w[i] > 0:
            mean += w[i] * m[i]
    var = 0.0
    for i in range(w.size):
        if w[i] > 0:
            d = m[i] - mean
            var += w[i] * (v[i] + d * d)
    return mean, var


@njit(cache=True)
def gaussian_mean_moments(nu, chi, prior_mean, prior_var, noise_var):
    m = np.empty(nu.size)
    v = np.empty(nu.size)
    for i in range(nu.size):
        prec = 1.0 / prior_var + nu[i] / noise_var
        m[i] = prior_mean + (chi[i] - nu[i] * prior_mean) / (noise_var * prec)
        v[i] = 1.0 / prec + noise_var
    return m, v


@njit(cache=True)
def gaussian_scale_moments(nu, chi, a0, b0):
    m = np.zeros(nu.size)
    v = np.empty(nu.size)
    for i in range(nu.size):
        a = a0 + 0.5 * nu[i]
        v[i] = (b0 + 0.5 * chi[i]) / (a - 1.0) if a > 1.0 else np.inf
    return m, v


@njit(cache=True)
def poisson_moments(nu, chi, a0, b0):
    m = np.empty(nu.size)
    v = np.empty(nu.size)
    for i in range(nu.size):
        b = b0 + nu[i]
        m[i] = (a0 + chi[i]) / b
        v[i] = m[i] * (1.0 + 1.0 / b)
    return m, v


# model kinds understood by run_block()
GAUSSIAN_MEAN = 0
GAUSSIAN_SCALE = 1
POISSON = 2
BAD_DATUM = 3


@njit(cache=True)
def _logpdf(kind, nu, chi, x, c):
    if kind == GAUSSIAN_MEAN:
        return gaussian_mean_logpdf(nu, chi, x, c[0], c[1], c[2])
    if kind == GAUSSIAN_SCALE:
        return gaussian_scale_logpdf(nu, chi, x, c[0], c[1])
    return poisson_logpmf(nu, chi, x, c[0], c[1])


@njit(cache=True)
def _moments(kind, nu, chi, c):
    if kind == GAUSSIAN_MEAN:
        return gaussian_mean_moments(nu, chi, c[0], c[1], c[2])
    if kind == GAUSSIAN_SCALE:
        return gaussian_scale_moments(nu, chi, c[0], c[1])
    return poisson_moments(nu, chi, c[0], c[1])


@njit(cache=True)
def _valid(kind, x):
    if not math.isfinite(x):
        return False
    if kind == POISSON:
        return x >= 0 and x == math.floor(x)
    return True


@njit(cache=True)
def run_block(
    log_post, run_lengths, nu, chi, log_mass, data, kind, consts,
    prior_nu, prior_chi, log_h_tab, log_c_tab, threshold, rtol, floor,
):
    """Run the recursion over ``data`` for a bundled model.

    Hazard tables of length one mean a constant hazard; otherwise entry
    ``k`` holds the value at run length ``k + 1`` and the last entry is
    reused beyond the table.

    Returns the final state, per-step (increment, map run length, predictive
    mean, predictive variance), the posterior triplets with probability at
    least ``floor``, the number of completed steps and a status code.
    """
    n_steps = data.size
    incr = np.empty(n_steps)
    map_r = np.empty(n_steps, dtype=np.int64)
    pmean = np.empty(n_steps)
    pvar = np.empty(n_steps)
    cap = 1024
    tri_t = np.empty(cap, dtype=np.int64)
    tri_r = np.empty(cap, dtype=np.int64)
    tri_p = np.empty(cap)
    n_tri = 0
    const_hazard = log_h_tab.size == 1
    n_tab = log_h_tab.size
    status = OK
    done = 0
    for s in range(n_steps):
        x = data[s]
        if not _valid(kind, x):
            status = BAD_DATUM
            break
        weighted = log_post + _logpdf(kind, nu, chi, x, consts)
        if const_hazard:
            log_h = log_h_tab
            log_c = log_c_tab
        else:
            log_h = np.empty(run_lengths.size)
            log_c = np.empty(run_lengths.size)
            for i in range(run_lengths.size):
                k = min(run_lengths[i], n_tab - 1)
                log_h[i] = log_h_tab[k]
                log_c[i] = log_c_tab[k]
        new, probs, keep, total, new_mass, best, status = advance(weighted, log_h, log_c, threshold, rtol)
        if status != OK:
            break
        incr[s] = total - log_mass
        log_mass = new_mass
        u = x * x if kind == GAUSSIAN_SCALE else x
        run_lengths = shift(run_lengths, 0, 1, keep)
        nu = shift(nu, prior_nu, 1.0, keep)
        chi = shift(chi, prior_chi, u, keep)
        log_post = new[:keep]
        probs = probs[:keep]
        map_r[s] = run_lengths[best]
        m, v = _moments(kind, nu, chi, consts)
        pmean[s], pvar[s] = mixture_moments(probs, m, v)
        n_new = 0
        for i in range(keep):
            if probs[i] >= floor:
                n_new += 1
        if n_tri + n_new > cap:
            while n_tri + n_new > cap:
                cap *= 2
            grown_t = np.empty(cap, dtype=np.int64)
            grown_r = np.empty(cap, dtype=np.int64)
            grown_p = np.empty(cap)
            grown_t[:n_tri] = tri_t[:n_tri]
            grown_r[:n_tri] = tri_r[:n_tri]
            grown_p[:n_tri] = tri_p[:n_tri]
            tri_t, tri_r, tri_p = grown_t, grown_r, grown_p
        for i in range(keep):
            if probs[i] >= floor:
                tri_t[n_tri] = s
                tri_r[n_tri] = run_lengths[i]
                tri_p[n_tri] = probs[i]
                n_tri += 1
        done = s + 1
    return (
        log_post, run_lengths, nu, chi, log_mass,
        incr[:done], map_r[:done], pmean[:done], pvar[:done],
        tri_t[:n_tri], tri_r[:n_tri], tri_p[:n_tri],
        done, status,
    )


# -- text output --------------------------------------------------------------

_SPLITTER = 134217729.0  # 2**27 + 1
# smallest probability the compiled formatter handles exactly (10**k exact for k <= 22)
FORMAT_MIN = 1e-11
_POW10 = np.array([10.0 ** k for k in range(23)])


@njit(cache=True)
def _two_prod(a, b):
    """Exact product ``a * b == hi + lo`` (Dekker/Veltkamp, no FMA needed)."""
    hi = a * b
    c = _SPLITTER * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLITTER * b
    bh = c - (c - b)
    bl = b - bh
    lo = ((ah * bh - hi) + ah * bl + al * bh) + al * bl
    return hi, lo


@njit(cache=True)
def _digits12(p):
    """12-significant-digit mantissa and decimal exponent of ``p``, rounded half-even on the exact value."""
    e = int(math.floor(math.log10(p)))
    for _ in range(3):
        hi, lo = _two_prod(p, _POW10[11 - e])
        if hi < 1e11:
            e -= 1
        elif hi >= 1e12:
            e += 1
        else:
            break
    n = math.floor(hi)
    s = ((hi - n) - 0.5) + lo
    if s > 0 or (s == 0 and n % 2 == 1):
        n += 1
    if n >= 1e12:
        n = 1e11
        e += 1
    return int(n), e


@njit(cache=True)
def _put_int(buf, pos, v):
    """Write a non-negative integer."""
    width = 1
    probe = v // 10
    while probe:
        width += 1
        probe //= 10
    end = pos + width
    for i in range(end - 1, pos - 1, -1):
        buf[i] = 48 + v % 10
        v //= 10
    return end


@njit(cache=True)
def _put_g12(buf, pos, p, digits):
    """Write ``p`` (``FORMAT_MIN <= p <= 1``) exactly as C's ``%.12g`` would."""
    n, e = _digits12(p)
    for i in range(11, -1, -1):
        digits[i] = n % 10
        n //= 10
    last = 11
    while last > 0 and digits[last] == 0:
        last -= 1
    if -4 <= e < 12:
        if e >= 0:
            for i in range(e + 1):
                buf[pos] = 48 + digits[i]
                pos += 1
            if last > e:
                buf[pos] = 46
                pos += 1
                for i in range(e + 1, last + 1):
                    buf[pos] = 48 + digits[i]
                    pos += 1
        else:
            buf[pos] = 48
            buf[pos + 1] = 46
            pos += 2
            for _ in range(-e - 1):
                buf[pos] = 48
                pos += 1
            for i in range(last + 1):
                buf[pos] = 48 + digits[i]
                pos += 1
    else:
        buf[pos] = 48 + digits[0]
        pos += 1
        if last > 0:
            buf[pos] = 46
            pos += 1
            for i in range(1, last + 1):
                buf[pos] = 48 + digits[i]
                pos += 1
        buf[pos] = 101
        buf[pos + 1] = 45 if e < 0 else 43
        pos += 2
        ae = -e if e < 0 else e
        if ae < 10:
            buf[pos] = 48
            pos += 1
        pos = _put_int(buf, pos, ae)
    return pos


@njit(cache=True)
def format_triplets(t, r, p):
    """Render ``t,r,prob`` lines; every ``p`` must lie in ``[FORMAT_MIN, 1]``."""
    buf = np.empty(p.size * 64, np.uint8)
    digits = np.empty(12, np.int64)
    pos = 0
    for i in range(p.size):
        pos = _put_int(buf, pos, t[i])
        buf[pos] = 44
        pos = _put_int(buf, pos + 1, r[i])
        buf[pos] = 44
        pos = _put_g12(buf, pos + 1, p[i], digits)
        buf[pos] = 10
        pos += 1
    return buf[:pos]
