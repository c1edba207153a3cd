"""Noise-interference model (NIM), POD curves and a90.

Under the NIM, the response observed on a flawed specimen is the larger of
a size-dependent signal response and an independent noise response::

    D_signal = beta0 + beta1 * log10(size) + N(0, sigma_s^2)
    D_noise  ~ N(mu_n, sigma_n^2)
    D_obs    = max(D_signal, D_noise)

while flawless specimens only ever show ``D_noise``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize
from scipy.special import log_ndtr, ndtr

from .exceptions import FitError, LikelihoodDomainError, NoA90Error, ParameterError

__all__ = [
    "NimParams",
    "PeakAmpParams",
    "nim_loglik",
    "fit_nim",
    "fit_peakamp",
    "pod",
    "pod_peakamp",
    "a90",
    "residuals",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NimParams:
    beta0: float
    beta1: float
    mu_n: float
    sigma_s: float
    sigma_n: float

    def __post_init__(self):
        if not (self.sigma_s > 0 and self.sigma_n > 0):
            raise ParameterError("sigma_s and sigma_n must be positive")

    def to_dict(self):
        return {k: float(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(d[k]) for k in ("beta0", "beta1", "mu_n", "sigma_s", "sigma_n")})

    def noise_floor(self):
        """POD of a vanishingly small flaw: the chance noise alone crosses zero."""
        return 1.0 - float(ndtr(-self.mu_n / self.sigma_n))


@dataclass(frozen=True)
class PeakAmpParams:
    """NIM on ``log10`` peak amplitude, with detection threshold ``z_th``."""

    gamma0: float
    gamma1: float
    kappa_s: float
    nu_n: float
    kappa_n: float
    z_th: float

    def __post_init__(self):
        if not (self.kappa_s > 0 and self.kappa_n > 0):
            raise ParameterError("kappa_s and kappa_n must be positive")
        if not self.z_th > 0:
            raise ParameterError("z_th must be positive")

    def to_dict(self):
        return {k: float(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        keys = ("gamma0", "gamma1", "kappa_s", "nu_n", "kappa_n", "z_th")
        return cls(**{k: float(d[k]) for k in keys})


def _as_flawed(flawed):
    arr = np.asarray(flawed, dtype=np.float64)
    if arr.size == 0:
        return np.empty(0), np.empty(0)
    arr = arr.reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def _norm_logpdf(z):
    return -0.5 * z * z - _LOG_SQRT_2PI


def _loglik(beta0, beta1, mu_n, sigma_s, sigma_n, d_flaw, log_size, d_noise):
    zs = (d_flaw - beta0 - beta1 * log_size) / sigma_s
    zn = (d_flaw - mu_n) / sigma_n
    signal_wins = _norm_logpdf(zs) - math.log(sigma_s) + log_ndtr(zn)
    noise_wins = log_ndtr(zs) + _norm_logpdf(zn) - math.log(sigma_n)
    ll = np.logaddexp(signal_wins, noise_wins).sum()
    zj = (d_noise - mu_n) / sigma_n
    ll += (_norm_logpdf(zj) - math.log(sigma_n)).sum()
    return float(ll)


def nim_loglik(params, flawed, noise):
    """Log-likelihood of the NIM.

    Parameters
    ----------
    params : NimParams
    flawed : array_like of shape (n, 2)
        ``(D, flaw_size)`` for specimens with a flaw.
    noise : array_like of shape (m,)
        ``D`` for flawless specimens.

    Raises
    ------
    LikelihoodDomainError
        If the result is not finite.
    """
    d_flaw, sizes = _as_flawed(flawed)
    if np.any(sizes <= 0):
        raise LikelihoodDomainError("flaw sizes must be positive")
    ll = _loglik(
        params.beta0, params.beta1, params.mu_n, params.sigma_s, params.sigma_n,
        d_flaw, np.log10(sizes), np.asarray(noise, dtype=np.float64).ravel(),
    )
    if not math.isfinite(ll):
        raise LikelihoodDomainError(f"log-likelihood is {ll}")
    return ll


def initial_params(flawed, noise):
    """Starting values: noise moments, then least squares on flawed responses
    that clear the noise 90th percentile."""
    d_flaw, sizes = _as_flawed(flawed)
    noise = np.asarray(noise, dtype=np.float64).ravel()
    mu_n = float(noise.mean())
    sigma_n = float(noise.std(ddof=1))
    cut = np.quantile(noise, 0.9)
    sel = d_flaw > cut
    if np.unique(sizes[sel]).size < 2:
        sel = np.ones_like(d_flaw, dtype=bool)
    x = np.log10(sizes[sel])
    beta1, beta0 = np.polyfit(x, d_flaw[sel], 1)
    resid = d_flaw[sel] - beta0 - beta1 * x
    sigma_s = float(np.sqrt(np.mean(resid**2))) if resid.size > 2 else 0.0
    if not sigma_s > 0:
        sigma_s = max(sigma_n, 1e-6)
    return NimParams(float(beta0), float(beta1), mu_n, sigma_s, sigma_n)


def fit_nim(flawed, noise, init=None):
    """Maximum-likelihood NIM fit.

    Both standard deviations are optimized on the log scale. Nelder-Mead is
    restarted from its own optimum until the log-likelihood stops improving.

    Raises
    ------
    FitError
        Fewer than two distinct flaw sizes, fewer than two noise
        observations, or constant noise responses.
    """
    d_flaw, sizes = _as_flawed(flawed)
    noise = np.asarray(noise, dtype=np.float64).ravel()
    if np.unique(sizes).size < 2:
        raise FitError(f"need at least 2 distinct flaw sizes, got {np.unique(sizes).size}")
    if noise.size < 2:
        raise FitError(f"need at least 2 noise observations, got {noise.size}")
    if not (np.all(np.isfinite(d_flaw)) and np.all(np.isfinite(noise))):
        raise FitError("responses must be finite")
    if np.any(sizes <= 0):
        raise FitError("flaw sizes must be positive")
    if not noise.std() > 0:
        raise FitError("noise responses are constant")

    log_size = np.log10(sizes)
    start = init or initial_params(flawed, noise)

    def nll(p):
        ll = _loglik(p[0], p[1], p[2], math.exp(p[3]), math.exp(p[4]), d_flaw, log_size, noise)
        return -ll if math.isfinite(ll) else np.inf

    x = np.array(
        [start.beta0, start.beta1, start.mu_n, math.log(start.sigma_s), math.log(start.sigma_n)]
    )
    f0 = nll(x)
    best_x, best_f = x, f0
    for _ in range(20):
        res = optimize.minimize(
            nll, best_x, method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-11, "maxiter": 20000, "maxfev": 40000,
                     "adaptive": True},
        )
        if not res.fun < best_f - 1e-10:
            if res.fun < best_f:
                best_x, best_f = res.x, res.fun
            break
        best_x, best_f = res.x, res.fun
    if not math.isfinite(best_f):
        raise FitError("likelihood is not finite anywhere along the search")
    b0, b1, mu, ls, ln = best_x
    return NimParams(float(b0), float(b1), float(mu), math.exp(ls), math.exp(ln))


def fit_peakamp(flawed_peaks, flaw_sizes, noise_peaks, z_th):
    """Fit the NIM to ``log10`` raw peak amplitudes."""
    flawed_peaks = np.asarray(flawed_peaks, dtype=np.float64)
    noise_peaks = np.asarray(noise_peaks, dtype=np.float64)
    if np.any(flawed_peaks <= 0) or np.any(noise_peaks <= 0):
        raise FitError("peak amplitudes must be positive to take logarithms")
    flawed = np.column_stack([np.log10(flawed_peaks), np.asarray(flaw_sizes, dtype=np.float64)])
    p = fit_nim(flawed, np.log10(noise_peaks))
    return PeakAmpParams(p.beta0, p.beta1, p.sigma_s, p.mu_n, p.sigma_n, float(z_th))


def residuals(params, flawed, noise):
    """Standardized residuals ``(flawed, noise)`` for external normality checks."""
    d_flaw, sizes = _as_flawed(flawed)
    r_flaw = (d_flaw - params.beta0 - params.beta1 * np.log10(sizes)) / params.sigma_s
    r_noise = (np.asarray(noise, dtype=np.float64) - params.mu_n) / params.sigma_n
    return r_flaw, r_noise


def pod(params, flaw):
    """Probability that ``max(D_signal, D_noise) > 0`` for a flaw of this size."""
    flaw = np.asarray(flaw, dtype=np.float64)
    mean = params.beta0 + params.beta1 * np.log10(flaw)
    out = 1.0 - ndtr(-mean / params.sigma_s) * ndtr(-params.mu_n / params.sigma_n)
    return float(out) if out.ndim == 0 else out


def pod_peakamp(params, flaw):
    """Probability that the raw peak amplitude exceeds ``z_th``."""
    flaw = np.asarray(flaw, dtype=np.float64)
    lt = math.log10(params.z_th)
    miss_signal = ndtr((lt - params.gamma0 - params.gamma1 * np.log10(flaw)) / params.kappa_s)
    miss_noise = ndtr((lt - params.nu_n) / params.kappa_n)
    out = 1.0 - miss_signal * miss_noise
    return float(out) if out.ndim == 0 else out


def a90(pod_fn, bracket=(1.0, 1e4), level=0.9, rtol=1e-4):
    """Smallest flaw size whose POD reaches ``level``, by bisection in log size.

    ``pod_fn`` must be nondecreasing on ``bracket``.

    Raises
    ------
    NoA90Error
        If ``level`` is not bracketed; ``pod_range`` holds the attained PODs.
    """
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ParameterError(f"invalid bracket {bracket}")
    p_lo, p_hi = float(pod_fn(lo)), float(pod_fn(hi))
    if not (p_lo < level <= p_hi):
        raise NoA90Error(
            f"POD range [{p_lo:.4g}, {p_hi:.4g}] on {bracket} does not bracket {level}",
            pod_range=(p_lo, p_hi),
        )
    llo, lhi = math.log(lo), math.log(hi)
    # stop well inside the requested tolerance
    while lhi - llo > rtol * 1e-2:
        mid = 0.5 * (llo + lhi)
        if pod_fn(math.exp(mid)) >= level:
            lhi = mid
        else:
            llo = mid
    return math.exp(lhi)
