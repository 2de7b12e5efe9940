"""Hurst-exponent estimators and autocorrelation diagnostics.

Four estimators are provided: variance-time (aggregated variance), rescaled
range, log-periodogram regression and the Whittle likelihood fitted to the
fractional Gaussian noise spectrum. Every estimator standardises its input
first, so results are invariant to shifting and positive rescaling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import DomainError, TooShort, ZeroVariance
from .optimize import golden_section_minimize
from .series import aggregate_level, geometric_grid

METHODS = ("variance_time", "rs", "periodogram", "whittle")
METHOD_ALIASES = {
    "vt": "variance_time",
    "variance_time": "variance_time",
    "rs": "rs",
    "pgram": "periodogram",
    "periodogram": "periodogram",
    "whittle": "whittle",
}

BUCKETS = ("H < 0.45", "0.45 < H < 0.5", "0.5 < H < 0.7", "H ≥ 0.7")
_BUCKET_EDGES = (0.45, 0.5, 0.7)

LOW_R2 = 0.9
MIN_POINTS = 5
# Explicit alias terms per side in the fGn spectral density; the rest of the
# series is summed by an Euler-Maclaurin tail.
ALIAS_TERMS = 16


@dataclass(frozen=True)
class HurstEstimate:
    method: str
    h: float
    slope: float | None
    intercept: float | None
    r_squared: float | None
    points_used: int
    beta: float | None = None
    warnings: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "h": self.h,
            "beta": self.beta,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "points_used": self.points_used,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> HurstEstimate:
        return cls(
            method=data["method"],
            h=data["h"],
            slope=data.get("slope"),
            intercept=data.get("intercept"),
            r_squared=data.get("r_squared"),
            points_used=data["points_used"],
            beta=data.get("beta"),
            warnings=tuple(data.get("warnings", ())),
        )


@dataclass(frozen=True)
class AcfProfile:
    lags: np.ndarray
    r: np.ndarray
    slow_decay_flag: bool


def _standardized(series, min_len: int) -> np.ndarray:
    x = np.asarray(getattr(series, "values", series), dtype=np.float64)
    if x.ndim != 1 or x.size < min_len:
        raise TooShort(f"need at least {min_len} values, got {x.size}")
    if np.all(x == x[0]):
        raise ZeroVariance("series is constant")
    centered = x - x.mean()
    sd = math.sqrt(float(np.mean(centered * centered)))
    if sd == 0.0:
        raise ZeroVariance("series has zero variance")
    return centered / sd


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    slope = float(dx @ dy) / sxx
    intercept = float(ym - slope * xm)
    syy = float(dy @ dy)
    resid = y - (intercept + slope * x)
    r2 = 1.0 - float(resid @ resid) / syy if syy > 0 else 1.0
    return slope, intercept, min(max(r2, 0.0), 1.0)


def _flags(h: float, r2: float | None) -> tuple[str, ...]:
    flags = []
    if not 0.0 < h < 1.0:
        flags.append("OutOfRange")
    if r2 is not None and r2 < LOW_R2:
        flags.append("LowR2")
    return tuple(flags)


# --------------------------------------------------------------- theory

# Lags k >= 2 use the even binomial series of (1 + 1/k)^2h + (1 - 1/k)^2h - 2,
# which avoids cancellation; terms shrink at least like 4^-j.
_SERIES_TERMS = 32


def _binomial_even_coeffs(two_h: float) -> list[float]:
    """C(2h, 2j) for j = 1 .. _SERIES_TERMS."""
    coeffs, c = [], 1.0
    for m in range(1, 2 * _SERIES_TERMS + 1):
        c *= (two_h - (m - 1)) / m
        if m % 2 == 0:
            coeffs.append(c)
    return coeffs


def theoretical_acov(h: float, sigma2: float, k):
    """Autocovariance of fractional Gaussian noise at integer lag(s) ``k``.

    gamma(k) = sigma2/2 * (|k+1|^2h - 2|k|^2h + |k-1|^2h), so gamma(0) = sigma2.
    Large lags are evaluated through a convergent series to keep full relative
    precision when gamma(k) is tiny.
    """
    if not 0.0 < h < 1.0:
        raise DomainError(f"h must lie in (0, 1), got {h}")
    if not sigma2 > 0.0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    lags = np.abs(np.asarray(k, dtype=np.float64))
    two_h = 2.0 * h
    out = np.empty_like(lags)
    out[lags == 0] = 1.0
    # gamma(1) = (2^2h - 2)/2 = expm1((2h - 1) log 2)
    out[lags == 1] = math.expm1((two_h - 1.0) * math.log(2.0))
    small = lags < 2
    big = ~small
    kb = lags[big]
    inv2 = 1.0 / (kb * kb)
    coeffs = _binomial_even_coeffs(two_h)
    acc = np.full_like(kb, coeffs[-1])
    for c in reversed(coeffs[:-1]):
        acc = c + acc * inv2
    out[big] = np.exp((two_h - 2.0) * np.log(kb)) * acc
    out *= sigma2
    return float(out) if np.ndim(k) == 0 else out


def _em_tail(y, a: float):
    """Euler-Maclaurin sum of (2 pi j + c)^-a over j > J, with y = 2 pi J + c."""
    two_pi = 2.0 * math.pi
    return (
        y ** (1.0 - a) / (two_pi * (a - 1.0))
        - 0.5 * y**-a
        + a * two_pi * y ** (-a - 1.0) / 12.0
        - a * (a + 1.0) * (a + 2.0) * two_pi**3 * y ** (-a - 3.0) / 720.0
    )


class AliasSum:
    """sum over all integers j of |lam + 2 pi j|^-a on a fixed frequency grid.

    Terms with |j| <= ``terms`` are summed explicitly from a cached log table;
    the two tails use an Euler-Maclaurin expansion through the third derivative.
    """

    def __init__(self, lam, terms: int = ALIAS_TERMS):
        self.lam = np.asarray(lam, dtype=np.float64)
        self.terms = int(terms)
        shifts = 2.0 * math.pi * np.arange(1, self.terms + 1, dtype=np.float64)[:, None]
        self._logs = np.log(
            np.concatenate([np.abs(self.lam)[None, :], shifts + self.lam, shifts - self.lam])
        )
        edge = 2.0 * math.pi * self.terms
        self._edges = (edge + self.lam, edge - self.lam)

    def __call__(self, a: float) -> np.ndarray:
        total = np.exp(-a * self._logs).sum(axis=0)
        return total + _em_tail(self._edges[0], a) + _em_tail(self._edges[1], a)


def alias_sum(lam, a: float, terms: int = ALIAS_TERMS) -> np.ndarray:
    return AliasSum(np.atleast_1d(lam), terms)(a)


def fgn_spectral_density(lam, h: float, sigma2: float = 1.0, terms: int = ALIAS_TERMS):
    """Spectral density of fGn on (0, pi], normalised so that
    gamma(k) = integral over [-pi, pi] of f(lam) cos(k lam).
    """
    if not 0.0 < h < 1.0:
        raise DomainError(f"h must lie in (0, 1), got {h}")
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    const = sigma2 * math.sin(math.pi * h) * math.gamma(2 * h + 1) / math.pi
    return const * (1.0 - np.cos(lam)) * alias_sum(lam, 2 * h + 1, terms)


def periodogram(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fourier frequencies 2 pi j / n (j = 1 .. n//2) and I(lam_j) of a centred series."""
    n = x.size
    spec = np.fft.rfft(x - x.mean())
    power = (spec.real**2 + spec.imag**2) / (2.0 * math.pi * n)
    j = np.arange(1, n // 2 + 1)
    return 2.0 * math.pi * j / n, power[1 : n // 2 + 1]


# ----------------------------------------------------------------- ACF

def sample_acf(series, max_lag: int) -> AcfProfile:
    """Biased sample autocorrelation r(1..max_lag).

    ``slow_decay_flag`` is set when r(k) > 2/sqrt(n) for every k up to 10.
    """
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    x = np.asarray(getattr(series, "values", series), dtype=np.float64)
    n = x.size
    if n < max_lag + 2:
        raise TooShort(f"need at least {max_lag + 2} values, got {n}")
    if np.all(x == x[0]):
        raise ZeroVariance("series is constant")
    d = x - x.mean()
    var = float(d @ d) / n
    r = np.array([float(d[:-k] @ d[k:]) / n / var for k in range(1, max_lag + 1)])
    bound = 2.0 / math.sqrt(n)
    slow = bool(np.all(r[: min(10, max_lag)] > bound))
    return AcfProfile(np.arange(1, max_lag + 1), r, slow)


# ----------------------------------------------------------- estimators

def variance_time_estimate(series, m_grid=None) -> HurstEstimate:
    """Slope of log10 var(X^(m)) against log10 m gives -beta; H = 1 - beta/2."""
    x = _standardized(series, 100)
    n = x.size
    if m_grid is None:
        m_grid = geometric_grid(1, n // 10, 20)
    log_m, log_v = [], []
    for m in m_grid:
        if n // m < 2:
            continue
        agg = aggregate_level(x, int(m)).values
        var = float(np.mean((agg - agg.mean()) ** 2))
        if var > 0:
            log_m.append(math.log10(m))
            log_v.append(math.log10(var))
    if len(log_m) < MIN_POINTS:
        raise TooShort(f"only {len(log_m)} usable aggregation levels")
    slope, intercept, r2 = _ols(np.array(log_m), np.array(log_v))
    beta = -slope
    h = 1.0 - beta / 2.0
    return HurstEstimate("variance_time", h, slope, intercept, r2, len(log_m), beta, _flags(h, r2))


def default_block_grid(n: int) -> list[int]:
    grid = [2**p for p in range(6, 64) if 2**p <= n // 4]
    if len(grid) < MIN_POINTS:
        grid = geometric_grid(8, n // 4, 10)
    return grid


def rs_estimate(series, block_grid=None) -> HurstEstimate:
    """Rescaled-range analysis: slope of log mean(R/S) against log block size."""
    x = _standardized(series, 256)
    grid = default_block_grid(x.size) if block_grid is None else list(block_grid)
    log_b, log_rs = [], []
    for block in grid:
        if block < 2 or block > x.size:
            continue
        ratio, used = kernels.rs_average(x, int(block))
        if used:
            log_b.append(math.log10(block))
            log_rs.append(math.log10(ratio))
    if not log_b:
        raise ZeroVariance("every block has zero standard deviation")
    if len(log_b) < MIN_POINTS:
        raise TooShort(f"only {len(log_b)} usable block sizes")
    slope, intercept, r2 = _ols(np.array(log_b), np.array(log_rs))
    return HurstEstimate("rs", slope, slope, intercept, r2, len(log_b), None, _flags(slope, r2))


def periodogram_estimate(series, freq_fraction: float = 0.1) -> HurstEstimate:
    """Regress log I(lam) on log lam over the lowest frequencies; H = (1 - slope)/2."""
    if not 0.0 < freq_fraction <= 1.0:
        raise ValueError("freq_fraction must lie in (0, 1]")
    x = _standardized(series, 64)
    lam, power = periodogram(x)
    count = max(MIN_POINTS, int(freq_fraction * lam.size))
    lam, power = lam[:count], power[:count]
    keep = power > 0
    if keep.sum() < MIN_POINTS:
        raise ZeroVariance("periodogram vanishes at low frequencies")
    slope, intercept, r2 = _ols(np.log10(lam[keep]), np.log10(power[keep]))
    h = (1.0 - slope) / 2.0
    return HurstEstimate("periodogram", h, slope, intercept, r2, int(keep.sum()), None, _flags(h, r2))


def whittle_objective(h: float, power: np.ndarray, alias: AliasSum) -> float:
    """Whittle contrast with the spectral scale profiled out (up to constants)."""
    shape = (1.0 - np.cos(alias.lam)) * alias(2.0 * h + 1.0)
    return math.log(float(np.mean(power / shape))) + float(np.mean(np.log(shape)))


def whittle_estimate(series, tol: float = 1e-4, max_iter: int = 200) -> HurstEstimate:
    """Whittle likelihood estimate of H under the fGn spectral density.

    Minimised over H in (0.01, 0.99) by golden-section search.
    """
    x = _standardized(series, 128)
    lam, power = periodogram(x)
    m = (x.size - 1) // 2
    power = power[:m]
    if not np.any(power > 0):
        raise ZeroVariance("no spectral mass below the Nyquist frequency")
    alias = AliasSum(lam[:m])
    h, _, _ = golden_section_minimize(
        lambda hh: whittle_objective(hh, power, alias), 0.01, 0.99, tol=tol, max_iter=max_iter
    )
    flags = list(_flags(h, None))
    if h < 0.01 + 2 * tol or h > 0.99 - 2 * tol:
        flags.append("BoundaryHit")
    return HurstEstimate("whittle", h, None, None, None, int(m), None, tuple(flags))


_ESTIMATORS = {
    "variance_time": variance_time_estimate,
    "rs": rs_estimate,
    "periodogram": periodogram_estimate,
    "whittle": whittle_estimate,
}


def normalize_method(name: str) -> str:
    try:
        return METHOD_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; choose from {sorted(METHOD_ALIASES)}") from None


def estimate(series, method: str) -> HurstEstimate:
    return _ESTIMATORS[normalize_method(method)](series)


def bucket_h(h: float) -> str:
    """Table label of the lower-closed H bucket containing ``h``."""
    for edge, label in zip(_BUCKET_EDGES, BUCKETS):
        if h < edge:
            return label
    return BUCKETS[-1]
