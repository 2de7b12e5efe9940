"""Exact fractional Gaussian noise by circulant embedding, plus iid baselines.

Randomness comes from numpy's PCG64 bit generator seeded with the SynthSpec
64-bit seed; normal deviates use numpy's ziggurat sampler
(``Generator.standard_normal``).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NegativeEigenvalue
from .estimators import theoretical_acov

EIGEN_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SynthSpec:
    h: float
    n: int
    sigma2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.h < 1.0:
            raise DomainError(f"h must lie in (0, 1), got {self.h}")
        if self.n < 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@functools.lru_cache(maxsize=32)
def _circulant_eigenvalues(h: float, n: int) -> np.ndarray:
    acov = theoretical_acov(h, 1.0, np.arange(n + 1))
    row = np.concatenate([acov, acov[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -EIGEN_TOLERANCE:
        raise NegativeEigenvalue(f"circulant embedding eigenvalue {eig.min():.3g} for h={h}, n={n}")
    eig = np.clip(eig, 0.0, None)
    eig.flags.writeable = False
    return eig


def gen_fgn(spec: SynthSpec) -> np.ndarray:
    """Stationary Gaussian series with autocovariance ``theoretical_acov(h, sigma2, k)``."""
    eig = _circulant_eigenvalues(spec.h, spec.n)
    size = eig.size
    rng = rng_for(spec.seed)
    noise = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    path = np.fft.fft(np.sqrt(eig / size) * noise)
    return math.sqrt(spec.sigma2) * path.real[: spec.n]


def gen_iid_gaussian(n: int, sigma2: float = 1.0, seed: int = 0) -> np.ndarray:
    if n < 1:
        raise DomainError("n must be >= 1")
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    return math.sqrt(sigma2) * rng_for(seed).standard_normal(n)
