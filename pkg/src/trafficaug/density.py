"""Univariate Gaussian-kernel density estimation and smoothed-bootstrap sampling.

The estimator keeps all fitted samples x_1..x_n and a bandwidth h > 0, and
evaluates

    pdf(x) = 1 / (n * h) * sum_i K((x - x_i) / h),

with K the standard normal density.  Sampling draws from exactly that
mixture by picking a stored sample uniformly and adding h-scaled Gaussian
noise (the smoothed bootstrap), so draw variance equals the stored-sample
variance plus h**2.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .validation import as_1d_float_array, check_rng

_SQRT_2PI = math.sqrt(2.0 * math.pi)

#: Relative floor used when the sample standard deviation is zero, so a
#: constant feature is replicated near-exactly instead of failing.
DEGENERATE_BANDWIDTH_SCALE = 1e-9


def gaussian_kernel(u: np.ndarray) -> np.ndarray:
    """Standard normal density (mean 0, scale 1)."""
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT_2PI


def degenerate_bandwidth(samples: np.ndarray) -> float:
    return DEGENERATE_BANDWIDTH_SCALE * max(1.0, abs(float(np.mean(samples))))


def silverman_bandwidth(samples) -> float:
    """Rule-of-thumb bandwidth (4 * sigma^5 / (3 * n)) ** (1/5).

    ``sigma`` is the unbiased (n-1 denominator) sample standard deviation;
    requires n >= 2.  A zero standard deviation falls back to the
    degenerate floor.
    """
    x = as_1d_float_array(samples, "samples")
    n = x.size
    if n < 2:
        raise ValueError(f"silverman_bandwidth needs at least 2 samples, got {n}")
    sigma = float(np.std(x, ddof=1))
    if sigma == 0.0:
        return degenerate_bandwidth(x)
    return (4.0 * sigma ** 5 / (3.0 * n)) ** 0.2


class GaussianKde(BaseEstimator):
    """Gaussian-kernel density estimator over one real-valued feature.

    Parameters
    ----------
    bandwidth : float or "silverman"
        Kernel scale h.  The string selects the rule-of-thumb formula
        (then at least two samples are required); an explicit value must
        be positive.

    Attributes (after fit)
    ----------------------
    samples_ : ndarray of shape (n,) -- retained in insertion order
    n_ : int
    h_ : float
    """

    def __init__(self, bandwidth="silverman"):
        self.bandwidth = bandwidth

    def fit(self, X, y=None):
        x = as_1d_float_array(X, "X")
        if x.size == 0:
            raise ValueError("cannot fit a KDE on an empty sample set")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "silverman":
                raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
            h = silverman_bandwidth(x)
        else:
            h = float(self.bandwidth)
            if not math.isfinite(h) or h <= 0.0:
                raise ValueError(f"explicit bandwidth must be positive, got {self.bandwidth!r}")
        self.samples_ = x.copy()
        self.n_ = int(x.size)
        self.h_ = h
        return self

    def pdf(self, x) -> np.ndarray | float:
        """Mixture density at ``x`` (scalar or array, evaluated pointwise)."""
        check_is_fitted(self, "samples_")
        scalar = np.isscalar(x)
        pts = np.atleast_1d(np.asarray(x, dtype=float))
        u = (pts[:, None] - self.samples_[None, :]) / self.h_
        dens = gaussian_kernel(u).sum(axis=1) / (self.n_ * self.h_)
        return float(dens[0]) if scalar else dens

    def sample(self, n_samples: int, random_state=None) -> np.ndarray:
        """Smoothed-bootstrap draws: x_I + h * eps, I uniform, eps ~ N(0,1)."""
        check_is_fitted(self, "samples_")
        if n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {n_samples}")
        rng = check_rng(random_state)
        picks = rng.integers(0, self.n_, size=n_samples)
        noise = rng.standard_normal(n_samples)
        return self.samples_[picks] + self.h_ * noise

    def to_obj(self) -> dict:
        check_is_fitted(self, "samples_")
        return {"samples": self.samples_.tolist(), "bandwidth": self.h_}

    @classmethod
    def from_obj(cls, obj: dict) -> "GaussianKde":
        kde = cls(bandwidth=float(obj["bandwidth"]))
        return kde.fit(obj["samples"])
