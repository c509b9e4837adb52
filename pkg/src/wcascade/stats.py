"""Histogram density fits, least squares and binned conditional variance.

Scale fits match a normalized sample histogram against a single-parameter
density family (location fixed at zero) by least squares; the model value
per bin is the bin-averaged density, i.e. the CDF increment divided by the
bin width, which keeps the fit unbiased for heavy-tailed families even at
coarse binnings.  Variances use the population convention (divisor ``n``)
throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

__all__ = [
    "HistogramSpec",
    "FitResult",
    "RegressionResult",
    "BinnedVariance",
    "fit_cauchy",
    "fit_student_t2",
    "fit_normal",
    "ols",
    "pearson_correlation",
    "binned_conditional_variance",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class HistogramSpec:
    """Equal-width binning over the central ``coverage`` quantile range.

    Explicit ``limits`` override the quantile rule.
    """

    n_bins: int = 101
    coverage: float = 0.99
    limits: tuple | None = None

    def edges(self, samples: np.ndarray) -> np.ndarray:
        if self.limits is not None:
            lo, hi = self.limits
        else:
            tail = (1.0 - self.coverage) / 2.0
            lo, hi = np.quantile(samples, [tail, 1.0 - tail])
        if not hi > lo:
            raise ValueError("histogram range is degenerate")
        return np.linspace(lo, hi, self.n_bins + 1)


@dataclass
class FitResult:
    family: str
    scale: float
    location: float
    goodness: float  # sum of squared density residuals

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "scale": self.scale,
            "location": self.location,
            "goodness": self.goodness,
        }


@dataclass
class RegressionResult:
    slope: float
    intercept: float
    stderr_slope: float
    stderr_intercept: float
    r2: float
    adj_r2: float
    n: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr_slope": self.stderr_slope,
            "stderr_intercept": self.stderr_intercept,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "n": self.n,
        }


@dataclass
class BinnedVariance:
    """Per-bin sample variance of a successor conditioned on its predecessor.

    Bins are half-open ``[k*width, (k+1)*width)``.  ``included`` marks bins
    meeting ``min_count``; the full table is retained for the all-bins view.
    """

    bin_centers: np.ndarray
    bin_counts: np.ndarray
    conditional_variances: np.ndarray
    bin_width: float
    min_count: int
    included: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.included is None:
            self.included = self.bin_counts >= self.min_count

    def to_dict(self) -> dict:
        return {
            "bin_centers": np.asarray(self.bin_centers).tolist(),
            "bin_counts": np.asarray(self.bin_counts).tolist(),
            "conditional_variances": np.asarray(self.conditional_variances).tolist(),
            "bin_width": self.bin_width,
            "min_count": self.min_count,
            "included": np.asarray(self.included).astype(bool).tolist(),
        }


def _golden_section(f, lo: float, hi: float, rel_tol: float = 1e-8):
    """Minimize a unimodal function on [lo, hi] by golden-section search."""
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(400):
        if (b - a) <= rel_tol * max(abs(a), abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _cauchy_cdf(x, scale):
    return 0.5 + np.arctan(x / scale) / math.pi


def _student_t2_cdf(x, scale):
    t = x / scale
    return 0.5 + t / (2.0 * np.sqrt(2.0 + t * t))


def _normal_cdf(x, scale):
    return ndtr(x / scale)


_FAMILIES = {
    "cauchy": _cauchy_cdf,
    "student_t2": _student_t2_cdf,
    "normal": _normal_cdf,
}


def _fit_scale(samples, bins: HistogramSpec | None, family: str) -> FitResult:
    samples = np.asarray(samples, dtype=float)
    if samples.size < 100:
        raise ValueError(f"scale fit needs >= 100 samples, got {samples.size}")
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples contain non-finite values")
    if samples.max() == samples.min():
        raise ValueError("samples are degenerate (all equal)")
    q25, q75 = np.quantile(samples, [0.25, 0.75])
    iqr = q75 - q25
    if not iqr > 0:
        raise ValueError("interquartile range is zero; samples too concentrated")
    bins = bins or HistogramSpec()
    edges = bins.edges(samples)
    width = edges[1] - edges[0]
    counts, _ = np.histogram(samples, bins=edges)
    density = counts / (samples.size * width)
    cdf = _FAMILIES[family]

    def sse(scale):
        model = (cdf(edges[1:], scale) - cdf(edges[:-1], scale)) / width
        return float(np.sum((density - model) ** 2))

    scale, goodness = _golden_section(sse, 1e-3 * iqr, 10.0 * iqr)
    return FitResult(family=family, scale=scale, location=0.0, goodness=goodness)


def fit_cauchy(samples, bins: HistogramSpec | None = None) -> FitResult:
    """Least-squares Cauchy scale against the sample histogram density."""
    return _fit_scale(samples, bins, "cauchy")


def fit_student_t2(samples, bins: HistogramSpec | None = None) -> FitResult:
    """Least-squares scale of the two-degrees-of-freedom Student density."""
    return _fit_scale(samples, bins, "student_t2")


def fit_normal(samples, bins: HistogramSpec | None = None) -> FitResult:
    """Least-squares scale of the centered normal density."""
    return _fit_scale(samples, bins, "normal")


def ols(x, y) -> RegressionResult:
    """Simple linear regression y = a x + b with classical standard errors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    n = x.size
    if n < 3:
        raise ValueError(f"regression needs at least 3 points, got {n}")
    xbar = x.mean()
    ybar = y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    if sxx == 0.0:
        raise ValueError("x is constant; slope is undefined")
    sxy = float(np.sum((x - xbar) * (y - ybar)))
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    resid = y - slope * x - intercept
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - ybar) ** 2))
    sigma2 = ssr / (n - 2)
    stderr_slope = math.sqrt(sigma2 / sxx)
    stderr_intercept = math.sqrt(sigma2 * (1.0 / n + xbar**2 / sxx))
    r2 = 1.0 if sst == 0.0 else 1.0 - ssr / sst
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - 2)
    return RegressionResult(
        slope=slope,
        intercept=intercept,
        stderr_slope=stderr_slope,
        stderr_intercept=stderr_intercept,
        r2=r2,
        adj_r2=adj_r2,
        n=n,
    )


def pearson_correlation(x, y) -> float:
    """Sample Pearson correlation; rejects constant inputs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    if x.size < 2:
        raise ValueError("correlation needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.sum(dx**2)))
    sy = float(np.sqrt(np.sum(dy**2)))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation is undefined for constant input")
    r = float(np.dot(dx, dy) / (sx * sy))
    return min(1.0, max(-1.0, r))


def binned_conditional_variance(
    predecessor, successor, bin_width: float, min_count: int
) -> BinnedVariance:
    """Population variance of ``successor`` within equal-width predecessor bins.

    Bin ``k`` covers ``[k*bin_width, (k+1)*bin_width)``; every sample lands
    in exactly one bin, so the counts add up to the input length.
    """
    predecessor = np.asarray(predecessor, dtype=float)
    successor = np.asarray(successor, dtype=float)
    if predecessor.shape != successor.shape or predecessor.ndim != 1:
        raise ValueError("predecessor and successor must be equal-length vectors")
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    idx = np.floor(predecessor / bin_width).astype(np.int64)
    uniq, inverse = np.unique(idx, return_inverse=True)
    counts = np.bincount(inverse)
    sums = np.bincount(inverse, weights=successor)
    sq_sums = np.bincount(inverse, weights=successor**2)
    means = sums / counts
    variances = sq_sums / counts - means**2
    variances = np.maximum(variances, 0.0)  # guard rounding
    centers = (uniq + 0.5) * bin_width
    result = BinnedVariance(
        bin_centers=centers,
        bin_counts=counts,
        conditional_variances=variances,
        bin_width=float(bin_width),
        min_count=int(min_count),
    )
    if not np.any(result.included):
        warnings.warn(
            f"no bin reaches min_count={min_count}; main view is empty",
            stacklevel=2,
        )
    return result
