"""Seeded synthetic benchmark series with piecewise-stationary regimes.

Segments are numbered N = 1..num_segments and each spans
``segment_length`` observations. A change point recorded at position
``s * j`` means ``x(s * j + 1)`` is the first observation of the new regime.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .core import Annotation, TimeSeries

logger = logging.getLogger(__name__)

FAMILIES = ("mean_jumps", "variance_jumps", "cov_jumps", "class_alternation")


@dataclass(frozen=True)
class SyntheticSpec:
    family: str = "mean_jumps"
    segment_length: int = 200
    num_segments: int = 10
    noise_sigma: float = 0.0
    seed: int = 0
    n_series: int = 10

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.segment_length < 1:
            raise ValueError("segment_length must be >= 1")
        if self.num_segments < 2:
            raise ValueError("num_segments must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def _annotation(spec) -> Annotation:
    s = spec.segment_length
    return Annotation(tuple(s * j for j in range(1, spec.num_segments)), T=s * spec.num_segments)


def mean_levels(num_segments: int) -> np.ndarray:
    """mu_1 = 0, mu_N = mu_{N-1} + 0.2 N."""
    mu = np.zeros(num_segments)
    for N in range(2, num_segments + 1):
        mu[N - 1] = mu[N - 2] + 0.2 * N
    return mu


def std_levels(num_segments: int) -> np.ndarray:
    """sigma_N = 1 for odd N and 1 + 0.25 N for even N."""
    N = np.arange(1, num_segments + 1)
    return np.where(N % 2 == 0, 1.0 + 0.25 * N, 1.0)


def correlation_levels(num_segments: int) -> np.ndarray:
    """Off-diagonal of Sigma_N: -0.1 N for odd N, +0.1 N for even N."""
    N = np.arange(1, num_segments + 1)
    return np.where(N % 2 == 0, 0.1 * N, -0.1 * N)


def gen_mean_jumps(spec: SyntheticSpec) -> tuple[TimeSeries, Annotation]:
    rng = np.random.default_rng(spec.seed)
    mu = np.repeat(mean_levels(spec.num_segments), spec.segment_length)
    x = mu + rng.standard_normal(mu.size)
    return TimeSeries(x[:, None]), _annotation(spec)


def gen_variance_jumps(spec: SyntheticSpec) -> tuple[TimeSeries, Annotation]:
    rng = np.random.default_rng(spec.seed)
    sigma = np.repeat(std_levels(spec.num_segments), spec.segment_length)
    x = sigma * rng.standard_normal(sigma.size)
    return TimeSeries(x[:, None]), _annotation(spec)


def gen_cov_jumps(spec: SyntheticSpec, allow_degenerate: bool = True) -> tuple[TimeSeries, Annotation]:
    """Two-dimensional zero-mean normal with unit variances and alternating correlation.

    Sampled as x1 = z1, x2 = rho z1 + sqrt(1 - rho^2) z2. Segment 10 has
    |rho| = 1, a singular covariance; it is generated (x2 = x1) with a
    warning unless ``allow_degenerate`` is False.
    """
    rho = correlation_levels(spec.num_segments)
    if np.any(np.abs(rho) > 1 + 1e-12):
        raise ValueError("degenerate covariance: |rho| > 1 for num_segments > 10")
    if np.any(np.isclose(np.abs(rho), 1.0)):
        if not allow_degenerate:
            raise ValueError("degenerate covariance: |rho| = 1")
        logger.warning("cov_jumps segment with |rho| = 1 (singular covariance)")
    rng = np.random.default_rng(spec.seed)
    r = np.repeat(rho, spec.segment_length)
    z = rng.standard_normal((r.size, 2))
    x = np.column_stack([z[:, 0], r * z[:, 0] + np.sqrt(np.clip(1.0 - r * r, 0.0, None)) * z[:, 1]])
    return TimeSeries(x), _annotation(spec)


def standardize(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return (X - X.mean(axis=0)) / std


def gen_class_alternation(features, labels, segment_length: int = 200, num_segments: int = 10,
                          noise_sigma: float = 2.0, seed: int = 0) -> tuple[TimeSeries, Annotation]:
    """Series that alternates between positive (odd N) and negative (even N) class samples.

    Samples are drawn with replacement from the labelled pool, every column
    is standardised over the whole series, then N(0, noise_sigma) noise is
    added to every entry.
    """
    spec = SyntheticSpec("class_alternation", segment_length, num_segments, noise_sigma, seed)
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    labels = np.asarray(labels).ravel()
    if labels.shape[0] != features.shape[0]:
        raise ValueError("features and labels differ in length")
    pos = features[labels.astype(bool)]
    neg = features[~labels.astype(bool)]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("missing class examples")
    rng = np.random.default_rng(seed)
    blocks = []
    for N in range(1, num_segments + 1):
        pool = pos if N % 2 else neg
        blocks.append(pool[rng.integers(0, len(pool), size=segment_length)])
    X = standardize(np.vstack(blocks))
    if noise_sigma > 0:
        X = X + rng.normal(0.0, noise_sigma, size=X.shape)
    return TimeSeries(X), _annotation(spec)


GENERATORS = {
    "mean_jumps": gen_mean_jumps,
    "variance_jumps": gen_variance_jumps,
    "cov_jumps": gen_cov_jumps,
}


def generate(spec: SyntheticSpec, features=None, labels=None) -> tuple[TimeSeries, Annotation]:
    if spec.family == "class_alternation":
        if features is None or labels is None:
            raise ValueError("class_alternation needs a labelled feature pool")
        return gen_class_alternation(features, labels, spec.segment_length, spec.num_segments,
                                     spec.noise_sigma, spec.seed)
    return GENERATORS[spec.family](spec)


def generate_dataset(spec: SyntheticSpec, features=None, labels=None) -> list[tuple[TimeSeries, Annotation]]:
    """``spec.n_series`` series with seeds ``spec.seed + i``."""
    return [generate(replace(spec, seed=spec.seed + i), features, labels) for i in range(spec.n_series)]
