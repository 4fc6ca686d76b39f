"""Closed-form benchmarks: Normal-Normal Bayes rules and risks, discrete-prior
posterior means, efficient L-statistic weights and the van Trees bound."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import KTooSmall


@dataclass(frozen=True)
class NormalNormalSpec:
    """Prior N(m0, A) on the unit mean, K replicates with noise variance sigma2."""

    A: float
    sigma2: float
    m0: float = 0.0
    K: int = 10

    def __post_init__(self):
        if not self.A >= 0:
            raise ValueError(f"prior variance A must be >= 0, got {self.A}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")

    def shrinkage(self, K: int | None = None) -> float:
        """Weight on the unit mean in the posterior mean from ``K`` replicates."""
        K = self.K if K is None else K
        return self.A / (self.A + self.sigma2 / K)


def nn_posterior_mean(spec: NormalNormalSpec, row) -> np.ndarray | float:
    """Posterior mean of the unit mean given its replicates.

    ``row`` may be a single length-K vector or an (n, K) matrix.
    """
    Z = np.asarray(row, dtype=np.float64)
    zbar = Z.mean(axis=-1)
    out = spec.m0 + spec.shrinkage(Z.shape[-1]) * (zbar - spec.m0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class OracleRiskSet:
    bayes_K: float
    bayes_Km1: float
    avg_oracle: float
    jackknife_correction: float


def nn_oracle_risks(spec: NormalNormalSpec) -> OracleRiskSet:
    """Bayes risk with K and K-1 replicates, and the risk of averaging the
    (K-1)-replicate Bayes rule over all K holdouts."""
    A, s2, K = spec.A, spec.sigma2, spec.K
    if K < 2:
        raise KTooSmall(f"need K >= 2, got {K}")
    r_k = A * s2 / (A * K + s2)
    r_km1 = A * s2 / (A * (K - 1) + s2)
    gap = A * s2 / ((A * K + s2) * (A * (K - 1) + s2))
    avg = r_k + gap * gap * (A + s2 / K)
    w = A / (A + s2 / (K - 1))
    corr = w * w * s2 / ((K - 1) * K)
    return OracleRiskSet(r_k, r_km1, avg, corr)


def nn_single_holdout_risks(spec: NormalNormalSpec, n: int) -> tuple[float, float]:
    """Exact risks of Auroral and CC-L fitted on the single split j = 1."""
    A, s2, K = spec.A, spec.sigma2, spec.K
    if K < 2:
        raise KTooSmall(f"need K >= 2, got {K}")
    if n <= K:
        raise ValueError(f"need n > K, got n={n}, K={K}")
    r_km1 = A * s2 / (A * (K - 1) + s2)
    excess = s2 - A * s2 / (s2 + A * (K - 1))
    return r_km1 + K / n * excess, r_km1 + 2 / n * excess


def discrete_posterior_mean(atoms, probs, sigma2: float, row) -> np.ndarray | float:
    """Posterior mean under a finite prior and Normal(mu, sigma2) replicates.

    Works in log space with max subtraction. ``row`` may be one length-K
    vector or an (n, K) matrix.
    """
    a = np.asarray(atoms, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if a.ndim != 1 or a.shape != p.shape or a.size == 0:
        raise ValueError("atoms and probs must be non-empty vectors of equal length")
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0, rtol=0, atol=1e-12):
        raise ValueError("probs must be non-negative and sum to 1")
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    Z = np.asarray(row, dtype=np.float64)
    Z2 = np.atleast_2d(Z)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    # sum_j (z_j - a)^2 = sum z^2 - 2 a sum z + K a^2; the first term cancels
    K = Z2.shape[1]
    s = Z2.sum(axis=1)
    logw = logp[None, :] - (K * a[None, :] ** 2 - 2.0 * a[None, :] * s[:, None]) / (2.0 * sigma2)
    w = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    assert np.all(w.sum(axis=1) > 0)
    out = (w * a[None, :]).sum(axis=1) / w.sum(axis=1)
    return float(out[0]) if Z.ndim == 1 else out


LSTAT_FAMILIES = ("gaussian", "logistic")


@dataclass(frozen=True)
class LStatWeights:
    family: str
    K: int
    slopes: np.ndarray
    intercept: float = 0.0

    @property
    def h(self) -> np.ndarray:
        """h(j/K) for j = 1..K-1."""
        return self.slopes * (self.K - 1)

    def apply(self, ordered) -> np.ndarray:
        """Evaluate the linear rule on rows of K-1 sorted values."""
        return self.intercept + np.asarray(ordered, dtype=np.float64) @ self.slopes


def lstat_weights(family: str, K: int) -> LStatWeights:
    """Efficient weights on the K-1 order statistics for a symmetric location family.

    With ``h(u) = -l''(F^{-1}(u)) / I(f)`` the slope on the j-th order statistic
    is ``h(j/K) / (K-1)``. The scale parameter cancels, so only the family
    matters: gaussian gives ``h = 1`` and logistic gives ``h(u) = 6u(1-u)``.
    """
    if K < 2:
        raise KTooSmall(f"need K >= 2, got {K}")
    u = np.arange(1, K) / K
    if family == "gaussian":
        h = np.ones(K - 1)
    elif family == "logistic":
        h = 6.0 * u * (1.0 - u)
    else:
        raise ValueError(f"unknown family {family!r}; expected one of {', '.join(LSTAT_FAMILIES)}")
    return LStatWeights(family, K, h / (K - 1))


def van_trees_bound(I_f: float, I_g: float, K: int) -> float:
    """Lower bound ``1 / (K I_f + I_g)`` on the Bayes risk of a location family."""
    if not I_f > 0:
        raise ValueError(f"I_f must be > 0, got {I_f}")
    if not I_g >= 0:
        raise ValueError(f"I_g must be >= 0, got {I_g}")
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    return 1 / (K * I_f + I_g)
