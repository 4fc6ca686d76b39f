"""End-to-end estimators built on the Aurora driver, plus classical baselines."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    ReplicateMatrix,
    aurora_estimate,
    combine_predictions,
    split_and_order,
    validate_matrix,
)
from .errors import KMaxTooLarge, NonPositiveData, RegressorFailure
from .regressors import KnnRegressor, LinearFit, ols_fit, ols_fitted, ols_predict, ols_regressor

PARETO_ALPHA_EPS = 1e-6
DEFAULT_TRIM = 0.1


def _matrix(data) -> np.ndarray:
    # estimators accept B = 2; the B >= 3 guard is a CLI default
    return validate_matrix(data, allow_b2=True).values


@dataclass(frozen=True)
class AuroraWeights:
    """OLS coefficients of every held-out split and their average over j.

    ``intercepts[j-1]`` and ``slopes[j-1]`` belong to held-out replicate j;
    slope column c multiplies the (c+1)-th smallest remaining replicate.
    """

    intercepts: np.ndarray  # (B,)
    slopes: np.ndarray  # (B, B-1)

    @property
    def B(self) -> int:
        return self.intercepts.shape[0]

    @property
    def intercept(self) -> float:
        return float(self.intercepts.mean())

    @property
    def averaged_slopes(self) -> np.ndarray:
        return self.slopes.mean(axis=0)

    @property
    def per_j(self) -> list[tuple[float, np.ndarray]]:
        return [(float(a), s) for a, s in zip(self.intercepts, self.slopes)]


def auroral(data) -> tuple[np.ndarray, AuroraWeights]:
    """Aurora with least squares on the order statistics of the other replicates."""
    Z = _matrix(data)
    n, B = Z.shape
    if n <= B:
        warnings.warn(f"n={n} <= B={B}: the least-squares fits interpolate", RuntimeWarning,
                      stacklevel=2)
    fits: list[LinearFit] = []

    def fit(features, response):
        f = ols_fit(features, response)
        fits.append(f)
        return ols_fitted(f, features, response)

    est = aurora_estimate(Z, fit)
    weights = AuroraWeights(np.array([f.intercept for f in fits]),
                            np.vstack([f.slopes for f in fits]))
    return est, weights


def _ccl_fit(xbar: np.ndarray, response: np.ndarray) -> np.ndarray:
    if np.all(xbar == xbar[0]):
        # slope is not identified; intercept-only fit
        return np.full(response.shape[0], response.mean())
    return ols_predict(ols_fit(xbar[:, None], response), xbar[:, None])


def ccl_regressor(features: np.ndarray, response: np.ndarray) -> np.ndarray:
    """OLS of the response on the mean of the feature columns."""
    # a single column is used as is: mean() maps -0.0 to 0.0, which changes QR rounding
    xbar = features[:, 0] if features.shape[1] == 1 else features.mean(axis=1)
    return _ccl_fit(xbar, response)


def ccl(data) -> np.ndarray:
    """Regress each held-out replicate on the mean of the others, averaged over j."""
    return aurora_estimate(_matrix(data), ccl_regressor)


def auroral_single(data, j: int = 1) -> np.ndarray:
    """Auroral using only held-out replicate ``j`` (no averaging over j)."""
    view = split_and_order(_matrix(data), j)
    return ols_regressor(view.ordered_features, view.response)


def ccl_single(data, j: int = 1) -> np.ndarray:
    view = split_and_order(_matrix(data), j)
    return ccl_regressor(view.ordered_features, view.response)


def aurora_knn(
    data,
    k_max: int | None = None,
    *,
    dim_threshold: int = 12,
    strategy: str | None = None,
    jitter: float | None = None,
    seed: int | None = None,
    workers: int = 1,
    return_k: bool = False,
):
    """Aurora with leave-one-out tuned k-nearest-neighbor regression.

    ``k_max`` defaults to ``min(1000, n - 1)``. With ``return_k`` the chosen
    k for each held-out replicate is returned as well.
    """
    Z = _matrix(data)
    n = Z.shape[0]
    if k_max is not None and k_max > n:
        raise KMaxTooLarge(f"k_max={k_max} exceeds n={n}")

    def one(j: int) -> tuple[np.ndarray, int]:
        view = split_and_order(Z, j)
        reg = KnnRegressor(k_max=k_max, dim_threshold=dim_threshold, strategy=strategy,
                           jitter=jitter, seed=seed)
        try:
            pred = reg(view.ordered_features, view.response)
        except Exception as exc:
            raise RegressorFailure(j, exc) from exc
        return pred, reg.chosen_k[0]

    js = range(1, Z.shape[1] + 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, js))
    else:
        results = [one(j) for j in js]
    est = combine_predictions([pred for pred, _ in results])
    chosen = [k for _, k in results]
    return (est, chosen) if return_k else est


# --------------------------------------------------------------------------
# baselines

BASELINE_KINDS = ("mean", "median", "midrange", "trimmed")


def trim_count(B: int, trim: float) -> int:
    if not 0.0 <= trim < 0.5:
        raise ValueError(f"trim fraction must lie in [0, 0.5), got {trim}")
    g = math.floor(trim * B + 1e-9)
    if B - 2 * g < 1:
        raise ValueError(f"trim={trim} removes every replicate when B={B}")
    return g


def location_baseline(data, kind: str = "mean", trim: float = DEFAULT_TRIM) -> np.ndarray:
    """Per-unit location statistic over all B replicates."""
    Z = _matrix(data)
    if kind == "mean":
        return Z.mean(axis=1)
    if kind == "median":
        return np.median(Z, axis=1)
    if kind == "midrange":
        return (Z.max(axis=1) + Z.min(axis=1)) / 2.0
    if kind == "trimmed":
        g = trim_count(Z.shape[1], trim)
        S = np.sort(Z, axis=1)
        return S[:, g:Z.shape[1] - g].mean(axis=1)
    raise ValueError(f"unknown baseline {kind!r}; expected one of {', '.join(BASELINE_KINDS)}")


def pooled_within_variance(data) -> float:
    """Average over units of the per-unit sample variance (ddof=1)."""
    Z = _matrix(data)
    return float(Z.var(axis=1, ddof=1).mean())


def james_stein(data, sigma2: float, center: str = "grand_mean",
                positive_part: bool = True) -> np.ndarray:
    """James-Stein shrinkage of the unit means.

    ``sigma2`` is the per-replicate noise variance, so the unit means have
    variance ``sigma2 / B``. Shrinking toward the grand mean spends one more
    degree of freedom (``n - 3`` instead of ``n - 2``).
    """
    Z = _matrix(data)
    n, B = Z.shape
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    zbar = Z.mean(axis=1)
    if center == "zero":
        if n < 3:
            raise ValueError("zero-centered James-Stein needs n >= 3")
        c, dof = 0.0, n - 2
    elif center == "grand_mean":
        if n < 4:
            raise ValueError("grand-mean James-Stein needs n >= 4")
        c, dof = float(zbar.mean()), n - 3
    else:
        raise ValueError(f"center must be 'zero' or 'grand_mean', got {center!r}")
    dev = zbar - c
    ss = float(dev @ dev)
    if ss == 0.0:
        return np.full(n, c)
    factor = 1.0 - dof * sigma2 / B / ss
    if positive_part:
        factor = max(factor, 0.0)
    return c + factor * dev


def pareto_mle(data) -> np.ndarray:
    """Plug-in mean of a Pareto fit with unknown scale and tail index, per unit.

    Units whose fitted tail index does not exceed ``1 + PARETO_ALPHA_EPS``
    (infinite mean) fall back to the sample mean.
    """
    Z = _matrix(data)
    if np.any(Z <= 0):
        raise NonPositiveData("Pareto fit needs strictly positive data")
    B = Z.shape[1]
    xm = Z.min(axis=1)
    s = np.log(Z / xm[:, None]).sum(axis=1)
    out = Z.mean(axis=1)
    const = s == 0.0
    out[const] = xm[const]
    live = ~const
    alpha = np.full(Z.shape[0], np.inf)
    alpha[live] = B / s[live]
    ok = live & (alpha > 1.0 + PARETO_ALPHA_EPS)
    out[ok] = alpha[ok] * xm[ok] / (alpha[ok] - 1.0)
    return out


# --------------------------------------------------------------------------
# named methods

@dataclass(frozen=True)
class MethodOptions:
    """Tuning knobs shared by every named method.

    ``sigma2=None`` makes ``js`` use the pooled within-unit variance.
    """

    sigma2: float | None = None
    k_max: int | None = None
    trim: float = DEFAULT_TRIM
    center: str = "grand_mean"
    positive_part: bool = True
    workers: int = 1
    knn_jitter: float | None = None
    seed: int | None = None
    holdout: int = 1


def _js(Z, o: MethodOptions):
    s2 = o.sigma2 if o.sigma2 is not None else pooled_within_variance(Z)
    return james_stein(Z, s2, o.center, o.positive_part)


def _knn(Z, o: MethodOptions):
    k_max = o.k_max
    if k_max is not None:
        # a configured cap larger than the data is clamped to n - 1
        k_max = max(1, min(k_max, Z.shape[0] - 1))
    return aurora_knn(Z, k_max, jitter=o.knn_jitter, seed=o.seed, workers=o.workers)


METHODS: dict[str, Callable[[np.ndarray, MethodOptions], np.ndarray]] = {
    "auroral": lambda Z, o: auroral(Z)[0],
    "aurora-knn": _knn,
    "ccl": lambda Z, o: ccl(Z),
    "mean": lambda Z, o: location_baseline(Z, "mean"),
    "median": lambda Z, o: location_baseline(Z, "median"),
    "midrange": lambda Z, o: location_baseline(Z, "midrange"),
    "trimmed": lambda Z, o: location_baseline(Z, "trimmed", o.trim),
    "js": _js,
    "pareto-mle": lambda Z, o: pareto_mle(Z),
}
# single-split variants, mostly for checking exact finite-n risks
EXTRA_METHODS: dict[str, Callable[[np.ndarray, MethodOptions], np.ndarray]] = {
    "auroral-single": lambda Z, o: auroral_single(Z, o.holdout),
    "ccl-single": lambda Z, o: ccl_single(Z, o.holdout),
}


class UnknownMethod(ValueError):
    def __init__(self, name: str, valid):
        self.name = name
        super().__init__(f"unknown method {name!r}; valid methods: {', '.join(valid)}")


def run_method(name: str, data, options: MethodOptions | None = None) -> np.ndarray:
    table = METHODS if name in METHODS else EXTRA_METHODS
    if name not in table:
        raise UnknownMethod(name, METHODS)
    Z = data.values if isinstance(data, ReplicateMatrix) else np.asarray(data, dtype=np.float64)
    return table[name](Z, options or MethodOptions())
