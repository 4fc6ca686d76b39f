"""Replicate data model and the leave-replicates-out averaging driver.

Held-out replicate indices ``j`` are 1-based throughout (``1 <= j <= B``),
matching how replicates are usually numbered in reports and CSV headers.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import (
    ArityTooLarge,
    Empty,
    IndexOutOfRange,
    NonFinite,
    RegressorFailure,
    SubsetExplosion,
    TooFewReplicates,
)

# Largest number of held-out subsets enumerated by aurora_general_target.
SUBSET_CAP = 256


class Regressor(Protocol):
    """Fit on (features, response) and return the in-sample fitted values."""

    def __call__(self, features: np.ndarray, response: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ReplicateMatrix:
    """An n x B matrix of replicated measurements, one row per unit."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def B(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class SplitView:
    held_out_index: int
    response: np.ndarray
    ordered_features: np.ndarray


def validate_matrix(raw, *, allow_b2: bool = False) -> ReplicateMatrix:
    """Check shape and finiteness and wrap ``raw`` as a :class:`ReplicateMatrix`.

    ``B >= 3`` is required unless ``allow_b2`` is set, in which case ``B = 2``
    is accepted as well.
    """
    if isinstance(raw, ReplicateMatrix):
        raw = raw.values
    arr = np.array(raw, dtype=np.float64)
    if arr.ndim != 2:
        if arr.ndim == 1 and arr.size == 0:
            raise Empty("matrix has no rows")
        raise ValueError(f"expected a 2-d array, got shape {arr.shape}")
    n, B = arr.shape
    if n == 0:
        raise Empty("matrix has no rows")
    min_b = 2 if allow_b2 else 3
    if B < min_b:
        raise TooFewReplicates(f"need at least {min_b} replicates per unit, got B={B}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise NonFinite(f"non-finite value at row {bad[0]}, column {bad[1]}")
    arr.setflags(write=False)
    return ReplicateMatrix(arr)


def _as_values(data) -> np.ndarray:
    return data.values if isinstance(data, ReplicateMatrix) else np.asarray(data, dtype=np.float64)


def split_and_order(data, j: int) -> SplitView:
    """Hold out column ``j`` (1-based) and sort the remaining columns per row."""
    Z = _as_values(data)
    B = Z.shape[1]
    if not 1 <= j <= B:
        raise IndexOutOfRange(f"held-out index j={j} outside 1..{B}")
    response = Z[:, j - 1].copy()
    rest = np.delete(Z, j - 1, axis=1)
    return SplitView(j, response, np.sort(rest, axis=1, kind="stable"))


def _holdout_average(
    Z: np.ndarray,
    subsets: Sequence[tuple[int, ...]],
    make_response: Callable[[np.ndarray], np.ndarray],
    fit: Regressor,
    workers: int,
) -> np.ndarray:
    B = Z.shape[1]

    def one(subset: tuple[int, ...]) -> np.ndarray:
        label = subset[0] + 1 if len(subset) == 1 else tuple(c + 1 for c in subset)
        held = list(subset)
        keep = [c for c in range(B) if c not in subset]
        response = np.ascontiguousarray(make_response(Z[:, held]), dtype=np.float64)
        features = np.sort(Z[:, keep], axis=1, kind="stable")
        try:
            pred = np.asarray(fit(features, response), dtype=np.float64)
        except Exception as exc:
            raise RegressorFailure(label, exc) from exc
        if pred.shape != (Z.shape[0],):
            raise RegressorFailure(label, ValueError(f"predictions have shape {pred.shape}"))
        return pred

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            preds = list(pool.map(one, subsets))
    else:
        preds = [one(s) for s in subsets]

    return combine_predictions(preds)


def combine_predictions(preds: Sequence[np.ndarray]) -> np.ndarray:
    """Per-unit average of split predictions, independent of split order.

    Each unit's values are sorted before summing, so relabeling the
    replicates (or finishing splits in a different order) cannot change a bit.
    """
    stack = np.sort(np.vstack(preds), axis=0)
    total = np.zeros(stack.shape[1])
    for row in stack:
        total += row
    return total / stack.shape[0]


def aurora_estimate(data, fit: Regressor, *, workers: int = 1) -> np.ndarray:
    """Average of in-sample predictions over every held-out replicate.

    For each j the regressor is trained on ``(sorted remaining replicates,
    Z[:, j])`` across all units and evaluated on the same rows; the unit
    estimate is the mean of those predictions over j = 1..B.
    """
    Z = _as_values(data)
    subsets = [(j,) for j in range(Z.shape[1])]
    return _holdout_average(Z, subsets, lambda held: held[:, 0], fit, workers)


@dataclass(frozen=True)
class TargetKernel:
    """A symmetric function of ``arity`` replicates.

    ``func`` receives an ``(n, arity)`` array and returns ``n`` values.
    """

    arity: int
    func: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    name: str = "kernel"

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError("kernel arity must be >= 1")

    def __call__(self, block: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(block), dtype=np.float64)

    def is_symmetric(self, trials: int = 16, seed: int = 0, rtol: float = 1e-12) -> bool:
        """Spot-check permutation invariance on random arguments."""
        if self.arity == 1:
            return True
        rng = np.random.default_rng(seed)
        args = rng.normal(size=(trials, self.arity)) * 3.0
        base = self(args)
        perms = list(itertools.permutations(range(self.arity)))
        if len(perms) > 24:
            perms = [tuple(rng.permutation(self.arity)) for _ in range(24)]
        for perm in perms:
            if not np.allclose(self(args[:, perm]), base, rtol=rtol, atol=1e-12):
                return False
        return True


def identity_kernel() -> TargetKernel:
    return TargetKernel(1, lambda z: z[:, 0], "identity")


def power_kernel(power: float) -> TargetKernel:
    return TargetKernel(1, lambda z: z[:, 0] ** power, f"power{power:g}")


def half_squared_difference() -> TargetKernel:
    """``(z1 - z2)**2 / 2``; its expectation is the within-unit variance."""
    return TargetKernel(2, lambda z: (z[:, 0] - z[:, 1]) ** 2 / 2.0, "half-sq-diff")


def aurora_general_target(
    data,
    target: TargetKernel,
    fit: Regressor,
    *,
    subset_cap: int = SUBSET_CAP,
    workers: int = 1,
) -> np.ndarray:
    """Estimate ``E[h(Z_i1..Z_ir) | unit i]`` by holding out r replicates at a time.

    Every unordered subset S of r columns is enumerated (in lexicographic
    order); the response is ``h`` on the held-out columns and the features are
    the sorted remaining ``B - r`` replicates. Predictions are averaged over
    all ``C(B, r)`` subsets.
    """
    Z = _as_values(data)
    B = Z.shape[1]
    r = target.arity
    if r > B - 1:
        raise ArityTooLarge(f"kernel arity r={r} leaves no feature columns with B={B}")
    count = math.comb(B, r)
    if count > subset_cap:
        raise SubsetExplosion(f"C({B},{r}) = {count} subsets exceeds the cap of {subset_cap}")
    if not target.is_symmetric():
        raise ValueError(f"kernel {target.name!r} is not permutation invariant")
    subsets = list(itertools.combinations(range(B), r))
    return _holdout_average(Z, subsets, target, fit, workers)


def mean_regressor(features: np.ndarray, response: np.ndarray) -> np.ndarray:
    """Constant fit: every unit gets the training-set mean of the response."""
    return np.full(response.shape[0], response.mean())
