"""Least squares on order statistics and k-nearest-neighbor regression.

Neighbor lists are always ordered by exact squared Euclidean distance with
ties broken by ascending row index. Both search strategies (kd-tree and
brute force) only propose candidates; the final ordering is decided by
:func:`_exact_sq_dist`, so the two strategies return identical lists.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, KMaxTooLarge, KOutOfRange

RANK_RTOL = 1e-10
DEFAULT_DIM_THRESHOLD = 12
DEFAULT_K_MAX = 1000

# relative slack when comparing exact distances to candidate-search bounds
_BOUND_RTOL = 1e-9
_BRUTE_BLOCK = 512
_EXACT_CHUNK = 1 << 21


# --------------------------------------------------------------------------
# ordinary least squares

@dataclass(frozen=True)
class LinearFit:
    intercept: float
    slopes: np.ndarray
    rank: int

    @property
    def p(self) -> int:
        return self.slopes.shape[0]


def _min_norm_lstsq(D: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, int]:
    """Minimum-norm least-squares solution via column-pivoted QR.

    Columns whose pivot falls below ``RANK_RTOL`` times the largest column
    norm are treated as dependent; the remaining trapezoidal system is solved
    for its minimum-norm solution (complete orthogonal decomposition).
    """
    Q, R, piv = linalg.qr(D, mode="economic", pivoting=True)
    c = Q.T @ y
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(D.shape[1]), 0
    rank = int(np.count_nonzero(diag > RANK_RTOL * diag[0]))
    m = D.shape[1]
    if rank == m:
        z = linalg.solve_triangular(R[:m, :m], c[:m])
    else:
        R1 = R[:rank, :]
        Q2, R2 = linalg.qr(R1.T, mode="economic")
        w = linalg.solve_triangular(R2, c[:rank], trans="T")
        z = Q2 @ w
    coef = np.empty(m)
    coef[piv] = z
    return coef, rank


def ols_fit(X, y) -> LinearFit:
    """Least-squares fit of ``y`` on an intercept plus the columns of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1:
        raise DimensionMismatch(f"need X 2-d and y 1-d, got {X.shape} and {y.shape}")
    n, p = X.shape
    if n != y.shape[0]:
        raise DimensionMismatch(f"X has {n} rows but y has {y.shape[0]} entries")
    if n < 1 or p < 1:
        raise DimensionMismatch("need at least one row and one feature column")
    D = np.empty((n, p + 1))
    D[:, 0] = 1.0
    D[:, 1:] = X
    coef, rank = _min_norm_lstsq(D, y)
    return LinearFit(float(coef[0]), coef[1:].copy(), rank)


def ols_predict(fit: LinearFit, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != fit.p:
        raise DimensionMismatch(f"fit has {fit.p} slopes, X has shape {X.shape}")
    return fit.intercept + X @ fit.slopes


def ols_fitted(fit: LinearFit, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """In-sample fitted values of ``fit``.

    When every row of ``X`` is the same the column space is spanned by the
    intercept alone, so the projection is returned directly as ``mean(y)``.
    """
    if X.shape[0] and np.all(X == X[0]):
        return np.full(X.shape[0], y.mean())
    return ols_predict(fit, X)


def ols_regressor(features: np.ndarray, response: np.ndarray) -> np.ndarray:
    return ols_fitted(ols_fit(features, response), features, response)


# --------------------------------------------------------------------------
# nearest neighbors

def _exact_sq_dist(P: np.ndarray, idx: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Squared distances ``|P[idx[r, c]] - Q[r]|^2``, summed over dimensions in order.

    The summation order is fixed (dimension 0 first) so that every caller,
    including test oracles written with plain loops, gets bitwise equal values.
    """
    out = np.empty(idx.shape)
    cols = np.ascontiguousarray(P.T)
    rows_per_chunk = max(1, _EXACT_CHUNK // max(1, idx.shape[1]))
    for s in range(0, idx.shape[0], rows_per_chunk):
        sub = idx[s:s + rows_per_chunk]
        q = Q[s:s + rows_per_chunk]
        acc = np.zeros(sub.shape)
        for c in range(cols.shape[0]):
            d = cols[c][sub] - q[:, c:c + 1]
            acc += d * d
        out[s:s + rows_per_chunk] = acc
    return out


def _sort_rows(idx: np.ndarray, d2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order each row by (d2, idx); rows already in order are left alone."""
    if idx.shape[1] < 2:
        return idx, d2
    later = d2[:, 1:]
    earlier = d2[:, :-1]
    bad = (earlier > later) | ((earlier == later) & (idx[:, :-1] > idx[:, 1:]))
    rows = np.flatnonzero(bad.any(axis=1))
    if rows.size:
        idx = idx.copy()
        d2 = d2.copy()
        order = np.lexsort((idx[rows], d2[rows]), axis=-1)
        idx[rows] = np.take_along_axis(idx[rows], order, axis=1)
        d2[rows] = np.take_along_axis(d2[rows], order, axis=1)
    return idx, d2


@dataclass(eq=False)
class NeighborIndex:
    """Exact Euclidean neighbor search over the rows of ``points``."""

    points: np.ndarray
    strategy: str
    _tree: cKDTree | None = field(default=None, repr=False)
    _self_cache: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def _full_row(self, q: np.ndarray, exclude: int | None, k: int) -> tuple[np.ndarray, np.ndarray]:
        all_idx = np.arange(self.n)[None, :]
        d2 = _exact_sq_dist(self.points, all_idx, q[None, :])[0]
        if exclude is not None:
            d2[exclude] = np.inf
        order = np.argsort(d2, kind="stable")[:k]
        return order, d2[order]

    def _candidates(self, Q: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Up to ``m`` candidate rows per query, plus a lower bound on the
        exact squared distance of every row that was not proposed."""
        if self.strategy == "tree":
            dist, idx = self._tree.query(Q, k=m)
            if m == 1:
                dist, idx = dist[:, None], idx[:, None]
            bound = dist[:, -1] ** 2 * (1.0 - _BOUND_RTOL)
            return idx.astype(np.intp), bound
        P = self.points
        center = P.mean(axis=0)
        Pc = P - center
        Qc = Q - center
        psq = np.einsum("ij,ij->i", Pc, Pc)
        qsq = np.einsum("ij,ij->i", Qc, Qc)
        scale = psq.max() if psq.size else 0.0
        idx_out = np.empty((Q.shape[0], m), dtype=np.intp)
        bound = np.empty(Q.shape[0])
        for s in range(0, Q.shape[0], _BRUTE_BLOCK):
            qs = qsq[s:s + _BRUTE_BLOCK]
            # |q|^2 is constant per row, so rank on |p|^2 - 2 q.p and add it back after
            approx = Qc[s:s + _BRUTE_BLOCK] @ Pc.T
            approx *= -2.0
            approx += psq
            if m < self.n:
                part = np.argpartition(approx, m - 1, axis=1)[:, :m]
            else:
                part = np.broadcast_to(np.arange(self.n), (approx.shape[0], self.n)).copy()
            vals = np.take_along_axis(approx, part, axis=1)
            order = np.argsort(vals, axis=1, kind="stable")
            part = np.take_along_axis(part, order, axis=1)
            top = vals.max(axis=1) + qs
            # rounding error of the expanded form is bounded by a few ulps of the norms
            slack = 64 * np.finfo(float).eps * (qs + scale) + _BOUND_RTOL * np.abs(top)
            idx_out[s:s + _BRUTE_BLOCK] = part
            bound[s:s + _BRUTE_BLOCK] = top - slack
        return idx_out, bound

    def _search(self, Q: np.ndarray, k: int, self_rows: np.ndarray | None):
        n = self.n
        avail = n - (1 if self_rows is not None else 0)
        if k > avail:
            raise KOutOfRange(f"asked for {k} neighbors but only {avail} are available")
        extra = 2 if self_rows is not None else 1
        m = min(n, k + extra)
        cand, bound = self._candidates(Q, m)
        if m == n:
            bound = np.full(Q.shape[0], np.inf)
        if self_rows is not None:
            is_self = cand == self_rows[:, None]
            missing = ~is_self.any(axis=1)
            keep = ~is_self
            keep[missing, -1] = False
            cand = cand[keep].reshape(cand.shape[0], m - 1)
        d2 = _exact_sq_dist(self.points, cand, Q)
        cand, d2 = _sort_rows(cand, d2)
        idx, dk = cand[:, :k], d2[:, :k]
        # a row is settled when its k-th distance is strictly inside the region
        # the candidate search certified, and not tied with the next candidate
        ok = dk[:, -1] < bound
        if cand.shape[1] > k:
            ok &= dk[:, -1] < d2[:, k]
        idx = np.ascontiguousarray(idx)
        dk = np.ascontiguousarray(dk)
        for r in np.flatnonzero(~ok):
            exclude = None if self_rows is None else int(self_rows[r])
            idx[r], dk[r] = self._full_row(Q[r], exclude, k)
        return idx, dk

    def query(self, Q, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The ``k`` nearest indexed rows to each query row, with squared distances."""
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        if Q.shape[1] != self.points.shape[1]:
            raise DimensionMismatch(f"index has dimension {self.points.shape[1]}, query {Q.shape[1]}")
        if not 1 <= k <= self.n:
            raise KOutOfRange(f"k={k} outside 1..{self.n}")
        return self._search(Q, k, None)

    def neighbors_excluding_self(self, k: int) -> np.ndarray:
        """``o(i, 1..k)``: the ``k`` nearest other rows for every indexed row."""
        if k == 0:
            return np.empty((self.n, 0), dtype=np.intp)
        if self._self_cache is not None and self._self_cache[0].shape[1] >= k:
            return self._self_cache[0][:, :k]
        idx, d2 = self._search(self.points, k, np.arange(self.n))
        self._self_cache = (idx, d2)
        return idx


def knn_index(
    X,
    dim_threshold: int = DEFAULT_DIM_THRESHOLD,
    *,
    strategy: str | None = None,
    jitter: float | None = None,
    seed: int | None = None,
) -> NeighborIndex:
    """Build a neighbor index: kd-tree when ``p <= dim_threshold``, brute force otherwise.

    ``jitter`` appends an extra coordinate drawn from ``U[0, jitter]`` (seeded)
    to break ties randomly instead of by row index.
    """
    P = np.array(X, dtype=np.float64, order="C")
    if P.ndim != 2 or P.shape[0] < 1:
        raise DimensionMismatch(f"need a non-empty 2-d array, got shape {P.shape}")
    if jitter is not None:
        rng = np.random.default_rng(seed)
        P = np.hstack([P, rng.uniform(0.0, jitter, size=(P.shape[0], 1))])
    if strategy is None:
        strategy = "tree" if P.shape[1] <= dim_threshold else "brute"
    if strategy not in ("tree", "brute"):
        raise ValueError(f"unknown strategy {strategy!r}")
    P.setflags(write=False)
    tree = cKDTree(P, leafsize=32) if strategy == "tree" else None
    return NeighborIndex(P, strategy, tree)


@dataclass(frozen=True)
class KSelection:
    k_star: int
    loo_curve: np.ndarray  # LOO(0), ..., LOO(k_max - 1)


def _sequential_row_sum(M: np.ndarray) -> np.ndarray:
    """Column totals of ``M`` accumulated row by row, top to bottom."""
    tot = np.zeros(M.shape[1])
    for row in M:
        tot += row
    return tot


def knn_select_k(index: NeighborIndex, y, k_max: int) -> KSelection:
    """Choose k by leave-one-out error over ``k = 1..k_max``.

    ``LOO(m)`` is the mean squared error of predicting each ``y_i`` by the
    average of its ``m`` nearest other units, with ``LOO(0) = mean(y**2)``.
    The chosen ``k_star`` minimizes ``LOO(k - 1)``, smallest k on ties: the
    final prediction averages the unit itself with ``k_star - 1`` neighbors.
    Neighbor sums are built incrementally, one neighbor rank at a time.
    """
    y = np.asarray(y, dtype=np.float64)
    n = index.n
    if y.shape != (n,):
        raise DimensionMismatch(f"y has shape {y.shape}, index has {n} rows")
    if n < 2:
        raise KOutOfRange("need at least two units for leave-one-out selection")
    if k_max < 1:
        raise KOutOfRange(f"k_max must be >= 1, got {k_max}")
    if k_max > n:
        raise KMaxTooLarge(f"k_max={k_max} exceeds n={n}")
    nbT = np.ascontiguousarray(index.neighbors_excluding_self(k_max - 1).T)
    sq = np.empty((n, k_max))
    sq[:, 0] = y * y
    running = np.zeros(n)
    for m in range(1, k_max):
        running += y[nbT[m - 1]]
        r = y - running / m
        sq[:, m] = r * r
    loo = _sequential_row_sum(sq) / n
    k_star = int(np.argmin(loo)) + 1
    return KSelection(k_star, loo)


def knn_predict_in_sample(index: NeighborIndex, y, k: int) -> np.ndarray:
    """``(y_i + sum of y over the k-1 nearest other units) / k`` for every unit."""
    y = np.asarray(y, dtype=np.float64)
    if not 1 <= k <= index.n:
        raise KOutOfRange(f"k={k} outside 1..{index.n}")
    acc = y.copy()
    if k > 1:
        nbT = np.ascontiguousarray(index.neighbors_excluding_self(k - 1).T)
        for row in nbT:
            acc += y[row]
    return acc / k


def default_k_max(n: int, k_max: int | None = None) -> int:
    if k_max is not None:
        return k_max
    return max(1, min(DEFAULT_K_MAX, n - 1))


@dataclass
class KnnRegressor:
    """Leave-one-out tuned kNN usable as an Aurora regressor.

    ``chosen_k`` records ``k_star`` for each call in order.
    """

    k_max: int | None = None
    dim_threshold: int = DEFAULT_DIM_THRESHOLD
    strategy: str | None = None
    jitter: float | None = None
    seed: int | None = None
    chosen_k: list[int] = field(default_factory=list)

    def __call__(self, features: np.ndarray, response: np.ndarray) -> np.ndarray:
        n = features.shape[0]
        seed = None
        if self.jitter is not None:
            # tie the jitter stream to the training set, not to call order
            seed = [0 if self.seed is None else self.seed, zlib.crc32(response.tobytes())]
        index = knn_index(features, self.dim_threshold, strategy=self.strategy,
                          jitter=self.jitter, seed=seed)
        sel = knn_select_k(index, response, default_k_max(n, self.k_max))
        self.chosen_k.append(sel.k_star)
        return knn_predict_in_sample(index, response, sel.k_star)
