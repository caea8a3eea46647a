"""Histogram mutual information and filter-style feature ranking."""

from __future__ import annotations

import weakref

import numpy as np

MAX_INTEGER_LEVELS = 32
DEFAULT_BINS = 10


def discretize(values: np.ndarray, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Map a numeric column to small integer codes.

    Integer-valued columns with at most MAX_INTEGER_LEVELS distinct values
    are used as-is (each level one code).  Anything else gets equal-frequency
    binning with the requested number of bins; duplicated quantiles collapse,
    so fewer bins may come back.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("discretize expects a 1-d column")
    uniq = np.unique(values)
    if uniq.size <= MAX_INTEGER_LEVELS and np.all(uniq == np.round(uniq)):
        return np.searchsorted(uniq, values).astype(np.int64)
    if bins < 2:
        raise ValueError("need at least two bins")
    qs = np.arange(1, bins) / bins
    edges = np.unique(np.quantile(values, qs))
    return np.searchsorted(edges, values, side="right").astype(np.int64)


def entropy(codes: np.ndarray) -> float:
    """Shannon entropy of a code sequence, in nats."""
    codes = np.asarray(codes, dtype=np.int64)
    counts = np.bincount(codes - codes.min())
    p = counts[counts > 0] / codes.size
    return float(-(p * np.log(p)).sum())


def mutual_information(x: np.ndarray, y: np.ndarray) -> float:
    """Mutual information of two discrete code sequences, in nats.

    Estimated from the empirical joint distribution.  Symmetric, and equals
    the entropy of the column when both arguments are the same sequence.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-d sequences of equal length")
    if x.size == 0:
        raise ValueError("inputs are empty")
    x = x - x.min()
    y = y - y.min()
    nx = int(x.max()) + 1
    ny = int(y.max()) + 1
    joint = np.bincount(x * ny + y, minlength=nx * ny).reshape(nx, ny)
    n = x.size
    pj = joint / n
    px = pj.sum(axis=1)
    py = pj.sum(axis=0)
    mask = pj > 0
    ix, iy = np.nonzero(mask)
    vals = pj[mask]
    mi = float((vals * (np.log(vals) - np.log(px[ix]) - np.log(py[iy]))).sum())
    return max(mi, 0.0)


class _InfoCache:
    __slots__ = ("codes", "label_mi", "pair_mi")

    def __init__(self, d):
        self.codes = [None] * d
        self.label_mi = None
        self.pair_mi = {}


_CACHES: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _cache_for(ds) -> _InfoCache:
    cache = _CACHES.get(ds)
    if cache is None:
        cache = _InfoCache(ds.n_features)
        _CACHES[ds] = cache
    return cache


def _codes(ds, col: int) -> np.ndarray:
    cache = _cache_for(ds)
    if cache.codes[col] is None:
        cache.codes[col] = discretize(ds.features[:, col])
    return cache.codes[col]


def feature_label_mi(ds) -> np.ndarray:
    """Per-column mutual information with the labels (cached per dataset)."""
    cache = _cache_for(ds)
    if cache.label_mi is None:
        cache.label_mi = np.array(
            [mutual_information(_codes(ds, j), ds.labels)
             for j in range(ds.n_features)]
        )
    return cache.label_mi


def pairwise_mi(ds, i: int, j: int) -> float:
    """Mutual information between two feature columns (cached, symmetric)."""
    if i > j:
        i, j = j, i
    cache = _cache_for(ds)
    key = (i, j)
    if key not in cache.pair_mi:
        cache.pair_mi[key] = mutual_information(_codes(ds, i), _codes(ds, j))
    return cache.pair_mi[key]


def kbest_select(ds, k: int | None = None) -> list[int]:
    """Indices of the k columns with highest label MI, ties to lower index.

    Default k is half the feature count (rounded down, at least one).
    """
    if k is None:
        k = max(1, ds.n_features // 2)
    if not 1 <= k <= ds.n_features:
        raise ValueError(f"k must be in [1, {ds.n_features}], got {k}")
    mi = feature_label_mi(ds)
    order = np.argsort(-mi, kind="stable")
    return sorted(int(i) for i in order[:k])
