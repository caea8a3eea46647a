"""Random forest of CART trees on binned columns, plus test metrics."""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

MAX_BINS = 32

# level-wise growth touches units = trees * rows at once; batches of trees
# keep the per-level scratch arrays bounded
_UNIT_BUDGET = 60_000


@dataclass(eq=False)
class Tree:
    """One CART tree in structure-of-arrays form.

    ``feature[i]`` is the original column id tested at node i, or -1 for a
    leaf.  Rows with column value <= ``threshold[i]`` (equivalently binned
    code <= ``split_bin[i]``) go to ``left[i]``.  ``hist`` keeps the class
    histogram of every node; a leaf votes for its histogram argmax.
    """

    feature: np.ndarray
    split_bin: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray
    hist: np.ndarray


@dataclass(eq=False)
class ForestModel:
    trees: list
    subset: tuple
    n_classes: int
    n_trees: int
    seed: int
    edges: dict


@dataclass(eq=False)
class MetricReport:
    accuracy: float
    f1_macro: float
    f1_micro: float
    confusion: np.ndarray
    n_samples: int

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_macro": self.f1_macro,
            "f1_micro": self.f1_micro,
            "confusion": self.confusion.tolist(),
            "n_samples": self.n_samples,
        }


class _Bins:
    """Per-dataset binned view: quantile edges and uint8 codes per column."""

    __slots__ = ("edges", "codes", "nbins", "done")

    def __init__(self, n, d):
        self.edges = [None] * d
        self.codes = np.zeros((n, d), dtype=np.uint8)
        self.nbins = np.ones(d, dtype=np.int64)
        self.done = np.zeros(d, dtype=bool)


_BINS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _column_edges(values: np.ndarray) -> np.ndarray:
    """Candidate split values: all midpoints when the column has few levels,
    interior quantiles otherwise.  A code is the count of edges < value, so
    code <= b exactly when value <= edges[b]."""
    uniq = np.unique(values)
    if uniq.size <= MAX_BINS:
        return (uniq[:-1] + uniq[1:]) / 2.0
    qs = np.arange(1, MAX_BINS) / MAX_BINS
    return np.unique(np.quantile(values, qs))


def _bins_for(ds) -> _Bins:
    bins = _BINS.get(ds)
    if bins is None:
        bins = _Bins(ds.n_samples, ds.n_features)
        _BINS[ds] = bins
    return bins


def _ensure_columns(ds, cols) -> _Bins:
    bins = _bins_for(ds)
    for c in cols:
        if not bins.done[c]:
            edges = _column_edges(ds.features[:, c])
            bins.edges[c] = edges
            bins.nbins[c] = edges.size + 1
            bins.codes[:, c] = np.searchsorted(
                edges, ds.features[:, c], side="left"
            ).astype(np.uint8)
            bins.done[c] = True
    return bins


class _TreeScratch:
    """Growing node arrays for one tree; local node ids are append order."""

    __slots__ = ("feature", "split_bin", "left", "right", "leaf_class", "hist")

    def __init__(self):
        self.feature = []
        self.split_bin = []
        self.left = []
        self.right = []
        self.leaf_class = []
        self.hist = []

    def add_node(self):
        self.feature.append(-1)
        self.split_bin.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf_class.append(-1)
        self.hist.append(None)
        return len(self.feature) - 1


def _grow_batch(codes_sub, y, n_classes, cols, nbins_sub, rngs,
                max_depth, min_leaf):
    """Grow one bootstrap tree per rng, all trees level by level at once.

    Every per-tree random draw comes from that tree's own generator in a
    fixed order (bootstrap, then one candidate draw per level that has
    splittable nodes), so the result does not depend on how trees are
    batched together.
    """
    T = len(rngs)
    n, k = codes_sub.shape
    m = max(1, math.isqrt(k))
    B = int(nbins_sub.max())
    C = n_classes

    unit_row = np.concatenate(
        [rng.integers(0, n, size=n) for rng in rngs]
    )
    y_unit = y[unit_row]

    scratch = [_TreeScratch() for _ in range(T)]
    for s in scratch:
        s.add_node()

    # active node table; units point into it by slot
    act_tree = np.arange(T, dtype=np.int64)
    act_node = np.zeros(T, dtype=np.int64)
    unit_slot = np.repeat(np.arange(T, dtype=np.int64), n)
    alive = np.ones(T * n, dtype=bool)

    for depth in range(max_depth + 1):
        n_act = act_tree.size
        if n_act == 0:
            break
        u_slot = unit_slot[alive]
        u_y = y_unit[alive]
        hist = np.bincount(
            u_slot * C + u_y, minlength=n_act * C
        ).reshape(n_act, C)
        sizes = hist.sum(axis=1)

        is_leaf = (
            (depth >= max_depth)
            | (sizes < 2 * min_leaf)
            | (hist.max(axis=1) == sizes)
        )
        if B <= 1:
            is_leaf[:] = True

        split_slots = np.flatnonzero(~is_leaf)
        chosen_col = None
        if split_slots.size:
            # per-tree candidate draws, in this level's slot order
            cand = np.empty((split_slots.size, m), dtype=np.int64)
            sp_tree = act_tree[split_slots]
            for t in np.unique(sp_tree):
                sel = np.flatnonzero(sp_tree == t)
                noise = rngs[t].random((sel.size, k))
                cand[sel] = np.argsort(noise, axis=1, kind="stable")[:, :m]

            slot_rank = np.full(n_act, -1, dtype=np.int64)
            slot_rank[split_slots] = np.arange(split_slots.size)
            u_rank = slot_rank[u_slot]
            live = u_rank >= 0
            rows_l = unit_row[alive][live]
            y_l = u_y[live]
            rank_l = u_rank[live]
            cand_l = cand[rank_l]
            code_l = codes_sub[rows_l[:, None], cand_l].astype(np.int64)

            S = split_slots.size
            flat = ((rank_l[:, None] * m + np.arange(m)) * B + code_l) * C
            jh = np.bincount(
                (flat + y_l[:, None]).ravel(), minlength=S * m * B * C
            ).reshape(S, m, B, C)
            cum = np.cumsum(jh, axis=2)[:, :, :-1, :]
            nl = cum.sum(axis=3)
            nr = sizes[split_slots][:, None, None] - nl
            left_sq = np.square(cum).sum(axis=3)
            tot = hist[split_slots][:, None, None, :]
            right_sq = np.square(tot - cum).sum(axis=3)
            with np.errstate(divide="ignore", invalid="ignore"):
                score = (nl - left_sq / nl) + (nr - right_sq / nr)
            score[(nl < min_leaf) | (nr < min_leaf)] = np.inf

            flat_best = np.argmin(score.reshape(S, -1), axis=1)
            j_best, b_best = np.divmod(flat_best, B - 1)
            best = score.reshape(S, -1)[np.arange(S), flat_best]
            sz = sizes[split_slots]
            parent = sz - np.square(hist[split_slots]).sum(axis=1) / sz
            no_gain = ~np.isfinite(best) | (best >= parent - 1e-12)
            if no_gain.any():
                is_leaf[split_slots[no_gain]] = True
                keep = ~no_gain
                split_slots = split_slots[keep]
                cand = cand[keep]
                j_best = j_best[keep]
                b_best = b_best[keep]
            chosen_col = cand[np.arange(split_slots.size), j_best]

        # record leaves and retire their units
        for s_idx in np.flatnonzero(is_leaf):
            t = act_tree[s_idx]
            node = act_node[s_idx]
            h = hist[s_idx]
            scratch[t].leaf_class[node] = int(np.argmax(h))
            scratch[t].hist[node] = h

        if split_slots.size == 0:
            break

        # record splits and create children (left then right, slot order)
        new_tree = np.empty(2 * split_slots.size, dtype=np.int64)
        new_node = np.empty(2 * split_slots.size, dtype=np.int64)
        slot_rank = np.full(n_act, -1, dtype=np.int64)
        slot_rank[split_slots] = np.arange(split_slots.size)
        for i, s_idx in enumerate(split_slots):
            t = act_tree[s_idx]
            node = act_node[s_idx]
            tree = scratch[t]
            tree.feature[node] = int(cols[chosen_col[i]])
            tree.split_bin[node] = int(b_best[i])
            tree.hist[node] = hist[s_idx]
            lid = tree.add_node()
            rid = tree.add_node()
            tree.left[node] = lid
            tree.right[node] = rid
            new_tree[2 * i] = t
            new_tree[2 * i + 1] = t
            new_node[2 * i] = lid
            new_node[2 * i + 1] = rid

        # route units of split nodes to their children; retire the rest
        idx_alive = np.flatnonzero(alive)
        rk_alive = slot_rank[unit_slot[idx_alive]]
        live = rk_alive >= 0
        idx = idx_alive[live]
        rk = rk_alive[live]
        code = codes_sub[unit_row[idx], chosen_col[rk]].astype(np.int64)
        go_left = code <= b_best[rk]
        unit_slot[idx] = np.where(go_left, 2 * rk, 2 * rk + 1)
        alive[idx_alive[~live]] = False

        act_tree = new_tree
        act_node = new_node

    return scratch


def _finish_tree(tree: _TreeScratch, edges, n_classes) -> Tree:
    feat = np.array(tree.feature, dtype=np.int64)
    sb = np.array(tree.split_bin, dtype=np.int64)
    thr = np.full(feat.size, np.nan)
    inner = feat >= 0
    thr[inner] = [edges[int(f)][b] for f, b in zip(feat[inner], sb[inner])]
    hist = np.zeros((feat.size, n_classes), dtype=np.int64)
    for i, h in enumerate(tree.hist):
        hist[i] = h
    return Tree(
        feature=feat,
        split_bin=sb,
        threshold=thr,
        left=np.array(tree.left, dtype=np.int64),
        right=np.array(tree.right, dtype=np.int64),
        leaf_class=np.array(tree.leaf_class, dtype=np.int64),
        hist=hist,
    )


def train_forest(train, subset, n_trees: int = 100, seed: int = 0,
                 max_depth: int = 12, min_leaf: int = 2) -> ForestModel:
    """Fit a bagged CART forest on the given feature columns.

    Each tree draws its own bootstrap resample and rng stream derived from
    ``seed`` and considers sqrt(|subset|) random candidate columns per
    split (Gini).  Training on a single-class fold yields constant trees.
    """
    cols = np.array(sorted(int(c) for c in set(subset)), dtype=np.int64)
    if cols.size == 0:
        raise ValueError("cannot train a forest on an empty feature subset")
    if cols[0] < 0 or cols[-1] >= train.n_features:
        raise ValueError("subset contains out-of-range column ids")
    if n_trees < 1:
        raise ValueError("n_trees must be positive")
    if max_depth < 1 or min_leaf < 1:
        raise ValueError("max_depth and min_leaf must be positive")

    bins = _ensure_columns(train, cols)
    codes_sub = np.ascontiguousarray(bins.codes[:, cols])
    nbins_sub = bins.nbins[cols]
    edges = {int(c): bins.edges[c] for c in cols}

    streams = np.random.SeedSequence(seed).spawn(n_trees)
    batch = max(1, _UNIT_BUDGET // max(1, train.n_samples))
    trees = []
    for start in range(0, n_trees, batch):
        rngs = [np.random.default_rng(s) for s in streams[start:start + batch]]
        scratch = _grow_batch(
            codes_sub, train.labels, train.n_classes,
            cols, nbins_sub, rngs, max_depth, min_leaf,
        )
        trees.extend(
            _finish_tree(t, edges, train.n_classes) for t in scratch
        )
    return ForestModel(
        trees=trees,
        subset=tuple(int(c) for c in cols),
        n_classes=train.n_classes,
        n_trees=n_trees,
        seed=seed,
        edges=edges,
    )


def _tree_predict(tree: Tree, codes: np.ndarray) -> np.ndarray:
    n = codes.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    while True:
        feat = tree.feature[node]
        active = feat >= 0
        if not active.any():
            break
        cv = codes[rows[active], feat[active]]
        go_left = cv <= tree.split_bin[node[active]]
        node[active] = np.where(
            go_left, tree.left[node[active]], tree.right[node[active]]
        )
    return tree.leaf_class[node]


def predict(model: ForestModel, ds) -> np.ndarray:
    """Majority-vote class per row; vote ties resolve to the smallest id."""
    cols = np.array(model.subset, dtype=np.int64)
    if cols[-1] >= ds.n_features:
        raise ValueError("dataset has fewer columns than the model subset")
    codes = np.zeros((ds.n_samples, int(cols[-1]) + 1), dtype=np.uint8)
    for c in cols:
        codes[:, c] = np.searchsorted(
            model.edges[int(c)], ds.features[:, c], side="left"
        ).astype(np.uint8)
    votes = np.zeros((ds.n_samples, model.n_classes), dtype=np.int64)
    rows = np.arange(ds.n_samples)
    for tree in model.trees:
        pred = _tree_predict(tree, codes)
        votes[rows, pred] += 1
    return np.argmax(votes, axis=1)


def evaluate(model: ForestModel, test, subset) -> MetricReport:
    """Score the model on a held-out fold; subset must match the model's."""
    want = tuple(sorted(int(c) for c in set(subset)))
    if want != model.subset:
        raise ValueError(
            f"subset {want} does not match the trained subset {model.subset}"
        )
    pred = predict(model, test)
    cm = np.zeros((model.n_classes, model.n_classes), dtype=np.int64)
    np.add.at(cm, (test.labels, pred), 1)
    return metrics_from_confusion(cm)


def metrics_from_confusion(cm: np.ndarray) -> MetricReport:
    """Accuracy plus macro/micro F1 from a (true x predicted) count matrix.

    Macro-F1 averages per-class F1 over classes that occur in either the
    labels or the predictions.  With one label per row, micro-F1 equals
    accuracy.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    accuracy = float(tp.sum() / total)
    seen = (support + predicted) > 0
    denom = 2 * tp + (predicted - tp) + (support - tp)
    f1 = np.zeros(cm.shape[0])
    nz = seen & (denom > 0)
    f1[nz] = 2 * tp[nz] / denom[nz]
    f1_macro = float(f1[seen].mean())
    return MetricReport(
        accuracy=accuracy,
        f1_macro=f1_macro,
        f1_micro=accuracy,
        confusion=cm,
        n_samples=int(total),
    )
