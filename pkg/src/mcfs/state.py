"""Fixed-length state descriptions of a selected feature subset."""

from __future__ import annotations

import weakref

import numpy as np

from .nn import MLP, mse_loss_grad

META_STATS_LEN = 49
LATENT_DIM = 32
AE_HIDDEN = 128

_STAT_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_MEAN_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _seven(matrix: np.ndarray) -> np.ndarray:
    """mean, std, min, 25%, median, 75%, max along the last axis."""
    q = np.percentile(matrix, [25.0, 50.0, 75.0], axis=-1)
    return np.stack([
        matrix.mean(axis=-1),
        matrix.std(axis=-1),
        matrix.min(axis=-1),
        q[0],
        q[1],
        q[2],
        matrix.max(axis=-1),
    ])


def _column_stats(ds) -> np.ndarray:
    stats = _STAT_CACHE.get(ds)
    if stats is None:
        stats = _seven(ds.features.T)  # (7, n_features)
        _STAT_CACHE[ds] = stats
    return stats


def meta_stats(ds, subset) -> np.ndarray:
    """Descriptive-statistics state vector of the selected sub-matrix.

    Seven statistics are taken down each selected column, then the same
    seven are taken across columns of each per-column statistic, giving a
    flat 7 x 7 = 49 vector.  The empty subset maps to all zeros.
    """
    cols = sorted(int(c) for c in set(subset))
    if not cols:
        return np.zeros(META_STATS_LEN)
    if cols[0] < 0 or cols[-1] >= ds.n_features:
        raise ValueError("subset contains out-of-range column ids")
    per_col = _column_stats(ds)[:, cols]     # (7, k)
    return _seven(per_col).T.ravel()         # row-major over column-stat


def _column_means(ds) -> np.ndarray:
    means = _MEAN_CACHE.get(ds)
    if means is None:
        means = ds.features.mean(axis=0)
        _MEAN_CACHE[ds] = means
    return means


def subset_mean_vector(ds, subset) -> np.ndarray:
    """Column means of the selected columns, zero-padded to full width."""
    v = np.zeros(ds.n_features)
    cols = sorted(int(c) for c in set(subset))
    if cols:
        if cols[0] < 0 or cols[-1] >= ds.n_features:
            raise ValueError("subset contains out-of-range column ids")
        v[cols] = _column_means(ds)[cols]
    return v


class Autoencoder:
    """Symmetric reconstruction net whose bottleneck serves as the state.

    Both halves are two ReLU layers (128 wide, 32-dim code); the output
    layer is linear.  ``encode`` reads the post-activation bottleneck.
    """

    def __init__(self, n_features: int, seed: int = 0):
        self.n_features = n_features
        self.net = MLP(
            [n_features, AE_HIDDEN, LATENT_DIM, AE_HIDDEN, n_features],
            seed=seed,
        )

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        _, (pre, acts) = self.net.forward(x)
        latent = acts[2]  # activation after the bottleneck layer
        return latent[0] if latent.shape[0] == 1 else latent

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.net.forward(x)
        return out


def train_autoencoder(ds, seed: int = 0, n_subsets: int = 256,
                      epochs: int = 120, batch: int = 32,
                      lr: float = 0.01):
    """Fit the autoencoder on mean vectors of random subsets of ``ds``.

    Returns the model and the per-epoch mean loss curve.
    """
    root = np.random.SeedSequence(seed)
    init_ss, data_ss, shuffle_ss = root.spawn(3)
    rng = np.random.default_rng(data_ss)
    d = ds.n_features
    means = _column_means(ds)

    masks = rng.random((n_subsets, d)) < rng.uniform(
        0.1, 0.9, size=(n_subsets, 1)
    )
    masks[~masks.any(axis=1), rng.integers(0, d)] = True
    inputs = masks * means[None, :]

    ae = Autoencoder(d, seed=init_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    losses = []
    for _ in range(epochs):
        order = shuffle_rng.permutation(n_subsets)
        epoch_losses = []
        for start in range(0, n_subsets, batch):
            xb = inputs[order[start:start + batch]]
            out, cache = ae.net.forward(xb)
            loss, dout = mse_loss_grad(out, xb)
            grads = ae.net.backward(cache, dout)
            ae.net.adam_step(grads, lr)
            epoch_losses.append(loss)
        losses.append(float(np.mean(epoch_losses)))
    return ae, losses


def autoencode_state(ae: Autoencoder, ds, subset) -> np.ndarray:
    """Bottleneck code of the subset's padded mean vector."""
    if ds.n_features != ae.n_features:
        raise ValueError("autoencoder width does not match the dataset")
    return ae.encode(subset_mean_vector(ds, subset))
