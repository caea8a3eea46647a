"""State vectors: descriptive statistics and the autoencoder bottleneck."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mcfs import data, state


def toy_dataset(n=60, d=6, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d)) * np.arange(1, d + 1)
    y = rng.integers(0, 2, size=n)
    y[:2] = [0, 1]
    return data.Dataset(x, y, [f"f{i}" for i in range(d)], 2)


class TestMetaStats:
    def test_length_and_finiteness(self):
        ds = toy_dataset()
        v = state.meta_stats(ds, {0, 2, 4})
        assert v.shape == (49,)
        assert np.isfinite(v).all()

    def test_empty_subset_all_zeros(self):
        ds = toy_dataset()
        assert_allclose(state.meta_stats(ds, frozenset()), np.zeros(49))

    def test_single_column_structure(self):
        ds = toy_dataset()
        col = ds.features[:, 3]
        v = state.meta_stats(ds, {3})
        stats = [
            col.mean(), col.std(), col.min(),
            np.percentile(col, 25), np.percentile(col, 50),
            np.percentile(col, 75), col.max(),
        ]
        for i, s in enumerate(stats):
            block = v[i * 7:(i + 1) * 7]
            # across a single column: spread collapses, location equals s
            assert_allclose(block[0], s, rtol=1e-12)
            assert_allclose(block[1], 0.0, atol=1e-15)
            assert_allclose(block[2:], s, rtol=1e-12)

    def test_differs_between_subsets(self):
        ds = toy_dataset()
        a = state.meta_stats(ds, {0, 1})
        b = state.meta_stats(ds, {4, 5})
        assert not np.allclose(a, b)

    def test_subset_order_irrelevant(self):
        ds = toy_dataset()
        assert_allclose(
            state.meta_stats(ds, [2, 0, 5]), state.meta_stats(ds, [5, 2, 0])
        )

    def test_rejects_out_of_range(self):
        ds = toy_dataset(d=4)
        with pytest.raises(ValueError):
            state.meta_stats(ds, {7})


class TestSubsetMeanVector:
    def test_zero_padding(self):
        ds = toy_dataset(d=5)
        v = state.subset_mean_vector(ds, {1, 3})
        means = ds.features.mean(axis=0)
        assert v.shape == (5,)
        assert_allclose(v[[1, 3]], means[[1, 3]])
        assert_allclose(v[[0, 2, 4]], 0.0)

    def test_empty_all_zero(self):
        ds = toy_dataset(d=5)
        assert_allclose(state.subset_mean_vector(ds, set()), np.zeros(5))


class TestAutoencoder:
    def test_training_reduces_loss(self):
        ds = toy_dataset(d=8, seed=2)
        ae, losses = state.train_autoencoder(ds, seed=0, epochs=40)
        assert losses[-1] < losses[0]

    def test_latent_width(self):
        ds = toy_dataset(d=8, seed=3)
        ae, _ = state.train_autoencoder(ds, seed=1, epochs=5)
        z = state.autoencode_state(ae, ds, {0, 3, 5})
        assert z.shape == (32,)
        assert np.isfinite(z).all()
        assert np.all(z >= 0.0)  # bottleneck sits behind a ReLU

    def test_encoding_deterministic(self):
        ds = toy_dataset(d=6, seed=4)
        ae1, _ = state.train_autoencoder(ds, seed=9, epochs=10)
        ae2, _ = state.train_autoencoder(ds, seed=9, epochs=10)
        z1 = state.autoencode_state(ae1, ds, {1, 2})
        z2 = state.autoencode_state(ae2, ds, {1, 2})
        assert_allclose(z1, z2)

    def test_distinguishes_subsets(self):
        ds = toy_dataset(d=8, seed=5)
        ae, _ = state.train_autoencoder(ds, seed=2, epochs=40)
        z_a = state.autoencode_state(ae, ds, {0, 1})
        z_b = state.autoencode_state(ae, ds, {6, 7})
        assert not np.allclose(z_a, z_b)
