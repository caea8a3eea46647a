"""Acceptance gate: nine end-to-end checks at their stated tolerances.

Each test prints a single PASS/FAIL verdict line (shown with -s, or in the
captured output when a check fails).  Long runs are cached and shared
between criteria so the gate stays within its runtime budgets.
"""

import functools
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from mcfs import cli, data, engine, nn, qlearner, rewards


def verdict(num, name, ok, detail=""):
    line = f"ACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" [{detail}]"
    print(line)
    assert ok, line


def batch_episode(importances):
    """One-step-per-sample scaffold for weight recalculation checks."""
    steps = [
        engine.EpisodeStep(
            t=0, feature=0, state=np.zeros(1), action=1, reward=0.0,
            raw_reward=0.0, target_prob=0.5, behavior_prob=0.5,
            importance=float(w),
        )
        for w in importances
    ]
    return engine.Episode(
        steps=steps, traversal_order=(0,), stopped_early=False,
        final_subset=frozenset(), final_eval=0.0,
    )


class TestC1ShapingInvariance:
    def test_shaping_invariance(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(101)
        coeffs = (0.5, 1.0, 2.0)
        worst = 0.0
        agree = True
        for trial in range(100):
            s = int(rng.integers(2, 9))
            mdp = rewards.TabularMDP(
                rng.normal(size=(s, 2)),
                rng.integers(0, s, size=(s, 2)),
                0.9,
            )
            potential = rng.normal(size=s)
            report = rewards.check_invariance(
                mdp, potential, coeffs[trial % 3]
            )
            worst = max(worst, report.max_offset_error)
            agree = agree and report.policies_agree
        dt = time.perf_counter() - t0
        verdict(
            1, "shaping invariance", worst <= 1e-6 and agree and dt < 10.0,
            f"max offset {worst:.2e}, agree={agree}, {dt:.1f}s",
        )


class TestC2IncrementalWeights:
    def test_incremental_matches_direct_product(self):
        rng = np.random.default_rng(202)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(1, 51))
            pi = rng.uniform(0.01, 1.0, size=n)
            b = rng.uniform(0.01, 1.0, size=n)
            running = 1.0
            for t in range(n):
                running = engine.incremental_weight(running, pi[t], b[t])
                direct = float(np.prod(pi[:t + 1] / b[:t + 1]))
                worst = max(worst, abs(running - direct) / abs(direct))
        verdict(
            2, "incremental importance weights", worst <= 1e-9,
            f"worst relative error {worst:.2e}",
        )


class TestC3RejectionControl:
    def test_unbiased_bandit_estimator(self):
        t0 = time.perf_counter()
        f_vals = np.array([1.0, 3.0])
        pi = np.array([0.9, 0.1])
        b = np.array([0.5, 0.5])
        exact = float((pi * f_vals).sum())
        ok = True
        details = []
        for k, v in enumerate((0.3, 0.6, 0.9)):
            rng = np.random.default_rng(300 + k)
            n = 100_000
            actions = rng.integers(0, 2, size=n)
            rho = pi[actions] / b[actions]
            surv = np.array(
                [engine.survival_probability(r, v) for r in rho]
            )
            stop = np.array([engine.stop_probability(r, v) for r in rho])
            assert np.allclose(surv + stop, 1.0, rtol=1e-12)
            keep = rng.random(n) < surv
            p_hat = float(surv.mean())

            weights = engine.recalc_weights(
                batch_episode(rho[keep]), v, "rejection_control",
                survival_mean=p_hat,
            )
            # batching one-step episodes must agree with per-episode calls
            kept_idx = np.flatnonzero(keep)
            for j in range(0, kept_idx.size, max(1, kept_idx.size // 25)):
                single = engine.recalc_weights(
                    batch_episode([rho[kept_idx[j]]]), v,
                    "rejection_control", survival_mean=p_hat,
                )[0]
                assert abs(single - weights[j]) <= 1e-12 * abs(single)

            contrib = np.zeros(n)
            contrib[keep] = weights * f_vals[actions[keep]] / p_hat
            est = float(contrib.mean())
            se = float(contrib.std(ddof=1) / np.sqrt(n))
            ok = ok and abs(est - exact) <= 3 * se
            details.append(f"v={v}: {est:.4f} (se {se:.4f})")
        dt = time.perf_counter() - t0
        verdict(
            3, "rejection-control unbiasedness", ok and dt < 30.0,
            f"exact {exact}, " + ", ".join(details) + f", {dt:.1f}s",
        )


class TestC4GradientCorrectness:
    def test_analytic_matches_finite_differences(self):
        rng = np.random.default_rng(404)
        worst = 0.0
        for trial in range(50):
            depth = int(rng.integers(2, 4))
            sizes = [int(rng.integers(2, 6)) for _ in range(depth + 1)]
            net = nn.MLP(sizes, seed=trial)
            # zero-init biases can park ReLU pre-activations exactly on
            # the kink (dead upstream layer), where central differences
            # and the subgradient legitimately disagree; randomizing all
            # parameters keeps the finite-difference check well defined
            net.set_flat(rng.normal(size=net.get_flat().size))
            batch = int(rng.integers(1, 6))
            x = rng.normal(size=(batch, sizes[0]))
            target = rng.normal(size=(batch, sizes[-1]))

            out, cache = net.forward(x)
            _, dout = nn.mse_loss_grad(out, target)
            flat = net.flat_grads(net.backward(cache, dout))

            base = net.get_flat()
            fd = np.empty_like(base)
            h = 1e-6
            for i in range(base.size):
                probe = base.copy()
                probe[i] = base[i] + h
                net.set_flat(probe)
                lo_p, _ = nn.mse_loss_grad(net.forward(x)[0], target)
                probe[i] = base[i] - h
                net.set_flat(probe)
                lo_m, _ = nn.mse_loss_grad(net.forward(x)[0], target)
                fd[i] = (lo_p - lo_m) / (2 * h)
            net.set_flat(base)

            rel = np.abs(flat - fd) / np.maximum(1e-8,
                                                 np.abs(flat) + np.abs(fd))
            worst = max(worst, float(rel.max()))
        verdict(
            4, "analytic gradients", worst <= 1e-4,
            f"worst relative error {worst:.2e} over 50 networks",
        )


@functools.lru_cache(maxsize=None)
def benchmark_payload(seed):
    """Full-scale recovery run: 500x20 with 5 informative columns."""
    ds, informative = data.synth_classification(500, 20, 5, seed=seed)
    meta = {
        "source": "synthetic(500,20,5)",
        "informative": sorted(informative),
        "n_samples": 500,
        "n_features": 20,
        "n_classes": ds.n_classes,
        "train_ratio": cli.TRAIN_RATIO,
    }
    return cli._execute_run(ds, meta, engine.TrainConfig(seed=seed))


@functools.lru_cache(maxsize=None)
def paired_payload(seed, stop_threshold, behavior):
    """Paired-study run sharing one generator per seed.

    18 features keeps the subset space large enough that undirected
    behavior cannot cover it within the episode budget, so policy
    quality shows up in the final eval instead of saturating.
    """
    ds, informative = data.synth_classification(300, 18, 4, seed=seed)
    meta = {
        "source": "synthetic(300,18,4)",
        "informative": sorted(informative),
        "n_samples": 300,
        "n_features": 18,
        "n_classes": ds.n_classes,
        "train_ratio": cli.TRAIN_RATIO,
    }
    config = engine.TrainConfig(
        episodes=120, max_global_steps=2160, stop_threshold=stop_threshold,
        behavior_mode=behavior, seed=seed,
    )
    return cli._execute_run(ds, meta, config)


SEEDS = (0, 1, 2, 3, 4)


class TestC5EndToEndRecovery:
    def test_selected_subset_recovers_signal(self):
        t0 = time.perf_counter()
        sel, allf, rand, overlap = [], [], [], []
        for seed in SEEDS:
            p = benchmark_payload(seed)
            base = p["baselines"]
            sel.append(base["selected"]["metrics"]["accuracy"])
            allf.append(base["all_features"]["metrics"]["accuracy"])
            rand.append(base["random"]["metrics"]["accuracy"])
            overlap.append(len(
                set(p["best_subset"]["indices"])
                & set(p["dataset"]["informative"])
            ))
        dt = time.perf_counter() - t0
        med_sel = float(np.median(sel))
        med_all = float(np.median(allf))
        med_rand = float(np.median(rand))
        med_overlap = float(np.median(overlap))
        ok = (
            med_sel >= med_all - 0.01
            and med_sel >= med_rand
            and med_overlap >= 3
            and dt <= 300.0
        )
        verdict(
            5, "end-to-end recovery", ok,
            f"selected {med_sel:.3f} vs all {med_all:.3f} / random "
            f"{med_rand:.3f}, informative overlap {med_overlap}, {dt:.0f}s",
        )


class TestC6EarlyStoppingEfficiency:
    def test_stopping_shortens_episodes_without_losing_eval(self):
        len_stop, len_plain, eval_stop, eval_plain = [], [], [], []
        for seed in SEEDS:
            p_stop = paired_payload(seed, 0.5, "greedy")
            p_plain = paired_payload(seed, 0.0, "greedy")
            len_stop.append(np.mean([c["length"]
                                     for c in p_stop["curves"]]))
            len_plain.append(np.mean([c["length"]
                                      for c in p_plain["curves"]]))
            eval_stop.append(p_stop["best_eval"])
            eval_plain.append(p_plain["best_eval"])
        mean_stop = float(np.mean(len_stop))
        mean_plain = float(np.mean(len_plain))
        med_stop = float(np.median(eval_stop))
        med_plain = float(np.median(eval_plain))
        ok = mean_stop < mean_plain and med_stop >= med_plain - 0.01
        verdict(
            6, "early-stopping efficiency", ok,
            f"mean length {mean_stop:.2f} vs {mean_plain:.2f}, "
            f"median eval {med_stop:.3f} vs {med_plain:.3f}",
        )


class TestC7BehaviorPolicyStudy:
    def test_greedy_behavior_not_worse_than_random(self):
        greedy = [paired_payload(s, 0.5, "greedy")["best_eval"]
                  for s in SEEDS]
        random_ = [paired_payload(s, 0.5, "random")["best_eval"]
                   for s in SEEDS]
        med_g = float(np.median(greedy))
        med_r = float(np.median(random_))
        verdict(
            7, "behavior-policy study", med_g >= med_r,
            f"greedy median {med_g:.3f} vs random {med_r:.3f}",
        )


def find_spambase():
    candidates = []
    env = os.environ.get("MCFS_SPAMBASE")
    if env:
        candidates.append(Path(env))
    here = Path(__file__).resolve().parent.parent
    candidates += [
        here / "data" / "spambase.csv",
        here / "data" / "spambase.data",
    ]
    for path in candidates:
        if path.is_file():
            return path
    return None


class TestC8OptionalDataset:
    def test_spambase_holdout_accuracy(self):
        path = find_spambase()
        if path is None:
            print("ACCEPTANCE 8 spambase holdout: SKIP (dataset not found)")
            pytest.skip("spambase dataset not available")
        raw = np.loadtxt(path, delimiter=",")
        x, y = raw[:, :-1], raw[:, -1].astype(np.int64)
        ds = data.Dataset(
            x, y, [f"f{i}" for i in range(x.shape[1])], int(y.max()) + 1
        )
        meta = {
            "source": str(path),
            "n_samples": ds.n_samples,
            "n_features": ds.n_features,
            "n_classes": ds.n_classes,
            "train_ratio": cli.TRAIN_RATIO,
        }
        config = engine.TrainConfig(episodes=500, seed=0)
        payload = cli._execute_run(ds, meta, config)
        acc = payload["test_metrics"]["accuracy"]
        verdict(8, "spambase holdout", acc >= 0.90, f"accuracy {acc:.4f}")


class TestC9EngineInvariants:
    def test_invariants_suite(self, monkeypatch):
        checks = {}

        # best eval always equals the curve maximum
        p = benchmark_payload(0)
        checks["best-eval matches curves"] = (
            p["best_eval"] == max(c["eval"] for c in p["curves"])
        )

        # policy distributions are normalized; behavior splits epsilon
        rng = np.random.default_rng(909)
        net = qlearner.QNetwork(6, seed=9)
        norm_ok = True
        split_ok = True
        for _ in range(100):
            s = rng.normal(size=6)
            probs = qlearner.target_policy(net, s)
            norm_ok = norm_ok and abs(float(probs.sum()) - 1.0) <= 1e-12
            _, bp = qlearner.behavior_policy(net, s, 0.1, rng)
            split_ok = split_ok and bp in (0.9, 0.1)
        checks["target policy normalized"] = norm_ok
        checks["behavior splits epsilon"] = split_ok

        # replay memory never exceeds its capacity during training
        sizes = []

        class SpyMemory(qlearner.ReplayMemory):
            def push(self, *args):
                super().push(*args)
                sizes.append(len(self))

        monkeypatch.setattr(engine.qlearner, "ReplayMemory", SpyMemory)
        ds, _ = data.synth_classification(120, 8, 3, seed=11)
        split = data.split_dataset(ds, 0.8, seed=11)
        config = engine.TrainConfig(
            episodes=60, max_global_steps=400, eval_trees=5, seed=11
        )
        engine.train(split, config)
        monkeypatch.undo()
        checks["replay capacity respected"] = (
            len(sizes) > 200 and max(sizes) <= 200
        )

        # repeated runs are identical apart from wall-time fields
        def stripped(payload):
            slim = json.loads(json.dumps(payload))
            slim.pop("total_wall_ms")
            for c in slim["curves"]:
                c.pop("wall_ms")
            return json.dumps(slim, sort_keys=True)

        ds2, _ = data.synth_classification(100, 6, 2, seed=12)
        meta = {
            "source": "synthetic(100,6,2)",
            "n_samples": 100, "n_features": 6, "n_classes": ds2.n_classes,
            "train_ratio": cli.TRAIN_RATIO,
        }
        cfg = engine.TrainConfig(episodes=10, max_global_steps=100, seed=12)
        a = cli._execute_run(ds2, meta, cfg)
        b = cli._execute_run(ds2, meta, cfg)
        checks["determinism per seed"] = stripped(a) == stripped(b)

        failed = [name for name, good in checks.items() if not good]
        verdict(
            9, "engine invariants", not failed,
            "all checks hold" if not failed else "failed: "
            + ", ".join(failed),
        )
