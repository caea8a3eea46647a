"""Subset rewards, advice shaping, and a tabular control oracle."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import forest
from .info import feature_label_mi, pairwise_mi

UTILITY_MODES = ("rv", "rd", "rvrd")


@dataclass(frozen=True)
class RewardWeights:
    """Mixing weights for accuracy, relevance, and redundancy terms."""

    w_acc: float = 1.0
    w_rv: float = 0.1
    w_rd: float = 0.1

    def __post_init__(self):
        if self.w_acc < 0 or self.w_rv < 0 or self.w_rd < 0:
            raise ValueError("reward weights must be non-negative")
        if self.w_acc == self.w_rv == self.w_rd == 0:
            raise ValueError("at least one reward weight must be positive")


def relevance(subset, ds) -> float:
    """Mean mutual information between selected columns and the labels."""
    cols = sorted(int(c) for c in set(subset))
    if not cols:
        return 0.0
    mi = feature_label_mi(ds)
    return float(mi[cols].mean())


def redundancy(subset, ds) -> float:
    """Mean pairwise mutual information inside the subset; 0 below 2 columns."""
    cols = sorted(int(c) for c in set(subset))
    if len(cols) < 2:
        return 0.0
    total = 0.0
    pairs = 0
    for i, a in enumerate(cols):
        for b in cols[i + 1:]:
            total += pairwise_mi(ds, a, b)
            pairs += 1
    return total / pairs


def utility(subset, ds, mode: str = "rvrd") -> float:
    """Advice potential of a subset: relevance minus redundancy by default."""
    if mode not in UTILITY_MODES:
        raise ValueError(f"utility mode must be one of {UTILITY_MODES}")
    if mode == "rv":
        return relevance(subset, ds)
    if mode == "rd":
        return redundancy(subset, ds)
    return relevance(subset, ds) - redundancy(subset, ds)


def _subset_seed(seed: int, cols) -> np.random.SeedSequence:
    tag = zlib.crc32(np.asarray(sorted(cols), dtype=np.int64).tobytes())
    return np.random.SeedSequence(entropy=[seed & 0xFFFFFFFF, tag])


def eval_reward(subset, split, weights: RewardWeights, seed: int,
                n_trees: int = 100, max_depth: int = 12,
                min_leaf: int = 2) -> float:
    """Score a subset: held-out forest accuracy plus information terms.

    The forest trains on the split's train fold and scores on its test
    fold; relevance and redundancy come from the train fold only.  The
    forest seed mixes in the subset so caching never depends on call
    order.  The empty subset scores 0.
    """
    cols = sorted(int(c) for c in set(subset))
    if not cols:
        return 0.0
    acc = 0.0
    if weights.w_acc > 0:
        sub_seed = _subset_seed(seed, cols)
        model = forest.train_forest(
            split.train, cols, n_trees=n_trees,
            seed=sub_seed.generate_state(1)[0],
            max_depth=max_depth, min_leaf=min_leaf,
        )
        acc = forest.evaluate(model, split.test, cols).accuracy
    rv = relevance(cols, split.train) if weights.w_rv else 0.0
    rd = redundancy(cols, split.train) if weights.w_rd else 0.0
    return weights.w_acc * acc + weights.w_rv * rv - weights.w_rd * rd


def shaped_reward(reward: float, u_now: float, u_next: float,
                  gamma: float, coeff: float) -> float:
    """Potential-based advice: add coeff * (gamma * u_next - u_now)."""
    return reward + coeff * (gamma * u_next - u_now)


@dataclass(eq=False)
class TabularMDP:
    """Finite deterministic MDP: reward and successor tables per (s, a)."""

    rewards: np.ndarray      # (n_states, n_actions)
    next_state: np.ndarray   # (n_states, n_actions) int
    gamma: float

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.next_state = np.asarray(self.next_state, dtype=np.int64)
        if self.rewards.ndim != 2 or self.rewards.shape != self.next_state.shape:
            raise ValueError("reward and successor tables must match (S, A)")
        s = self.rewards.shape[0]
        if self.next_state.min() < 0 or self.next_state.max() >= s:
            raise ValueError("successor states out of range")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]


def value_iteration(mdp: TabularMDP, tol: float = 1e-12,
                    max_iter: int = 100_000) -> np.ndarray:
    """Optimal Q table by fixed-point iteration to sup-norm residual tol."""
    q = np.zeros_like(mdp.rewards)
    for _ in range(max_iter):
        v = q.max(axis=1)
        nq = mdp.rewards + mdp.gamma * v[mdp.next_state]
        if np.abs(nq - q).max() <= tol:
            return nq
        q = nq
    raise RuntimeError("value iteration did not converge")


def shape_mdp(mdp: TabularMDP, potential: np.ndarray, coeff: float) -> TabularMDP:
    """Same dynamics with advice folded into the reward table."""
    potential = np.asarray(potential, dtype=np.float64)
    if potential.shape != (mdp.n_states,):
        raise ValueError("potential must give one value per state")
    shaped = (
        mdp.rewards
        + coeff * (mdp.gamma * potential[mdp.next_state] - potential[:, None])
    )
    return TabularMDP(shaped, mdp.next_state.copy(), mdp.gamma)


@dataclass(eq=False)
class InvarianceReport:
    """How the advice-shaped problem compares with the base problem."""

    max_offset_error: float
    policies_agree: bool
    decisive_states: int
    q_base: np.ndarray
    q_shaped: np.ndarray


def check_invariance(mdp: TabularMDP, potential: np.ndarray, coeff: float,
                     tol: float = 1e-12, gap: float = 1e-8) -> InvarianceReport:
    """Solve both problems and compare.

    The shaped optimum should equal the base optimum minus coeff times the
    potential of the state, and greedy choices should match wherever the
    base action values are separated by more than ``gap``.
    """
    q_base = value_iteration(mdp, tol=tol)
    q_shaped = value_iteration(shape_mdp(mdp, potential, coeff), tol=tol)
    potential = np.asarray(potential, dtype=np.float64)
    expected = q_base - coeff * potential[:, None]
    max_err = float(np.abs(q_shaped - expected).max())

    q_sorted = np.sort(q_base, axis=1)
    decisive = q_sorted[:, -1] - q_sorted[:, -2] > gap
    agree = bool(
        np.all(
            q_base[decisive].argmax(axis=1) == q_shaped[decisive].argmax(axis=1)
        )
    )
    return InvarianceReport(
        max_offset_error=max_err,
        policies_agree=agree,
        decisive_states=int(decisive.sum()),
        q_base=q_base,
        q_shaped=q_shaped,
    )
