"""Spot-price Markov chain: per-stage k-means clusters and counted transitions.

Cluster labels are sorted by duration-weighted mean price so they are stable
across runs; transition rows are estimated by counting scenario moves between
consecutive stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MarkovError(Exception):
    pass


@dataclass(frozen=True)
class StageClusters:
    centroids: np.ndarray    # (K, blocks)
    assignment: np.ndarray   # (scenarios,)

    @property
    def num_clusters(self) -> int:
        return len(self.centroids)

    def members(self, k) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)


@dataclass(frozen=True)
class MarkovChain:
    """Per-stage price clusters plus stage-to-stage transition matrices.

    ``transitions[t]`` maps clusters of stage t to clusters of stage t+1; the
    last entry maps the final stage to itself (used for its openings)."""

    stages: tuple          # StageClusters per stage
    transitions: tuple     # (K_t, K_{t+1}) row-stochastic matrices

    def cluster_of(self, t, s) -> int:
        return int(self.stages[t].assignment[s])

    def scenario_set(self, t, k) -> np.ndarray:
        """S^{k,t}: scenarios in cluster k at stage t."""
        return self.stages[t].members(k)


def cluster_stage(prices, K, seed, weights=None):
    """Lloyd's k-means with k-means++ seeding on per-scenario block-price
    vectors, deterministic under ``seed``.

    Distances are Euclidean weighted by block durations. Returns (centroids,
    assignment) with clusters ordered by weighted mean price. Empty clusters
    are re-seeded from the farthest point.
    """
    X = np.asarray(prices, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, b = X.shape
    w = np.full(b, 1.0 / b) if weights is None else np.asarray(weights, dtype=float)
    distinct = np.unique(X, axis=0)
    if K > len(distinct):
        raise MarkovError(f"K={K} exceeds the {len(distinct)} distinct price vectors")
    rng = np.random.Generator(np.random.Philox(seed))
    Xw = X * np.sqrt(w)

    # k-means++ seeding
    centers = [Xw[rng.integers(n)]]
    for _ in range(1, K):
        d2 = np.min([np.sum((Xw - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a center; pick any distinct vector
            for cand in Xw:
                if all(np.any(cand != c) for c in centers):
                    centers.append(cand)
                    break
            continue
        centers.append(Xw[rng.choice(n, p=d2 / total)])
    C = np.asarray(centers)

    assignment = np.zeros(n, dtype=int)
    for _ in range(300):
        dist = np.sum((Xw[:, None, :] - C[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dist, axis=1)
        for k in range(K):
            mask = new_assign == k
            if not np.any(mask):
                far = np.argmax(np.min(dist, axis=1))
                C[k] = Xw[far]
                new_assign[far] = k
                mask = new_assign == k
            C[k] = Xw[mask].mean(axis=0)
        if np.array_equal(new_assign, assignment):
            break
        assignment = new_assign

    centroids = C / np.sqrt(w)
    order = np.argsort(centroids @ w, kind="stable")
    relabel = np.empty(K, dtype=int)
    relabel[order] = np.arange(K)
    return centroids[order], relabel[assignment]


def estimate_transitions(assign_t, assign_next, K_t=None, K_next=None) -> np.ndarray:
    """p[k, m] = fraction of scenarios in cluster k at t that are in m at t+1.

    Empty source clusters get a uniform row.
    """
    assign_t = np.asarray(assign_t)
    assign_next = np.asarray(assign_next)
    K_t = int(assign_t.max()) + 1 if K_t is None else K_t
    K_next = int(assign_next.max()) + 1 if K_next is None else K_next
    counts = np.zeros((K_t, K_next))
    for k, m in zip(assign_t, assign_next):
        counts[k, m] += 1
    rows = counts.sum(axis=1, keepdims=True)
    out = np.where(rows > 0, counts / np.maximum(rows, 1), 1.0 / K_next)
    return out


def assign_openings(transition_row, num_openings, seed) -> np.ndarray:
    """Label each opening with a next-stage cluster, i.i.d. from the
    transition probabilities; deterministic under ``seed``."""
    row = np.asarray(transition_row, dtype=float)
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.choice(len(row), size=num_openings, p=row / row.sum())


def build_markov_chain(spots, K, seed, weights=None) -> MarkovChain:
    """Cluster per-stage spot scenarios and estimate transitions by counting.

    ``spots`` has shape (stages, blocks, scenarios). K is capped per stage by
    the number of distinct price vectors.
    """
    spots = np.asarray(spots, dtype=float)
    T = spots.shape[0]
    stages = []
    for t in range(T):
        X = spots[t].T  # (scenarios, blocks)
        Kt = min(K, len(np.unique(X, axis=0)))
        centroids, assignment = cluster_stage(X, Kt, seed + 7919 * t, weights)
        stages.append(StageClusters(centroids, assignment))
    transitions = []
    for t in range(T - 1):
        transitions.append(
            estimate_transitions(
                stages[t].assignment,
                stages[t + 1].assignment,
                stages[t].num_clusters,
                stages[t + 1].num_clusters,
            )
        )
    # final stage: self transition so its openings can still be labeled
    lastK = stages[-1].num_clusters
    transitions.append(np.full((lastK, lastK), 1.0 / lastK))
    return MarkovChain(tuple(stages), tuple(transitions))
