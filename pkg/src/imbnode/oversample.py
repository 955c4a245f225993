"""Minority oversampling in embedding space plus the sampling baselines.

The latent sampler picks a seed node uniformly (with replacement) from a
minority class's train pool, finds its same-class nearest neighbor in the
current embedding, and interpolates with a single uniform delta per
synthetic node. Synthetic rows stay on the tape so the encoder receives
gradient through them; they are regenerated each epoch and never persisted
into the graph.

The graph-level baselines (plain duplication and raw-feature
interpolation) rebuild the graph once up front, copying the seed node's
incident edges. Class re-weighting produces the loss-weight vector
|train| / (m * |C_c|).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels, tape
from .graph import ClassStats, Graph, SplitMasks

BALANCE = "balance"


@dataclass(frozen=True)
class SamplingPlan:
    """Synthetic-node counts per class id (zero for classes not oversampled)."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.min() < 0:
            raise ValueError("negative synthetic count")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class SyntheticBatch:
    """Synthetic embeddings with their provenance (seed, neighbor, delta)."""

    embeddings: tape.Mat
    labels: np.ndarray
    parents: np.ndarray  # (s, 2): seed id, neighbor id
    deltas: np.ndarray


def plan_from_scale(stats: ClassStats, scale) -> SamplingPlan:
    """Fixed scale: round(|C_c| * scale) for classes below the largest;
    "balance": max|C_i| - |C_c| for every class."""
    sizes = stats.sizes
    counts = np.zeros(sizes.size, dtype=np.int64)
    if isinstance(scale, str):
        if scale != BALANCE:
            raise ValueError(f"scale must be a number or {BALANCE!r}")
        counts = sizes.max() - sizes
    else:
        if scale < 0:
            raise ValueError("scale must be >= 0")
        minority = sizes < sizes.max()
        counts[minority] = np.round(sizes[minority] * float(scale)).astype(np.int64)
    return SamplingPlan(counts=counts)


def class_pools(labels: np.ndarray, ids: np.ndarray, m: int) -> list[np.ndarray]:
    """Sorted id pool per class restricted to the given ids."""
    ids = np.sort(np.asarray(ids, dtype=np.int64))
    return [ids[labels[ids] == c] for c in range(m)]


def nearest_same_class(h1, v: int, candidate_ids, labels) -> int:
    """Closest candidate sharing v's label, excluding v; ties resolve to the
    smallest id. A singleton class degenerates to v itself (with a warning)."""
    h = h1.value if isinstance(h1, tape.Mat) else np.asarray(h1, dtype=np.float64)
    labels = np.asarray(labels)
    candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
    same = np.sort(candidate_ids[labels[candidate_ids] == labels[v]])
    nn = int(kernels.nearest_same_class_ids(h, same, np.array([v], dtype=np.int64))[0])
    if nn == v:
        warnings.warn(f"node {v}: no same-class neighbor, duplicating it")
    return nn


def interpolate_rows(h: tape.Mat, seeds, neighbors, deltas) -> tape.Mat:
    """(1 - delta) * h[seed] + delta * h[neighbor], row-wise, on the tape."""
    deltas = np.asarray(deltas, dtype=np.float64)
    a = tape.row_mul(tape.gather_rows(h, seeds), 1.0 - deltas)
    b = tape.row_mul(tape.gather_rows(h, neighbors), deltas)
    return tape.add(a, b)


def smote_interpolate(
    h1: tape.Mat,
    plan: SamplingPlan,
    seed_pools: list[np.ndarray],
    rng: np.random.Generator,
    nn_pools: list[np.ndarray] | None = None,
) -> SyntheticBatch:
    """Generate the planned synthetic nodes from the current embedding.

    `seed_pools[c]` holds the train ids of class c to draw seeds from;
    `nn_pools` widens the neighbor search (defaults to the seed pools).
    Classes iterate in ascending id; per class the seeds are drawn first,
    then the deltas, which fixes the rng stream order.
    """
    if nn_pools is None:
        nn_pools = seed_pools
    seeds_all, nn_all, deltas_all, labels_all = [], [], [], []
    h_val = h1.value
    for c in np.nonzero(plan.counts)[0]:
        count = int(plan.counts[c])
        pool = seed_pools[c]
        if pool.size == 0:
            raise ValueError(f"class {c}: no train nodes to oversample from")
        seeds = rng.choice(pool, size=count, replace=True)
        deltas = rng.random(count)
        cands = np.sort(nn_pools[c])
        if cands.size <= 1:
            warnings.warn(f"class {c}: single-node pool, synthetic nodes duplicate it")
        nns = kernels.nearest_same_class_ids(h_val, cands, seeds.astype(np.int64))
        seeds_all.append(seeds)
        nn_all.append(nns)
        deltas_all.append(deltas)
        labels_all.append(np.full(count, c, dtype=np.int64))
    if not seeds_all:
        return SyntheticBatch(
            embeddings=tape.const(np.zeros((0, h1.cols))),
            labels=np.array([], dtype=np.int64),
            parents=np.zeros((0, 2), dtype=np.int64),
            deltas=np.array([]),
        )
    seeds = np.concatenate(seeds_all)
    nns = np.concatenate(nn_all)
    deltas = np.concatenate(deltas_all)
    return SyntheticBatch(
        embeddings=interpolate_rows(h1, seeds, nns, deltas),
        labels=np.concatenate(labels_all),
        parents=np.stack([seeds, nns], axis=1),
        deltas=deltas,
    )


def reweight_vector(stats: ClassStats) -> np.ndarray:
    """Per-class loss weights |train| / (m * |C_c|); 1.0 when balanced."""
    sizes = stats.sizes
    return sizes.sum() / (sizes.size * sizes.astype(np.float64))


def _pick_seeds(plan: SamplingPlan, pools: list[np.ndarray], rng) -> tuple[np.ndarray, np.ndarray]:
    """Seed ids and labels for graph-level baselines; uniform with
    replacement under an rng, round-robin through the sorted pool without."""
    seeds, labels = [], []
    for c in np.nonzero(plan.counts)[0]:
        count = int(plan.counts[c])
        pool = np.sort(pools[c])
        if pool.size == 0:
            raise ValueError(f"class {c}: no train nodes to oversample from")
        if rng is None:
            chosen = pool[np.arange(count) % pool.size]
        else:
            chosen = rng.choice(pool, size=count, replace=True)
        seeds.append(chosen)
        labels.append(np.full(count, c, dtype=np.int64))
    if not seeds:
        return np.array([], dtype=np.int64), np.array([], dtype=np.int64)
    return np.concatenate(seeds), np.concatenate(labels)


def _extend_graph(g: Graph, seeds: np.ndarray, new_features: np.ndarray) -> Graph:
    """Append one node per seed, copying the seed's incident edges."""
    n_new = seeds.size
    block = g.adjacency[:, seeds] if n_new else sp.csr_matrix((g.n, 0))
    adj = sp.bmat(
        [[g.adjacency, block], [block.T, sp.csr_matrix((n_new, n_new))]],
        format="csr",
    )
    labels = np.concatenate([g.labels, g.labels[seeds]])
    features = np.vstack([g.features, new_features])
    return Graph(adjacency=adj, features=features, labels=labels, m=g.m)


def _extend_masks(masks: SplitMasks, n_old: int, n_new: int) -> SplitMasks:
    return SplitMasks(
        train=np.concatenate([masks.train, np.arange(n_old, n_old + n_new)]),
        val=masks.val.copy(),
        test=masks.test.copy(),
    )


def baseline_duplicate(
    g: Graph, masks: SplitMasks, plan: SamplingPlan, rng: np.random.Generator | None = None
) -> tuple[Graph, SplitMasks]:
    """Plain oversampling: copy minority train nodes along their edges."""
    pools = class_pools(g.labels, masks.train, g.m)
    seeds, _ = _pick_seeds(plan, pools, rng)
    new_g = _extend_graph(g, seeds, g.features[seeds].copy())
    return new_g, _extend_masks(masks, g.n, seeds.size)


def baseline_raw_smote(
    g: Graph, masks: SplitMasks, plan: SamplingPlan, rng: np.random.Generator
) -> tuple[Graph, SplitMasks]:
    """Raw-feature-space interpolation; the new node's edges copy the seed's."""
    pools = class_pools(g.labels, masks.train, g.m)
    seeds, _ = _pick_seeds(plan, pools, rng)
    deltas = rng.random(seeds.size)
    feats = np.ascontiguousarray(g.features, dtype=np.float64)
    new_rows = np.empty((seeds.size, g.d))
    for i, v in enumerate(seeds):
        nn = nearest_same_class(feats, int(v), masks.train, g.labels)
        new_rows[i] = (1.0 - deltas[i]) * feats[v] + deltas[i] * feats[nn]
    new_g = _extend_graph(g, seeds, new_rows)
    return new_g, _extend_masks(masks, g.n, seeds.size)
