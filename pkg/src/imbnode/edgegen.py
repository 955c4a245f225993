"""Bilinear edge scorer, its reconstruction loss, and graph augmentation.

Scores are logistic(h_v . S_sym . h_u) with S symmetrized as (S + S^T)/2
so scoring commutes in its arguments. The reconstruction loss is the
squared Frobenius distance between the scored pair matrix and the real
adjacency, summed (not averaged) over all real pairs; the objective weight
compensates for the scale.

Augmentation attaches synthetic nodes to real ones either by thresholding
the scores (binary edges, constant to the tape) or by keeping the scores
as soft weights (gradient flows from the classifier into S and the
encoder). Synthetic-synthetic edges are omitted: the generator is trained
on real pairs only and has no evidence about them.
"""
from __future__ import annotations

import numpy as np

from . import tape
from .errors import DenseCapError
from .graph import Graph
from .optim import ParamStore
from .oversample import SyntheticBatch

MODE_THRESHOLDED = "thresholded"
MODE_SOFT = "soft"
SCORE_SIGMOID = "sigmoid"
SCORE_ROW_SOFTMAX = "row_softmax"


def symmetric_interaction(params: ParamStore) -> tape.Mat:
    s = params["S"]
    return tape.mul_scalar(tape.add(s, tape.transpose(s)), 0.5)


def score_matrix(
    rows: tape.Mat, cols: tape.Mat, params: ParamStore, mode: str = SCORE_SIGMOID
) -> tape.Mat:
    """Pairwise edge probabilities between two embedding sets (tape-aware)."""
    raw = tape.matmul(tape.matmul(rows, symmetric_interaction(params)), tape.transpose(cols))
    if mode == SCORE_SIGMOID:
        return tape.sigmoid(raw)
    if mode == SCORE_ROW_SOFTMAX:
        return tape.row_softmax(raw)
    raise ValueError(f"unknown score mode {mode!r}")


def edge_score(h1, params: ParamStore, v: int, u: int) -> float:
    """Probe a single pair's edge probability from current values."""
    h = h1.value if isinstance(h1, tape.Mat) else np.asarray(h1, dtype=np.float64)
    s = params["S"].value
    s_sym = 0.5 * (s + s.T)
    return float(1.0 / (1.0 + np.exp(-(h[v] @ s_sym @ h[u]))))


def edge_loss(
    h1: tape.Mat,
    params: ParamStore,
    g: Graph,
    dense_cap: int = 5000,
    adj_dense: np.ndarray | None = None,
    mode: str = SCORE_SIGMOID,
) -> tape.Mat:
    """Squared reconstruction error of the real adjacency from pair scores."""
    if g.n > dense_cap:
        raise DenseCapError(
            f"{g.n} nodes exceeds the dense reconstruction cap {dense_cap}; "
            "raise edge_dense_cap to densify anyway"
        )
    if adj_dense is None:
        adj_dense = g.dense_adjacency()
    raw = tape.matmul(tape.matmul(h1, symmetric_interaction(params)), tape.transpose(h1))
    if mode == SCORE_SIGMOID:
        return tape.sigmoid_sqdiff(raw, adj_dense)
    return tape.frobenius_sq_diff(tape.row_softmax(raw), adj_dense)


class AugmentedGraph:
    """Real graph plus synthetic nodes and their generated edges.

    The real-real block of the adjacency is always the original A; the
    synthetic-real block holds either binary thresholded edges (constant)
    or soft scores (a tape node). Synthetic-synthetic entries are zero.
    """

    def __init__(
        self,
        graph: Graph,
        h1: tape.Mat,
        batch: SyntheticBatch | None = None,
        syn_real: tape.Mat | None = None,
        mode: str = MODE_THRESHOLDED,
    ):
        self.graph = graph
        self.h1 = h1
        self.batch = batch
        self.syn_real = syn_real
        self.mode = mode
        syn_labels = batch.labels if batch is not None else np.array([], dtype=np.int64)
        self.labels_aug = np.concatenate([graph.labels, syn_labels])

    @property
    def n_real(self) -> int:
        return self.graph.n

    @property
    def n_syn(self) -> int:
        return 0 if self.batch is None else self.batch.labels.size

    @property
    def h1_aug(self) -> tape.Mat:
        if self.batch is None:
            return self.h1
        return tape.concat_rows(self.h1, self.batch.embeddings)

    def train_ids_aug(self, train_ids: np.ndarray) -> np.ndarray:
        """Augmented labeled set: train nodes plus all synthetic nodes."""
        extra = np.arange(self.n_real, self.n_real + self.n_syn, dtype=np.int64)
        return np.concatenate([np.asarray(train_ids, dtype=np.int64), extra])

    def adjacency_dense(self) -> np.ndarray:
        """Materialized (n+s)x(n+s) adjacency for checks and small graphs."""
        n, s = self.n_real, self.n_syn
        out = np.zeros((n + s, n + s))
        out[:n, :n] = self.graph.dense_adjacency()
        if s:
            b = self.syn_real.value
            out[n:, :n] = b
            out[:n, n:] = b.T
        return out


def real_only(graph: Graph, h1: tape.Mat) -> AugmentedGraph:
    return AugmentedGraph(graph, h1, batch=None, syn_real=None)


def augment_thresholded(
    h1: tape.Mat,
    params: ParamStore,
    batch: SyntheticBatch,
    graph: Graph,
    eta: float,
    score_mode: str = SCORE_SIGMOID,
) -> AugmentedGraph:
    """Binary synthetic-real edges where the score exceeds eta; the result
    is constant with respect to the tape."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if batch.labels.size == 0:
        return real_only(graph, h1)
    scores = score_matrix(
        tape.const(batch.embeddings.value), tape.const(h1.value), params, score_mode
    )
    b = tape.const((scores.value > eta).astype(np.float64))
    return AugmentedGraph(graph, h1, batch=batch, syn_real=b, mode=MODE_THRESHOLDED)


def augment_soft(
    h1: tape.Mat,
    params: ParamStore,
    batch: SyntheticBatch,
    graph: Graph,
    score_mode: str = SCORE_SIGMOID,
) -> AugmentedGraph:
    """Soft synthetic-real edges carrying gradient from the classifier."""
    if batch.labels.size == 0:
        return real_only(graph, h1)
    b = score_matrix(batch.embeddings, h1, params, score_mode)
    return AugmentedGraph(graph, h1, batch=batch, syn_real=b, mode=MODE_SOFT)
