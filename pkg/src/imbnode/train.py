"""End-to-end training: variant dispatch, edge-task pretraining, the joint
objective, and convergence control.

Variants
--------
origin          plain two-block pipeline on the real graph
oversample_dup  graph rebuilt once with duplicated minority nodes
reweight        per-class loss weights |train| / (m * |C_c|)
raw_smote       graph rebuilt once with raw-feature interpolation
embed_smote     interpolation at the second-block embedding, no edges
gs_t / gs_o     latent oversampling with thresholded / soft generated edges
gs_pre_t/_o     same, preceded by pretraining encoder + edge generator on
                the reconstruction loss alone

Per epoch the gs variants re-encode, regenerate synthetic nodes from the
current embedding, augment the adjacency, and optimize
node_loss + lambda * edge_loss. With thresholded edges the generator
receives gradient only through the (lambda-scaled) reconstruction term;
with soft edges the classifier gradient also reaches it.

Randomness: a run's seed spawns two child generators, in order, (0) the
parameter init stream and (1) the sampling stream used by graph rebuilds
and the per-epoch synthetic draws. Identical (config, seed) therefore
reproduce the run bit-for-bit on a given backend.

Convergence: early stopping on validation macro-F with a patience window
(an empty validation mask falls back to monitoring the train mask); the
parameters reported are the snapshot from the best epoch. Evaluation runs
on the real graph only; synthetic nodes exist to shape gradients, not
predictions.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import classifier, edgegen, encoder, tape
from .errors import NonFiniteError, TrainingDiverged
from .graph import Graph, SplitMasks, imbalance_ratio
from .metrics import MetricsReport, aggregate_reports, full_report
from .optim import ParamStore, adam_step, glorot
from .oversample import (
    SamplingPlan,
    SyntheticBatch,
    baseline_duplicate,
    baseline_raw_smote,
    class_pools,
    interpolate_rows,
    plan_from_scale,
    reweight_vector,
    smote_interpolate,
)

VARIANTS = (
    "origin",
    "oversample_dup",
    "reweight",
    "raw_smote",
    "embed_smote",
    "gs_t",
    "gs_o",
    "gs_pre_t",
    "gs_pre_o",
)
GS_VARIANTS = ("gs_t", "gs_o", "gs_pre_t", "gs_pre_o")
SOFT_VARIANTS = ("gs_o", "gs_pre_o")
PRETRAIN_VARIANTS = ("gs_pre_t", "gs_pre_o")
_DIVERGENCE_CAP = 1e9


@dataclass
class TrainConfig:
    variant: str = "origin"
    lambda_: float = 1e-6
    eta: float = 0.5
    lr: float = 1e-3
    weight_decay: float = 5e-4
    max_epochs: int = 5000
    patience: int = 200
    pretrain_max_epochs: int = 500
    pretrain_patience: int = 30
    scale: float | str = 2.0
    seed: int = 0
    agg: str = "mean"
    embed_dim: int = 64
    hidden_dim: int = 64
    logits_relu: bool = False
    edge_score_mode: str = "sigmoid"
    nn_scope: str = "train"
    edge_dense_cap: int = 5000
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    synth_log: str | None = None

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.lambda_ < 0:
            raise ValueError("lambda_ must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if isinstance(self.scale, str) and self.scale != "balance":
            raise ValueError("scale must be a number or 'balance'")
        if self.agg not in ("mean", "sum"):
            raise ValueError("agg must be 'mean' or 'sum'")
        if self.nn_scope not in ("train", "labeled"):
            raise ValueError("nn_scope must be 'train' or 'labeled'")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


@dataclass
class EpochStats:
    epoch: int
    node_loss: float
    edge_loss: float
    total_loss: float
    val_acc: float
    val_auc: float
    val_f: float


@dataclass
class RunRecord:
    variant: str
    seed: int
    config: dict
    pretrain_losses: list[float] = field(default_factory=list)
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    minority_classes: list[int] | None = None
    wall_time: float = 0.0
    report: MetricsReport | None = None

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            head = {
                "type": "run",
                "variant": self.variant,
                "seed": self.seed,
                "config": self.config,
                "best_epoch": self.best_epoch,
                "minority_classes": self.minority_classes,
                "wall_time": self.wall_time,
                "pretrain_epochs": len(self.pretrain_losses),
            }
            if self.report is not None:
                head["test"] = {
                    "acc": self.report.acc,
                    "auc_macro": self.report.auc_macro,
                    "f_macro": self.report.f_macro,
                }
            fh.write(json.dumps(head) + "\n")
            for e in self.epochs:
                fh.write(json.dumps(asdict(e)) + "\n")


def init_params(
    d: int,
    embed_dim: int,
    hidden_dim: int,
    m: int,
    rng: np.random.Generator,
    with_edge_generator: bool,
) -> ParamStore:
    """Seeded uniform init; the draw order (W1, W2, Wc, S) is fixed."""
    store = ParamStore()
    store.add("W1", glorot(2 * d, embed_dim, rng))
    store.add("W2", glorot(2 * embed_dim, hidden_dim, rng))
    store.add("Wc", glorot(2 * hidden_dim, m, rng))
    if with_edge_generator:
        store.add("S", glorot(embed_dim, embed_dim, rng))
    return store


@dataclass
class FrozenDraw:
    """One epoch's sampling decisions, pinned so an objective can be
    re-evaluated as a deterministic function of the parameters (finite
    differences, the gs_t constant-adjacency check)."""

    seeds: np.ndarray
    nns: np.ndarray
    deltas: np.ndarray
    labels: np.ndarray
    b_mask: np.ndarray | None = None  # thresholded variants only


def _batch_from_frozen(h: tape.Mat, frozen: FrozenDraw) -> SyntheticBatch:
    return SyntheticBatch(
        embeddings=interpolate_rows(h, frozen.seeds, frozen.nns, frozen.deltas),
        labels=frozen.labels,
        parents=np.stack([frozen.seeds, frozen.nns], axis=1),
        deltas=frozen.deltas,
    )


class _Trainer:
    """Per-run state shared by the epoch objective and the loops."""

    def __init__(self, g: Graph, masks: SplitMasks, cfg: TrainConfig):
        cfg.validate()
        masks.validate(g)
        self.cfg = cfg
        init_seed, sample_seed = np.random.SeedSequence(cfg.seed).spawn(2)
        self.init_rng = np.random.default_rng(init_seed)
        self.sample_rng = np.random.default_rng(sample_seed)

        if cfg.variant == "oversample_dup":
            plan0 = plan_from_scale(imbalance_ratio(g, masks), cfg.scale)
            g, masks = baseline_duplicate(g, masks, plan0, self.sample_rng)
        elif cfg.variant == "raw_smote":
            plan0 = plan_from_scale(imbalance_ratio(g, masks), cfg.scale)
            g, masks = baseline_raw_smote(g, masks, plan0, self.sample_rng)
        self.g = g
        self.masks = masks
        self.stats = imbalance_ratio(g, masks)
        self.weights = reweight_vector(self.stats) if cfg.variant == "reweight" else None
        self.needs_generator = cfg.variant in GS_VARIANTS
        self.params = init_params(
            g.d, cfg.embed_dim, cfg.hidden_dim, g.m, self.init_rng, self.needs_generator
        )
        self.enc_in = encoder.build_input(g, cfg.agg)
        self.adj_dense = None
        if self.needs_generator and (cfg.lambda_ > 0 or cfg.variant in PRETRAIN_VARIANTS):
            if g.n <= cfg.edge_dense_cap:
                self.adj_dense = g.dense_adjacency()
        self.plan: SamplingPlan | None = None
        if cfg.variant in GS_VARIANTS or cfg.variant == "embed_smote":
            self.plan = plan_from_scale(self.stats, cfg.scale)
        self.pools = class_pools(g.labels, masks.train, g.m)
        self.nn_pools = (
            class_pools(g.labels, g.labeled_ids(), g.m) if cfg.nn_scope == "labeled" else self.pools
        )
        self.last_draw: FrozenDraw | None = None

    # -- objective ---------------------------------------------------------

    def draw_epoch(self, h: tape.Mat) -> FrozenDraw:
        """Sample one epoch's synthetic nodes (and threshold mask for the
        binary variants) from the current embedding."""
        batch = smote_interpolate(h, self.plan, self.pools, self.sample_rng, self.nn_pools)
        b_mask = None
        if self.cfg.variant in ("gs_t", "gs_pre_t") and batch.labels.size:
            aug = edgegen.augment_thresholded(
                h, self.params, batch, self.g, self.cfg.eta, self.cfg.edge_score_mode
            )
            b_mask = aug.syn_real.value
        return FrozenDraw(
            seeds=batch.parents[:, 0],
            nns=batch.parents[:, 1],
            deltas=batch.deltas,
            labels=batch.labels,
            b_mask=b_mask,
        )

    def objective(self, frozen: FrozenDraw | None):
        """Build one epoch's loss. Returns (loss, node_loss_value,
        edge_loss_value, probs, h1) with probs covering real then synthetic
        rows."""
        cfg = self.cfg
        h1 = encoder.encode_from_input(self.enc_in, self.params)
        edge_term = None
        if cfg.variant in GS_VARIANTS:
            if frozen is not None:
                batch = _batch_from_frozen(h1, frozen)
            else:
                batch = smote_interpolate(h1, self.plan, self.pools, self.sample_rng, self.nn_pools)
                self.last_draw = FrozenDraw(
                    seeds=batch.parents[:, 0],
                    nns=batch.parents[:, 1],
                    deltas=batch.deltas,
                    labels=batch.labels,
                )
            if cfg.variant in SOFT_VARIANTS:
                aug = edgegen.augment_soft(h1, self.params, batch, self.g, cfg.edge_score_mode)
            elif frozen is not None and frozen.b_mask is not None:
                aug = edgegen.AugmentedGraph(
                    self.g, h1, batch=batch, syn_real=tape.const(frozen.b_mask)
                )
            else:
                aug = edgegen.augment_thresholded(
                    h1, self.params, batch, self.g, cfg.eta, cfg.edge_score_mode
                )
            if cfg.lambda_ > 0:
                edge_term = edgegen.edge_loss(
                    h1, self.params, self.g, cfg.edge_dense_cap, self.adj_dense, cfg.edge_score_mode
                )
            p = classifier.classify(aug, self.params, cfg.agg, cfg.logits_relu)
            labels_aug = aug.labels_aug
            mask = aug.train_ids_aug(self.masks.train)
        elif cfg.variant == "embed_smote":
            p, labels_aug, mask = self._embed_smote_probs(h1, frozen)
        else:
            aug = edgegen.real_only(self.g, h1)
            p = classifier.classify(aug, self.params, cfg.agg, cfg.logits_relu)
            labels_aug = aug.labels_aug
            mask = self.masks.train
        node_term = classifier.node_loss(p, labels_aug, mask, self.weights)
        loss = node_term if edge_term is None else tape.add(node_term, tape.mul_scalar(edge_term, cfg.lambda_))
        return loss, node_term.item(), (edge_term.item() if edge_term is not None else 0.0), p, h1

    def _embed_smote_probs(self, h1: tape.Mat, frozen: FrozenDraw | None):
        """Interpolation at the second-block embedding: synthetic rows skip
        edge generation and reach only the linear head (zero aggregate)."""
        cfg = self.cfg
        aug0 = edgegen.real_only(self.g, h1)
        h2 = classifier.hidden_embed(aug0, self.params, cfg.agg)
        if frozen is not None:
            batch = _batch_from_frozen(h2, frozen)
        else:
            batch = smote_interpolate(h2, self.plan, self.pools, self.sample_rng, self.nn_pools)
        logits_real = classifier.class_logits(aug0, h2, self.params, cfg.agg, logits_relu=False)
        s = batch.labels.size
        if s == 0:
            logits = logits_real
            labels_aug = self.g.labels
            mask = self.masks.train
        else:
            syn_in = tape.concat_cols(batch.embeddings, tape.const(np.zeros((s, cfg.hidden_dim))))
            logits_syn = tape.matmul(syn_in, self.params["Wc"])
            logits = tape.concat_rows(logits_real, logits_syn)
            labels_aug = np.concatenate([self.g.labels, batch.labels])
            mask = np.concatenate(
                [self.masks.train, np.arange(self.g.n, self.g.n + s, dtype=np.int64)]
            )
        if cfg.logits_relu:
            logits = tape.relu(logits)
        return tape.row_softmax(logits), labels_aug, mask

    # -- evaluation --------------------------------------------------------

    def eval_probs(self, h1_values: np.ndarray) -> np.ndarray:
        """Inference pass on the real graph only, detached from the tape."""
        aug = edgegen.real_only(self.g, tape.const(h1_values))
        return classifier.classify(aug, self.params, self.cfg.agg, self.cfg.logits_relu).value

    def evaluate(self, ids: np.ndarray, probs: np.ndarray) -> MetricsReport:
        return full_report(probs, self.g.labels, ids, num_classes=self.g.m)


def pretrain(
    g: Graph,
    masks: SplitMasks,
    params: ParamStore,
    cfg: TrainConfig,
    enc_in: tape.Mat | None = None,
    adj_dense: np.ndarray | None = None,
) -> list[float]:
    """Optimize encoder + edge generator on the reconstruction loss alone.

    Stops once the loss has not improved for `pretrain_patience` epochs
    (patience 0 means exactly one epoch) or at the epoch cap.
    """
    if enc_in is None:
        enc_in = encoder.build_input(g, cfg.agg)
    losses: list[float] = []
    best = np.inf
    best_snap = params.snapshot()
    bad = 0
    for _ in range(cfg.pretrain_max_epochs):
        h1 = encoder.encode_from_input(enc_in, params)
        loss = edgegen.edge_loss(h1, params, g, cfg.edge_dense_cap, adj_dense, cfg.edge_score_mode)
        value = loss.item()
        if value < best:
            best = value
            best_snap = params.snapshot()  # params that produced this loss
            bad = 0
        else:
            bad += 1
        tape.backward(loss)
        adam_step(
            params,
            lr=cfg.lr,
            weight_decay=cfg.weight_decay,
            betas=cfg.adam_betas,
            eps=cfg.adam_eps,
            names=("W1", "S"),
        )
        losses.append(value)
        if bad >= cfg.pretrain_patience:
            break
    params.restore(best_snap)
    return losses


def train(g: Graph, masks: SplitMasks, cfg: TrainConfig) -> tuple[ParamStore, RunRecord]:
    """Run one variant to convergence and evaluate the best checkpoint."""
    started = time.perf_counter()
    t = _Trainer(g, masks, cfg)
    record = RunRecord(variant=cfg.variant, seed=cfg.seed, config=cfg.as_dict())

    if cfg.variant in PRETRAIN_VARIANTS:
        record.pretrain_losses = pretrain(t.g, t.masks, t.params, cfg, t.enc_in, t.adj_dense)

    monitor_ids = t.masks.val if t.masks.val.size else t.masks.train
    best_f = -np.inf
    best_snap = t.params.snapshot()
    bad = 0
    synth_fh = None
    if cfg.synth_log:
        synth_fh = open(cfg.synth_log, "w", encoding="utf-8")
        synth_fh.write("epoch,class,v,nn,delta\n")
    try:
        for epoch in range(cfg.max_epochs):
            try:
                loss, node_value, edge_value, p, h1 = t.objective(None)
            except NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}") from exc
            total = loss.item()
            if not np.isfinite(total) or abs(total) > _DIVERGENCE_CAP:
                raise TrainingDiverged(f"epoch {epoch}: loss {total}")
            if synth_fh is not None and t.last_draw is not None:
                d = t.last_draw
                for c, v, nn, delta in zip(d.labels, d.seeds, d.nns, d.deltas):
                    synth_fh.write(f"{epoch},{c},{v},{nn},{float(delta)!r}\n")

            if cfg.variant in GS_VARIANTS:
                eval_probs = t.eval_probs(h1.value)
            else:
                eval_probs = p.value[: t.g.n]
            val_report = t.evaluate(monitor_ids, eval_probs)
            if val_report.f_macro > best_f:
                best_f = val_report.f_macro
                best_snap = t.params.snapshot()
                record.best_epoch = epoch
                bad = 0
            else:
                bad += 1

            tape.backward(loss)
            adam_step(
                t.params,
                lr=cfg.lr,
                weight_decay=cfg.weight_decay,
                betas=cfg.adam_betas,
                eps=cfg.adam_eps,
            )
            record.epochs.append(
                EpochStats(
                    epoch=epoch,
                    node_loss=node_value,
                    edge_loss=edge_value,
                    total_loss=total,
                    val_acc=val_report.acc,
                    val_auc=val_report.auc_macro,
                    val_f=val_report.f_macro,
                )
            )
            if bad >= cfg.patience:
                break
    finally:
        if synth_fh is not None:
            synth_fh.close()

    t.params.restore(best_snap)
    h1_final = encoder.encode_from_input(t.enc_in, t.params)
    probs = t.eval_probs(h1_final.value)
    record.report = t.evaluate(t.masks.test if t.masks.test.size else monitor_ids, probs)
    record.wall_time = time.perf_counter() - started
    return t.params, record


@dataclass
class GridResult:
    rows: list[tuple[str, int, MetricsReport]]
    summary: list[tuple]


def run_variant_grid(g: Graph, masks: SplitMasks, cfgs: list[TrainConfig]) -> GridResult:
    """Train every config and aggregate metrics per variant (mean, std)."""
    rows = []
    for cfg in cfgs:
        _, record = train(g, masks, cfg)
        rows.append((cfg.variant, cfg.seed, record.report))
    summary = aggregate_reports([(v, r) for v, _, r in rows])
    return GridResult(rows=rows, summary=summary)


# ---------------------------------------------------------------------------
# gradient checking of the full per-variant objectives
# ---------------------------------------------------------------------------


def _gradcheck_instance(variant: str, seed: int, n_per_class, d, embed_dim, hidden_dim, lambda_):
    """A trainer plus pinned sampling decisions for one variant objective."""
    from .graph import generate_sbm_graph

    g = generate_sbm_graph(n_per_class, p_in=0.9, p_out=0.3, d=d, seed=seed)
    masks = SplitMasks(
        train=np.arange(g.n, dtype=np.int64),
        val=np.array([], dtype=np.int64),
        test=np.array([], dtype=np.int64),
    )
    cfg = TrainConfig(
        variant=variant,
        lambda_=lambda_,
        scale=1.0,
        seed=seed,
        embed_dim=embed_dim,
        hidden_dim=hidden_dim,
        max_epochs=1,
    )
    t = _Trainer(g, masks, cfg)
    frozen = None
    if variant in GS_VARIANTS:
        frozen = t.draw_epoch(encoder.encode_from_input(t.enc_in, t.params))
    elif variant == "embed_smote":
        h1 = encoder.encode_from_input(t.enc_in, t.params)
        h2 = classifier.hidden_embed(edgegen.real_only(t.g, h1), t.params, cfg.agg)
        batch = smote_interpolate(h2, t.plan, t.pools, t.sample_rng, t.nn_pools)
        frozen = FrozenDraw(
            seeds=batch.parents[:, 0],
            nns=batch.parents[:, 1],
            deltas=batch.deltas,
            labels=batch.labels,
        )
    return t, frozen


def gradcheck_variants(
    seed: int = 0,
    n_per_class=(3, 3, 2),
    d: int = 4,
    embed_dim: int = 5,
    hidden_dim: int = 4,
    lambda_: float = 1e-2,
    rtol: float = 1e-4,
    atol: float = 1e-6,
    step: float = 1e-4,
    max_redraws: int = 8,
) -> dict[str, float]:
    """Compare analytic gradients of every variant's full objective against
    central finite differences on a small random graph.

    Returns the per-variant maximum tolerance violation; values <= 0 pass.
    The epoch's sampling decisions are pinned first so the objective is a
    smooth function of the parameters. Central differences are meaningless
    when a relu input sits within the step of zero, so instances whose
    activations come that close are redrawn (a property of the random
    instance, checked before any comparison).
    """
    out: dict[str, float] = {}
    for variant in VARIANTS:
        t = frozen = None
        for redraw in range(max_redraws):
            t, frozen = _gradcheck_instance(
                variant, seed + 101 * redraw, n_per_class, d, embed_dim, hidden_dim, lambda_
            )
            with tape.track_kinks() as tracker:
                t.objective(frozen)
            if tracker[0] > 20.0 * step:
                break

        t.params.zero_grads()
        loss = t.objective(frozen)[0]
        tape.backward(loss)
        analytic = {name: t.params[name].grad.copy() for name in t.params.names()}

        worst = -np.inf
        for name in t.params.names():
            numeric = tape.fd_gradient(
                lambda: t.objective(frozen)[0].item(), t.params[name], step=step
            )
            worst = max(worst, tape.grad_max_violation(analytic[name], numeric, rtol, atol))
        out[variant] = worst
    return out
