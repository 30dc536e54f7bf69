"""Multiclass log-loss over all entities and Adagrad embedding training.

Every triple contributes a tail-prediction and a head-prediction term, each
a full softmax over the entity vocabulary. Gradients flow through the
query-vector form of the score, so one mini-batch costs a handful of dense
matrix products regardless of architecture.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import controller
from .datasets import REPLACE_HEAD, REPLACE_TAIL
from .errors import NumericalError
from .grouping import GroupAssignment
from .scoring import EmbeddingTable, query_matrix, query_matrix_backward
from .search_space import Architecture, check_exploitative

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    dim: int = 32
    batch_size: int = 512
    u_samples: int = 2
    learning_rate: float = 0.1
    l2: float = 1e-3
    lr_decay: float = 1.0
    epochs: int = 100
    seed: int = 0
    eval_every: int = 5
    patience: int = 10
    tie_rule: str = "mean"
    debug: bool = False

    def validate(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.u_samples < 1:
            raise ValueError("u_samples must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


class AdagradState:
    """Per-coordinate Adagrad accumulators for one embedding table."""

    def __init__(self, table, learning_rate, eps=1e-10):
        self.learning_rate = float(learning_rate)
        self.eps = float(eps)
        self.sq_entities = np.zeros_like(table.entities)
        self.sq_relations = np.zeros_like(table.relations)

    def apply(self, table, d_entities, d_relations):
        self.sq_entities += d_entities * d_entities
        self.sq_relations += d_relations * d_relations
        table.entities -= (
            self.learning_rate * d_entities / np.sqrt(self.sq_entities + self.eps)
        )
        table.relations -= (
            self.learning_rate * d_relations / np.sqrt(self.sq_relations + self.eps)
        )


class DenseGradient:
    """Full-shape gradient buffers; the softmax touches every entity row."""

    def __init__(self, table):
        self.entities = np.zeros_like(table.entities)
        self.relations = np.zeros_like(table.relations)

    def zero(self):
        self.entities[:] = 0.0
        self.relations[:] = 0.0


def softmax_loss(scores, true_ids):
    """Row-wise cross-entropy with max-subtraction; returns (losses, probs)."""
    scores = np.atleast_2d(scores)
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1)
    rows = np.arange(len(scores))
    losses = np.log(total) - shifted[rows, true_ids]
    probs = exp / total[:, None]
    return losses, probs


def loss_and_grad(arch, groups, batch, table, grad, l2=0.0, weight=1.0):
    """Mean both-direction log-loss of a batch; accumulates weight * gradient.

    The L2 term penalizes the three embedding rows of each triple and is
    included in both the returned loss and the gradient.
    """
    batch = np.asarray(batch, dtype=np.int64)
    if batch.ndim != 2 or batch.shape[1] != 3 or not len(batch):
        raise ValueError("batch must be a non-empty (n, 3) array")
    n = len(batch)
    inv_n = weight / n
    total = 0.0
    group_vec = np.asarray(groups.groups)
    batch_groups = group_vec[batch[:, 1]]
    for g in range(groups.n_groups):
        rows = np.flatnonzero(batch_groups == g)
        if not len(rows):
            continue
        sub = batch[rows]
        h_ids, r_ids, t_ids = sub[:, 0], sub[:, 1], sub[:, 2]
        rel_rows = table.relations[r_ids]
        for direction, fixed_ids, true_ids in (
            (REPLACE_TAIL, h_ids, t_ids),
            (REPLACE_HEAD, t_ids, h_ids),
        ):
            fixed_rows = table.entities[fixed_ids]
            q = query_matrix(arch, g, direction, fixed_rows, rel_rows)
            scores = q @ table.entities.T
            losses, probs = softmax_loss(scores, true_ids)
            if not np.isfinite(losses).all():
                bad = int(np.flatnonzero(~np.isfinite(losses))[0])
                raise NumericalError(
                    f"non-finite loss for triple {tuple(map(int, sub[bad]))} "
                    f"({direction})"
                )
            total += float(losses.sum())
            d_scores = probs
            d_scores[np.arange(len(sub)), true_ids] -= 1.0
            d_scores *= inv_n
            grad.entities += d_scores.T @ q
            d_q = d_scores @ table.entities
            d_fixed, d_rel = query_matrix_backward(
                arch, g, direction, fixed_rows, rel_rows, d_q
            )
            np.add.at(grad.entities, fixed_ids, d_fixed)
            np.add.at(grad.relations, r_ids, d_rel)
    if l2:
        h_ids, r_ids, t_ids = batch[:, 0], batch[:, 1], batch[:, 2]
        total += l2 * float(
            np.einsum("nd,nd->", table.entities[h_ids], table.entities[h_ids])
            + np.einsum("nd,nd->", table.relations[r_ids], table.relations[r_ids])
            + np.einsum("nd,nd->", table.entities[t_ids], table.entities[t_ids])
        )
        np.add.at(grad.entities, h_ids, 2.0 * l2 * inv_n * table.entities[h_ids])
        np.add.at(grad.entities, t_ids, 2.0 * l2 * inv_n * table.entities[t_ids])
        np.add.at(grad.relations, r_ids, 2.0 * l2 * inv_n * table.relations[r_ids])
    return total / n


def supernet_step(policy, groups, batch, table, adagrad, cfg, rng, traces=None):
    """One shared-embedding update averaging U sampled architectures.

    Returns (mean loss across the U samples, the traces that were used) so
    the caller can reuse the same samples for reward computation.
    """
    if traces is None:
        traces = [controller.sample(policy, rng) for _ in range(cfg.u_samples)]
    n_ops = policy.n_ops
    n_blocks = (n_ops - 1) // 2
    n_groups = policy.n_steps // (n_blocks * n_blocks)
    grad = DenseGradient(table)
    losses = []
    for trace in traces:
        arch = Architecture(n_groups, n_blocks, tuple(trace.tokens))
        losses.append(
            loss_and_grad(
                arch, groups, batch, table, grad, l2=cfg.l2, weight=1.0 / len(traces)
            )
        )
    adagrad.apply(table, grad.entities, grad.relations)
    if cfg.debug:
        table.assert_finite()
    return float(np.mean(losses)), traces


def trivial_assignment(n_relations, dim):
    """Everything in group 0; for single-group architectures."""
    return GroupAssignment(
        np.zeros(n_relations, dtype=np.int64), np.zeros((1, dim)), 0.0
    )


@dataclass
class TrainResult:
    table: EmbeddingTable
    best_valid_mrr: float
    best_epoch: int
    epochs_run: int
    history: list = field(default_factory=list)
    final_table: EmbeddingTable | None = None
    adagrad: AdagradState | None = None
    evals_since_improvement: int = 0


@dataclass
class ResumeState:
    """Mutable bits needed to continue a standalone run mid-way."""

    table: EmbeddingTable
    adagrad: AdagradState
    next_epoch: int
    best_table: EmbeddingTable
    best_valid_mrr: float
    best_epoch: int
    evals_since_improvement: int


def train_standalone(arch, store, cfg, groups=None, resume=None, progress=None):
    """Train a fixed architecture from scratch with early stopping.

    Validation MRR is measured every ``cfg.eval_every`` epochs; the best
    table is kept, the learning rate is multiplied by ``cfg.lr_decay`` on
    every evaluation without improvement, and training stops after
    ``cfg.patience`` stale evaluations.
    """
    from .evaluation import link_prediction_eval

    cfg.validate()
    if groups is None:
        if arch.n_groups != 1:
            raise ValueError("multi-group architectures need a group assignment")
        groups = trivial_assignment(store.n_relations, 1)
    violations = check_exploitative(arch)
    if violations:
        warnings.warn(
            f"architecture leaves relation blocks unused: {violations}",
            stacklevel=2,
        )
    train = store.split("train")
    if resume is None:
        init_rng = np.random.default_rng([cfg.seed, 0])
        table = EmbeddingTable.initialize(
            store.n_entities, store.n_relations, cfg.dim, arch.n_blocks, init_rng
        )
        adagrad = AdagradState(table, cfg.learning_rate)
        start_epoch = 0
        best_table = table.copy()
        best_mrr = -np.inf
        best_epoch = -1
        stale = 0
    else:
        table = resume.table
        adagrad = resume.adagrad
        start_epoch = resume.next_epoch
        best_table = resume.best_table
        best_mrr = resume.best_valid_mrr
        best_epoch = resume.best_epoch
        stale = resume.evals_since_improvement

    history = []
    epochs_run = start_epoch
    for epoch in range(start_epoch, cfg.epochs):
        rng = np.random.default_rng([cfg.seed, 1, epoch])
        perm = rng.permutation(len(train))
        losses = []
        for lo in range(0, len(perm), cfg.batch_size):
            batch = train[perm[lo : lo + cfg.batch_size]]
            grad = DenseGradient(table)
            losses.append(loss_and_grad(arch, groups, batch, table, grad, l2=cfg.l2))
            adagrad.apply(table, grad.entities, grad.relations)
        if cfg.debug:
            table.assert_finite()
        epochs_run = epoch + 1
        if (epoch + 1) % cfg.eval_every and (epoch + 1) != cfg.epochs:
            continue
        report = link_prediction_eval(
            arch, groups, table, store, split="valid", tie_rule=cfg.tie_rule
        )
        entry = {
            "epoch": epoch,
            "mean_loss": float(np.mean(losses)),
            "valid_mrr": report.mrr,
        }
        history.append(entry)
        if progress is not None:
            progress(entry)
        log.info(
            "epoch %d: loss %.4f, valid MRR %.4f", epoch, entry["mean_loss"], report.mrr
        )
        if report.mrr > best_mrr:
            best_mrr = report.mrr
            best_epoch = epoch
            best_table = table.copy()
            stale = 0
        else:
            stale += 1
            adagrad.learning_rate *= cfg.lr_decay
            if stale >= cfg.patience:
                log.info("early stop at epoch %d", epoch)
                break
    return TrainResult(
        table=best_table,
        best_valid_mrr=float(best_mrr),
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        history=history,
        final_table=table,
        adagrad=adagrad,
        evals_since_improvement=stale,
    )