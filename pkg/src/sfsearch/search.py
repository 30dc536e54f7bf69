"""Alternating search: shared embeddings, relation groups, and the policy.

Each training mini-batch drives one supernet embedding step over U sampled
architectures, one reward measurement on a validation mini-batch, and one
REINFORCE update of the policy. Relation groups are refreshed by k-means
once per epoch. Deriving the final architecture samples K candidates and
keeps the one with the highest full-candidate validation reward.
"""

import csv
import logging
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import controller
from .datasets import REPLACE_HEAD, REPLACE_TAIL
from .errors import NumericalError
from .evaluation import ranks_for_queries
from .grouping import (
    GroupAssignment,
    init_assignments,
    recentered,
    update_assignments,
)
from .scoring import EmbeddingTable
from .search_space import Architecture, OperationSet, check_exploitative
from .training import AdagradState, TrainConfig, supernet_step

log = logging.getLogger(__name__)


@dataclass
class SearchConfig:
    n_groups: int = 2
    n_blocks: int = 2
    dim: int = 32
    epochs: int = 20
    batch_size: int = 512
    u_samples: int = 2
    learning_rate: float = 0.1
    l2: float = 1e-3
    reward_batch: int = 256
    reward_candidates: int = 500
    k_derive: int = 16
    seed: int = 0
    single_level: bool = False
    freeze_groups: bool = False
    constraint_scope: str = "per_group"
    ctrl_hidden: int = 64
    ctrl_embed: int = 32
    ctrl_lr: float = 1e-3
    baseline_decay: float = 0.9
    entropy_weight: float = 0.0
    debug: bool = False

    def validate(self):
        if self.n_groups < 1 or self.n_blocks < 1:
            raise ValueError("n_groups and n_blocks must be positive")
        if self.k_derive < 1:
            raise ValueError("k_derive must be >= 1")
        if self.dim % self.n_blocks:
            raise ValueError(
                f"dim {self.dim} not divisible by n_blocks {self.n_blocks}"
            )
        if self.constraint_scope not in ("per_group", "union"):
            raise ValueError(f"unknown constraint scope {self.constraint_scope!r}")

    def train_config(self):
        return TrainConfig(
            dim=self.dim,
            batch_size=self.batch_size,
            u_samples=self.u_samples,
            learning_rate=self.learning_rate,
            l2=self.l2,
            seed=self.seed,
            debug=self.debug,
        )


@dataclass
class LogRow:
    wall_seconds: float
    epoch: int
    step: int
    mean_loss: float
    mean_reward: float
    baseline: float


@dataclass
class SearchResult:
    policy: controller.PolicyState
    groups: GroupAssignment
    table: EmbeddingTable
    log: list = field(default_factory=list)
    adagrad: AdagradState | None = None
    adam: controller.AdamState | None = None
    wall_seconds: float = 0.0


def reward(
    arch,
    groups,
    table,
    store,
    batch,
    n_candidates=0,
    rng=None,
    constraint_scope="per_group",
):
    """Mean reciprocal rank of a triple batch in both directions, in [0, 1].

    Architectures that leave any relation block unused receive exactly 0.
    Ranks use the optimistic tie rule (1 + #strictly-higher) against
    filtered candidates, sampled down to ``n_candidates`` when positive.
    """
    batch = np.asarray(batch, dtype=np.int64)
    if not len(batch):
        raise ValueError("empty reward batch")
    if check_exploitative(arch, scope=constraint_scope):
        return 0.0
    ranks = np.concatenate(
        [
            ranks_for_queries(
                arch, groups, table, store, batch, direction,
                tie_rule="optimistic", n_candidates=n_candidates, rng=rng,
            )
            for direction in (REPLACE_TAIL, REPLACE_HEAD)
        ]
    )
    return float((1.0 / ranks).mean())


def architecture_of(trace, n_groups, n_blocks):
    return Architecture(n_groups, n_blocks, tuple(trace.tokens))


def search(store, cfg, group_init_vectors=None):
    """Run the full alternating search loop and return all trained state.

    ``group_init_vectors`` optionally seeds the relation grouping from an
    external embedding matrix (used together with ``freeze_groups``).
    """
    cfg.validate()
    start = time.perf_counter()
    n_tokens = cfg.n_groups * cfg.n_blocks**2
    n_ops = OperationSet(cfg.n_blocks).size
    table = EmbeddingTable.initialize(
        store.n_entities,
        store.n_relations,
        cfg.dim,
        cfg.n_blocks,
        np.random.default_rng([cfg.seed, 0]),
    )
    adagrad = AdagradState(table, cfg.learning_rate)
    if group_init_vectors is not None:
        if not cfg.freeze_groups:
            raise ValueError("external group initialization requires freeze_groups")
        vectors = np.asarray(group_init_vectors, dtype=np.float64)
        if vectors.shape[0] != store.n_relations:
            raise ValueError(
                "group init vectors must have one row per relation"
            )
        groups = init_assignments(vectors, cfg.n_groups, np.random.default_rng([cfg.seed, 2]))
    else:
        groups = init_assignments(
            table.relations, cfg.n_groups, np.random.default_rng([cfg.seed, 2])
        )
    policy = controller.PolicyState(
        n_tokens,
        n_ops,
        hidden_size=cfg.ctrl_hidden,
        embed_size=cfg.ctrl_embed,
        baseline_decay=cfg.baseline_decay,
        seed=[cfg.seed, 3],
    )
    adam = controller.AdamState(policy.params, learning_rate=cfg.ctrl_lr)
    train_cfg = cfg.train_config()
    train = store.split("train")
    valid = store.split("valid")
    rows = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, 4, epoch])
        perm = rng.permutation(len(train))
        for step, lo in enumerate(range(0, len(perm), cfg.batch_size)):
            batch = train[perm[lo : lo + cfg.batch_size]]
            mean_loss, traces = supernet_step(
                policy, groups, batch, table, adagrad, train_cfg, rng
            )
            if cfg.single_level:
                reward_triples = batch
            else:
                take = min(cfg.reward_batch, len(valid))
                reward_triples = valid[rng.choice(len(valid), size=take, replace=False)]
            for trace in traces:
                arch = architecture_of(trace, cfg.n_groups, cfg.n_blocks)
                trace.reward = reward(
                    arch,
                    groups,
                    table,
                    store,
                    reward_triples,
                    n_candidates=cfg.reward_candidates,
                    rng=rng,
                    constraint_scope=cfg.constraint_scope,
                )
            controller.reinforce_update(
                policy, traces, adam, entropy_weight=cfg.entropy_weight
            )
            rows.append(
                LogRow(
                    wall_seconds=time.perf_counter() - start,
                    epoch=epoch,
                    step=step,
                    mean_loss=mean_loss,
                    mean_reward=float(np.mean([t.reward for t in traces])),
                    baseline=policy.baseline,
                )
            )
        if not cfg.freeze_groups:
            groups = update_assignments(table.relations, groups)
        elif groups.centroids.shape[1] != table.relations.shape[1]:
            # external init vectors may live in a different dimension
            groups = recentered(groups, table.relations)
        log.info(
            "search epoch %d: loss %.4f, reward %.4f, baseline %.4f",
            epoch,
            rows[-1].mean_loss,
            rows[-1].mean_reward,
            rows[-1].baseline,
        )
    return SearchResult(
        policy=policy,
        groups=groups,
        table=table,
        log=rows,
        adagrad=adagrad,
        adam=adam,
        wall_seconds=time.perf_counter() - start,
    )


def derive(policy, groups, table, store, cfg, max_validation=10_000):
    """Sample K architectures and keep the best by full-candidate reward.

    Rewards are measured on the whole validation split (subsampled past
    ``max_validation`` triples). Returns (architecture, rewards).
    """
    rng = np.random.default_rng([cfg.seed, 5])
    valid = store.split("valid")
    if len(valid) > max_validation:
        valid = valid[rng.choice(len(valid), size=max_validation, replace=False)]
    archs = []
    rewards = []
    for _ in range(cfg.k_derive):
        trace = controller.sample(policy, rng)
        arch = architecture_of(trace, cfg.n_groups, cfg.n_blocks)
        archs.append(arch)
        rewards.append(
            reward(
                arch, groups, table, store, valid,
                constraint_scope=cfg.constraint_scope,
            )
        )
    if max(rewards) == 0.0 and all(
        check_exploitative(a, scope=cfg.constraint_scope) for a in archs
    ):
        raise NumericalError(
            f"all {cfg.k_derive} sampled architectures violate the "
            "block-coverage constraint; increase k_derive or search longer"
        )
    best = int(np.argmax(rewards))
    log.info(
        "derive: best of %d samples has reward %.4f (%s)",
        cfg.k_derive,
        rewards[best],
        archs[best].to_line(),
    )
    return archs[best], rewards


def write_search_log(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "wall_seconds", "epoch", "step", "mean_loss", "mean_reward", "baseline",
            ],
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(asdict(row))
