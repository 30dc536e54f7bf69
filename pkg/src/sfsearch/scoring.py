"""Block-bilinear scoring and its analytic gradients.

A score is a sum of multiplicative items triple_dot(h_i, o, t_j) where o is
the zero vector or a signed block of the relation embedding. Ranking against
many candidates goes through a query vector: for tail queries,
q = sum_items sign * (h_i * r_m) placed in tail-block j, so each candidate
costs one O(d) dot product.
"""

import numpy as np

from .errors import NumericalError
from .datasets import REPLACE_TAIL, REPLACE_HEAD


class EmbeddingTable:
    """Entity and relation embeddings partitioned into equal blocks."""

    def __init__(self, entities, relations, n_blocks):
        self.entities = np.asarray(entities)
        self.relations = np.asarray(relations)
        if self.entities.ndim != 2 or self.relations.ndim != 2:
            raise ValueError("embedding matrices must be 2-d")
        if self.entities.shape[1] != self.relations.shape[1]:
            raise ValueError("entity and relation dimensions differ")
        self.dim = self.entities.shape[1]
        self.n_blocks = int(n_blocks)
        if self.dim % self.n_blocks:
            raise ValueError(
                f"dimension {self.dim} not divisible by {self.n_blocks} blocks"
            )
        self.block_width = self.dim // self.n_blocks

    @classmethod
    def initialize(cls, n_entities, n_relations, dim, n_blocks, rng, dtype=np.float64):
        """Fresh uniform(-0.5/sqrt(d), 0.5/sqrt(d)) embeddings."""
        scale = 0.5 / np.sqrt(dim)
        entities = rng.uniform(-scale, scale, size=(n_entities, dim)).astype(dtype)
        relations = rng.uniform(-scale, scale, size=(n_relations, dim)).astype(dtype)
        return cls(entities, relations, n_blocks)

    @property
    def n_entities(self):
        return self.entities.shape[0]

    @property
    def n_relations(self):
        return self.relations.shape[0]

    def block_slice(self, m):
        w = self.block_width
        return slice(m * w, (m + 1) * w)

    def copy(self):
        return EmbeddingTable(self.entities.copy(), self.relations.copy(), self.n_blocks)

    def assert_finite(self):
        if not np.isfinite(self.entities).all() or not np.isfinite(self.relations).all():
            raise NumericalError("non-finite values in embedding table")


def triple_dot(a, b, c):
    """Element-wise three-way inner product sum_x a_x * b_x * c_x."""
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    if not (a.shape == b.shape == c.shape):
        raise ValueError(f"length mismatch: {a.shape}, {b.shape}, {c.shape}")
    return float(np.einsum("...x,...x,...x->...", a, b, c))


def score(arch, group, h, r, t, table):
    """Score one triple under one group's scoring function."""
    hv = table.entities[h]
    tv = table.entities[t]
    rv = table.relations[r]
    total = 0.0
    for i, j, m, sign in arch.group_items(group):
        si, sj, sm = table.block_slice(i), table.block_slice(j), table.block_slice(m)
        total += sign * np.dot(hv[si] * rv[sm], tv[sj])
    return float(total)


def query_matrix(arch, group, direction, fixed_rows, relation_rows, out=None):
    """Query vectors for a batch of ranking queries, one row per query.

    For tail queries ``fixed_rows`` holds head embeddings and the score of
    candidate t' is query . E[t']; head queries are the transpose case.
    """
    fixed_rows = np.atleast_2d(fixed_rows)
    relation_rows = np.atleast_2d(relation_rows)
    if out is None:
        out = np.zeros_like(fixed_rows)
    else:
        out[:] = 0.0
    for i, j, m, sign in arch.group_items(group):
        si, sj, sm = table_slices(table_width(fixed_rows, arch), i, j, m)
        if direction == REPLACE_TAIL:
            term = fixed_rows[:, si] * relation_rows[:, sm]
            if sign < 0:
                out[:, sj] -= term
            else:
                out[:, sj] += term
        elif direction == REPLACE_HEAD:
            term = relation_rows[:, sm] * fixed_rows[:, sj]
            if sign < 0:
                out[:, si] -= term
            else:
                out[:, si] += term
        else:
            raise ValueError(f"unknown direction {direction!r}")
    return out


def query_matrix_backward(arch, group, direction, fixed_rows, relation_rows, d_query):
    """Backprop through query_matrix: returns (d_fixed, d_relation)."""
    fixed_rows = np.atleast_2d(fixed_rows)
    relation_rows = np.atleast_2d(relation_rows)
    d_query = np.atleast_2d(d_query)
    d_fixed = np.zeros_like(fixed_rows)
    d_rel = np.zeros_like(relation_rows)
    for i, j, m, sign in arch.group_items(group):
        si, sj, sm = table_slices(table_width(fixed_rows, arch), i, j, m)
        if direction == REPLACE_TAIL:
            d_fixed[:, si] += sign * relation_rows[:, sm] * d_query[:, sj]
            d_rel[:, sm] += sign * fixed_rows[:, si] * d_query[:, sj]
        else:
            d_fixed[:, sj] += sign * relation_rows[:, sm] * d_query[:, si]
            d_rel[:, sm] += sign * fixed_rows[:, sj] * d_query[:, si]
    return d_fixed, d_rel


def table_width(rows, arch):
    d = rows.shape[1]
    if d % arch.n_blocks:
        raise ValueError(f"dimension {d} not divisible by {arch.n_blocks} blocks")
    return d // arch.n_blocks


def table_slices(w, i, j, m):
    return (
        slice(i * w, (i + 1) * w),
        slice(j * w, (j + 1) * w),
        slice(m * w, (m + 1) * w),
    )


def score_all_candidates(arch, group, fixed_id, relation_id, direction, candidates, table):
    """Scores of every candidate entity for one ranking query."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        raise ValueError("empty candidate list")
    q = query_matrix(
        arch,
        group,
        direction,
        table.entities[fixed_id][None, :],
        table.relations[relation_id][None, :],
    )[0]
    return table.entities[candidates] @ q


class SparseGradient:
    """Per-row gradient accumulator keyed by entity / relation id."""

    def __init__(self, dim, dtype=np.float64):
        self.dim = dim
        self.dtype = dtype
        self.entity_rows = {}
        self.relation_rows = {}

    def _row(self, rows, idx):
        idx = int(idx)
        if idx not in rows:
            rows[idx] = np.zeros(self.dim, dtype=self.dtype)
        return rows[idx]

    def add_entity(self, idx, vec):
        self._row(self.entity_rows, idx)[:] += vec

    def add_relation(self, idx, vec):
        self._row(self.relation_rows, idx)[:] += vec

    def entity_grad(self, idx):
        return self.entity_rows.get(int(idx), np.zeros(self.dim, dtype=self.dtype))

    def relation_grad(self, idx):
        return self.relation_rows.get(int(idx), np.zeros(self.dim, dtype=self.dtype))


def grad_triple(arch, group, triple, upstream, table, acc):
    """Accumulate upstream * d(score)/d(embeddings) into ``acc``.

    The head and tail gradients are themselves query vectors; the relation
    gradient of block m collects sign * (h_i * t_j) over the items using m.
    """
    if upstream == 0.0:
        return
    h, r, t = (int(x) for x in triple)
    hv, tv, rv = table.entities[h], table.entities[t], table.relations[r]
    dh = np.zeros(table.dim, dtype=hv.dtype)
    dt = np.zeros(table.dim, dtype=hv.dtype)
    dr = np.zeros(table.dim, dtype=hv.dtype)
    for i, j, m, sign in arch.group_items(group):
        si, sj, sm = table.block_slice(i), table.block_slice(j), table.block_slice(m)
        dh[si] += sign * rv[sm] * tv[sj]
        dt[sj] += sign * hv[si] * rv[sm]
        dr[sm] += sign * hv[si] * tv[sj]
    acc.add_entity(h, upstream * dh)
    acc.add_entity(t, upstream * dt)
    acc.add_relation(r, upstream * dr)
