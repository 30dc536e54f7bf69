"""Shared fixtures and small hand-built stores used across the suite."""

import numpy as np
import pytest

from sfsearch.datasets import (
    RelationFamily,
    SyntheticSpec,
    TripleStore,
    generate_synthetic,
)
from sfsearch.scoring import EmbeddingTable
from sfsearch.training import trivial_assignment


def store_from_triples(n_entities, n_relations, train, valid=None, test=None):
    """TripleStore over generic names; splits may be empty."""
    entities = [f"e{i}" for i in range(n_entities)]
    relations = [f"r{i}" for i in range(n_relations)]
    if valid is None:
        valid = []
    if test is None:
        test = []
    return TripleStore(entities, relations, train, valid, test)


def random_table(rng, n_entities, n_relations, dim, n_blocks):
    return EmbeddingTable(
        rng.standard_normal((n_entities, dim)),
        rng.standard_normal((n_relations, dim)),
        n_blocks,
    )


def single_group(n_relations, dim=1):
    return trivial_assignment(n_relations, dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_store():
    """6 entities, 2 relations, a few triples in every split."""
    train = [(0, 0, 1), (1, 0, 2), (2, 1, 3), (3, 1, 4), (4, 0, 5), (5, 1, 0)]
    valid = [(0, 0, 3), (2, 1, 5)]
    test = [(1, 1, 4), (3, 0, 0)]
    return store_from_triples(6, 2, train, valid, test)


@pytest.fixture(scope="session")
def mixed_store():
    """Synthetic graph with one family of each pattern, reused read-only."""
    spec = SyntheticSpec(
        n_entities=60,
        families=(
            RelationFamily("symmetric", 1, 120),
            RelationFamily("anti-symmetric", 1, 120),
            RelationFamily("inverse-pair", 2, 120),
            RelationFamily("general", 1, 120),
        ),
        seed=7,
    )
    return generate_synthetic(spec)
