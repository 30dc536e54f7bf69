"""Triple stores: TSV loading, synthetic graph generation, relation patterns.

A dataset is a directory with train.txt / valid.txt / test.txt, each line
holding "head<TAB>relation<TAB>tail". Names are mapped to dense integer ids
in first-appearance order (train, then valid, then test), and the union of
all three splits is indexed so that evaluation can filter known true triples
out of candidate sets.
"""

import collections
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
SPLIT_FILES = {name: f"{name}.txt" for name in SPLITS}

# Directions for ranking queries: replace the tail (h, r, ?) or the head (?, r, t).
REPLACE_TAIL = "replace_tail"
REPLACE_HEAD = "replace_head"
DIRECTIONS = (REPLACE_TAIL, REPLACE_HEAD)

FAMILY_PATTERNS = ("symmetric", "anti-symmetric", "inverse-pair", "general")


class TripleStore:
    """Immutable, indexed collection of (head, relation, tail) id triples.

    Splits are kept as int64 arrays of shape (n, 3). The constructor
    validates id ranges and split disjointness and builds the known-truth
    index used for filtered ranking.
    """

    def __init__(self, entity_names, relation_names, train, valid, test):
        self.entity_names = list(entity_names)
        self.relation_names = list(relation_names)
        self._splits = {}
        for name, triples in (("train", train), ("valid", valid), ("test", test)):
            arr = np.asarray(triples, dtype=np.int64)
            if arr.size == 0:
                arr = arr.reshape(0, 3)
            if arr.ndim != 2 or arr.shape[1] != 3:
                raise DataError(f"{name} split must have shape (n, 3), got {arr.shape}")
            arr = arr.copy()
            arr.setflags(write=False)
            self._splits[name] = arr
        self._validate_ids()
        self._build_index()

    def _validate_ids(self):
        n_e, n_r = self.n_entities, self.n_relations
        for name, arr in self._splits.items():
            if arr.size == 0:
                continue
            if arr[:, [0, 2]].min() < 0 or arr[:, [0, 2]].max() >= n_e:
                raise DataError(f"{name} split has entity ids outside [0, {n_e})")
            if arr[:, 1].min() < 0 or arr[:, 1].max() >= n_r:
                raise DataError(f"{name} split has relation ids outside [0, {n_r})")

    def _build_index(self):
        seen = {}
        for name in SPLITS:
            for h, r, t in self._splits[name]:
                key = (int(h), int(r), int(t))
                if key in seen and seen[key] != name:
                    raise DataError(
                        f"triple {key} appears in both {seen[key]} and {name}"
                    )
                seen[key] = name
        self.known_index = frozenset(seen)
        tails = collections.defaultdict(list)
        heads = collections.defaultdict(list)
        for h, r, t in self.known_index:
            tails[(h, r)].append(t)
            heads[(r, t)].append(h)
        self._known_tails = {
            k: np.array(sorted(v), dtype=np.int64) for k, v in tails.items()
        }
        self._known_heads = {
            k: np.array(sorted(v), dtype=np.int64) for k, v in heads.items()
        }
        self._empty = np.empty(0, dtype=np.int64)

    @property
    def n_entities(self):
        return len(self.entity_names)

    @property
    def n_relations(self):
        return len(self.relation_names)

    def split(self, name):
        if name not in self._splits:
            raise DataError(f"unknown split {name!r}, expected one of {SPLITS}")
        return self._splits[name]

    def contains(self, h, r, t):
        return (int(h), int(r), int(t)) in self.known_index

    def known_tails(self, h, r):
        """All t with (h, r, t) in any split, sorted ascending."""
        return self._known_tails.get((int(h), int(r)), self._empty)

    def known_heads(self, r, t):
        """All h with (h, r, t) in any split, sorted ascending."""
        return self._known_heads.get((int(r), int(t)), self._empty)

    def filtered_candidates(self, triple, direction):
        """Candidate entity ids for a ranking query with known truths removed.

        The true answer from ``triple`` is always kept; every other entity
        that forms a known true triple in the queried slot is dropped.
        """
        h, r, t = (int(x) for x in triple)
        if direction == REPLACE_TAIL:
            exclude, keep = self.known_tails(h, r), t
        elif direction == REPLACE_HEAD:
            exclude, keep = self.known_heads(r, t), h
        else:
            raise ValueError(f"unknown direction {direction!r}")
        mask = np.ones(self.n_entities, dtype=bool)
        mask[exclude] = False
        mask[keep] = True
        return np.flatnonzero(mask)

    def __repr__(self):
        sizes = ", ".join(f"{k}={len(v)}" for k, v in self._splits.items())
        return (
            f"TripleStore(entities={self.n_entities}, "
            f"relations={self.n_relations}, {sizes})"
        )


def load_dataset(directory):
    """Read a train/valid/test TSV directory into a TripleStore."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"dataset directory not found: {directory}")
    entity_ids, relation_ids = {}, {}
    entity_names, relation_names = [], []

    def intern(table, names, name):
        if name not in table:
            table[name] = len(names)
            names.append(name)
        return table[name]

    splits = {}
    for split in SPLITS:
        path = directory / SPLIT_FILES[split]
        if not path.is_file():
            raise DataError(f"missing split file: {path}")
        rows = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 3:
                    raise DataError(
                        f"{path}:{lineno}: expected 3 tab-separated fields, "
                        f"got {len(fields)}"
                    )
                h, r, t = fields
                rows.append(
                    (
                        intern(entity_ids, entity_names, h),
                        intern(relation_ids, relation_names, r),
                        intern(entity_ids, entity_names, t),
                    )
                )
        if not rows:
            raise DataError(f"empty split file: {path}")
        splits[split] = np.array(rows, dtype=np.int64)
    store = TripleStore(entity_names, relation_names, **splits)
    log.info("loaded %s from %s", store, directory)
    return store


def save_dataset(store, directory):
    """Write a TripleStore back out as a train/valid/test TSV directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split in SPLITS:
        with open(directory / SPLIT_FILES[split], "w", encoding="utf-8") as fh:
            for h, r, t in store.split(split):
                fh.write(
                    f"{store.entity_names[h]}\t"
                    f"{store.relation_names[r]}\t"
                    f"{store.entity_names[t]}\n"
                )


@dataclass(frozen=True)
class RelationFamily:
    """A group of generated relations sharing one structural pattern."""

    pattern: str
    count: int
    facts: int


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the synthetic graph generator."""

    n_entities: int
    families: tuple
    seed: int = 0

    def validate(self):
        if self.n_entities < 2:
            raise ConfigError("synthetic graphs need at least 2 entities")
        if not self.families:
            raise ConfigError("synthetic spec has no relation families")
        max_pairs = self.n_entities * (self.n_entities - 1) // 2
        for fam in self.families:
            if fam.pattern not in FAMILY_PATTERNS:
                raise ConfigError(
                    f"unknown family pattern {fam.pattern!r}, "
                    f"expected one of {FAMILY_PATTERNS}"
                )
            if fam.count < 1:
                raise ConfigError("family count must be positive")
            if fam.pattern == "inverse-pair" and fam.count % 2:
                raise ConfigError("inverse-pair family count must be even")
            if fam.facts < 1:
                raise ConfigError("family facts must be positive")
            if fam.facts > self.n_entities**2:
                raise ConfigError(
                    f"family asks for {fam.facts} facts but only "
                    f"{self.n_entities**2} entity pairs exist"
                )
            if fam.facts > max_pairs:
                raise ConfigError(
                    f"family asks for {fam.facts} facts but only {max_pairs} "
                    "distinct unordered pairs exist"
                )
            if fam.pattern == "anti-symmetric":
                cap = max_antisymmetric_facts(self.n_entities)
                if fam.facts > cap:
                    raise ConfigError(
                        f"family asks for {fam.facts} facts but the layered "
                        f"anti-symmetric construction only has {cap} edges"
                    )
            if fam.pattern == "symmetric":
                cap = max_symmetric_facts(self.n_entities)
                if fam.facts > cap:
                    raise ConfigError(
                        f"family asks for {fam.facts} facts but the clustered "
                        f"symmetric construction only has {cap} pairs"
                    )


def _anti_level_sizes(n_entities):
    """Level widths for the layered anti-symmetric construction."""
    n_levels = max(2, min(20, n_entities // 5))
    base = n_entities // n_levels
    sizes = np.full(n_levels, base, dtype=np.int64)
    sizes[: n_entities - base * n_levels] += 1
    return sizes


def _n_communities(n_entities):
    """Community count for the clustered symmetric construction."""
    return max(2, min(20, n_entities // 10))


def max_symmetric_facts(n_entities):
    """Number of within-community pairs available to one relation."""
    k = _n_communities(n_entities)
    base = n_entities // k
    sizes = np.full(k, base, dtype=np.int64)
    sizes[: n_entities - base * k] += 1
    return int((sizes * (sizes - 1) // 2).sum())


def max_antisymmetric_facts(n_entities):
    """Number of adjacent-level ordered pairs available to one relation."""
    sizes = _anti_level_sizes(n_entities)
    return int((sizes[:-1] * sizes[1:]).sum())


def _distinct_pairs(rng, n_entities, count):
    """Sample ``count`` distinct unordered entity pairs, randomly oriented."""
    max_pairs = n_entities * (n_entities - 1) // 2
    if count > max_pairs // 2 and n_entities <= 4096:
        # Dense regime: enumerate all pairs and subsample.
        a, b = np.triu_indices(n_entities, k=1)
        idx = rng.choice(max_pairs, size=count, replace=False)
        pairs = np.stack([a[idx], b[idx]], axis=1)
    else:
        seen = set()
        pairs = []
        while len(pairs) < count:
            draw = rng.integers(0, n_entities, size=(count, 2))
            for x, y in draw:
                if x == y or len(pairs) >= count:
                    continue
                key = (int(min(x, y)), int(max(x, y)))
                if key in seen:
                    continue
                seen.add(key)
                pairs.append(key)
        pairs = np.array(pairs, dtype=np.int64)
    flip = rng.random(count) < 0.5
    pairs = pairs.copy()
    pairs[flip] = pairs[flip][:, ::-1]
    return pairs


def _split_counts(n):
    """Deterministic 80/10/10 allocation: (train, valid, test)."""
    n_test = n // 10
    n_valid = n // 10
    return n - n_valid - n_test, n_valid, n_test


def generate_synthetic(spec):
    """Generate a TripleStore with controlled relation patterns.

    Evaluation triples are always inferable from the training graph:
    symmetric relations link entities within hidden communities that the
    training edges expose, anti-symmetric edges follow a hidden entity
    ranking that the training edges pin down, and inverse pairs place the
    partner triple in train. The same seed always yields the same store.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    entity_names = [f"e{i}" for i in range(spec.n_entities)]
    relation_names = []
    train, valid, test = [], [], []

    def symmetric_pair_pool():
        # One entity partition per family: symmetric edges link entities in
        # the same community. Held-out pairs are then inferable from the
        # community structure the training edges expose, and sibling
        # relations share geometry the same way sibling hierarchies do.
        member = rng.permutation(spec.n_entities) % _n_communities(spec.n_entities)
        pools = []
        for c in np.unique(member):
            ids = np.flatnonzero(member == c)
            a, b = np.triu_indices(len(ids), k=1)
            pools.append(np.stack([ids[a], ids[b]], axis=1))
        return np.concatenate(pools)

    def emit_symmetric(r, facts, pool):
        idx = rng.choice(len(pool), size=facts, replace=False)
        pairs = pool[idx]
        flip = rng.random(facts) < 0.5
        pairs = pairs.copy()
        pairs[flip] = pairs[flip][:, ::-1]
        n_tr, n_va, n_te = _split_counts(facts)
        for h, t in pairs[:n_te]:
            test.append((h, r, t))
        for h, t in pairs[n_te : n_te + n_va]:
            valid.append((h, r, t))
        for h, t in pairs[n_te + n_va :]:
            train.append((h, r, t))
            train.append((t, r, h))

    def anti_edge_pool():
        # One hidden entity ranking per family: edges always point from one
        # level to the next, so direction is predictable from the training
        # graph while the reverse of a fact is never true. Relations in the
        # family describe the same hierarchy through different edge samples,
        # the way sibling relations in real graphs do.
        order = rng.permutation(spec.n_entities)
        bounds = np.cumsum(_anti_level_sizes(spec.n_entities))
        levels = np.split(order, bounds[:-1])
        heads, tails = [], []
        for lo, hi in zip(levels[:-1], levels[1:]):
            a, b = np.meshgrid(lo, hi, indexing="ij")
            heads.append(a.ravel())
            tails.append(b.ravel())
        return np.concatenate(heads), np.concatenate(tails)

    def emit_antisymmetric(r, facts, pool):
        heads, tails = pool
        idx = rng.choice(len(heads), size=facts, replace=False)
        pairs = np.stack([heads[idx], tails[idx]], axis=1)
        n_tr, n_va, n_te = _split_counts(facts)
        for h, t in pairs[:n_te]:
            test.append((h, r, t))
        for h, t in pairs[n_te : n_te + n_va]:
            valid.append((h, r, t))
        for h, t in pairs[n_te + n_va :]:
            train.append((h, r, t))

    def emit_inverse(ra, rb, facts):
        pairs = _distinct_pairs(rng, spec.n_entities, facts)
        n_tr, n_va, n_te = _split_counts(facts)
        swap = rng.random(facts) < 0.5
        for (h, t), s in zip(pairs[:n_te], swap[:n_te]):
            fwd, rev = (h, ra, t), (t, rb, h)
            eval_triple, train_triple = (rev, fwd) if s else (fwd, rev)
            test.append(eval_triple)
            train.append(train_triple)
        for (h, t), s in zip(pairs[n_te : n_te + n_va], swap[n_te : n_te + n_va]):
            fwd, rev = (h, ra, t), (t, rb, h)
            eval_triple, train_triple = (rev, fwd) if s else (fwd, rev)
            valid.append(eval_triple)
            train.append(train_triple)
        for h, t in pairs[n_te + n_va :]:
            train.append((h, ra, t))
            train.append((t, rb, h))

    def emit_general(r, facts):
        pairs = _distinct_pairs(rng, spec.n_entities, facts)
        n_both = int(round(0.3 * facts))
        for h, t in pairs[:n_both]:
            train.append((h, r, t))
            train.append((t, r, h))
        singles = pairs[n_both:]
        n_tr, n_va, n_te = _split_counts(len(singles))
        for h, t in singles[:n_te]:
            test.append((h, r, t))
        for h, t in singles[n_te : n_te + n_va]:
            valid.append((h, r, t))
        for h, t in singles[n_te + n_va :]:
            train.append((h, r, t))

    for fam_idx, fam in enumerate(spec.families):
        if fam.pattern == "inverse-pair":
            for k in range(fam.count // 2):
                ra = len(relation_names)
                relation_names.append(f"inv{fam_idx}_{k}a")
                relation_names.append(f"inv{fam_idx}_{k}b")
                emit_inverse(ra, ra + 1, fam.facts)
            continue
        prefix = {"symmetric": "sym", "anti-symmetric": "anti", "general": "gen"}[
            fam.pattern
        ]
        if fam.pattern == "anti-symmetric":
            pool = anti_edge_pool()
        elif fam.pattern == "symmetric":
            pool = symmetric_pair_pool()
        else:
            pool = None
        for k in range(fam.count):
            r = len(relation_names)
            relation_names.append(f"{prefix}{fam_idx}_{k}")
            if fam.pattern == "symmetric":
                emit_symmetric(r, fam.facts, pool)
            elif fam.pattern == "anti-symmetric":
                emit_antisymmetric(r, fam.facts, pool)
            else:
                emit_general(r, fam.facts)

    if not valid or not test:
        raise ConfigError(
            "synthetic spec produced an empty valid or test split; "
            "increase facts per relation (need at least 10)"
        )
    return TripleStore(entity_names, relation_names, train, valid, test)


@dataclass(frozen=True)
class RelationPattern:
    """Classification of one relation from training co-occurrence counts."""

    label: str
    symmetry_ratio: float
    inverse_of: int | None = None


def classify_relation_patterns(
    store, symmetric_min=0.8, antisymmetric_max=0.05, inverse_min=0.8
):
    """Label every relation from training data alone.

    For relation r, the symmetry ratio is the fraction of its training
    triples whose reversal is also a training triple of r. Ratios at or
    above ``symmetric_min`` give "symmetric", at or below
    ``antisymmetric_max`` give "anti-symmetric", anything else "general".
    A non-symmetric relation whose triples reverse into some other single
    relation at rate >= ``inverse_min`` is labelled "inverse" instead.
    """
    train = store.split("train")
    by_pair = collections.defaultdict(list)
    for h, r, t in train:
        by_pair[(int(h), int(t))].append(int(r))
    reverse_counts = {r: collections.Counter() for r in range(store.n_relations)}
    totals = collections.Counter(int(r) for r in train[:, 1])
    for h, r, t in train:
        for r2 in by_pair.get((int(t), int(h)), ()):
            reverse_counts[int(r)][r2] += 1

    patterns = {}
    for r in range(store.n_relations):
        n = totals[r]
        if n == 0:
            log.warning("relation %d has no training triples", r)
            patterns[r] = RelationPattern("general", 0.0)
            continue
        ratio = reverse_counts[r][r] / n
        inverse_of = None
        best = 0.0
        for r2, c in reverse_counts[r].items():
            if r2 != r and c / n >= inverse_min and c / n > best:
                inverse_of, best = r2, c / n
        if ratio >= symmetric_min:
            label = "symmetric"
        elif inverse_of is not None:
            label = "inverse"
        elif ratio <= antisymmetric_max:
            label = "anti-symmetric"
        else:
            label = "general"
        patterns[r] = RelationPattern(label, ratio, inverse_of)
    return patterns
