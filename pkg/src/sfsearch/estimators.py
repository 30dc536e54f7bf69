"""Estimator-style wrappers around search and standalone training.

Both estimators follow scikit-learn conventions: constructor arguments are
stored untouched, ``fit`` learns attributes with trailing underscores, and
``get_params`` / ``set_params`` / ``clone`` work as usual. ``X`` is a
TripleStore for fitting and an (n, 3) integer id array for prediction.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .datasets import TripleStore
from .evaluation import link_prediction_eval, score_triples
from .grouping import GroupAssignment
from .search import SearchConfig, derive, search
from .search_space import Architecture, encode_known
from .training import TrainConfig, train_standalone, trivial_assignment


def check_store(X):
    """Validate that X quacks like a TripleStore."""
    if isinstance(X, TripleStore):
        return X
    needed = ("split", "n_entities", "n_relations", "filtered_candidates")
    if all(hasattr(X, attr) for attr in needed):
        return X
    raise TypeError(
        f"expected a TripleStore (or equivalent), got {type(X).__name__}"
    )


def check_triples(X, n_entities, n_relations):
    """Validate an (n, 3) array of (head, relation, tail) ids."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) triple array, got shape {X.shape}")
    if not np.issubdtype(X.dtype, np.integer):
        if not np.all(X == np.floor(X)):
            raise ValueError("triple ids must be integers")
    X = X.astype(np.int64)
    if len(X):
        if X[:, [0, 2]].min() < 0 or X[:, [0, 2]].max() >= n_entities:
            raise ValueError(f"entity ids outside [0, {n_entities})")
        if X[:, 1].min() < 0 or X[:, 1].max() >= n_relations:
            raise ValueError(f"relation ids outside [0, {n_relations})")
    return X


def _resolve_architecture(architecture, blocks):
    if isinstance(architecture, Architecture):
        return architecture
    if not isinstance(architecture, str):
        raise ValueError(
            "architecture must be an Architecture, a model name, or a token line"
        )
    if ":" in architecture:
        return Architecture.from_line(architecture)
    return encode_known(architecture, blocks)


def _group_assignment(groups, n_relations, arch):
    if groups is None:
        if arch.n_groups != 1:
            raise ValueError(
                f"architecture has {arch.n_groups} groups; pass groups= with "
                "one group index per relation"
            )
        return trivial_assignment(n_relations, 1)
    vec = np.asarray(groups, dtype=np.int64)
    if vec.shape != (n_relations,):
        raise ValueError(
            f"groups must have shape ({n_relations},), got {vec.shape}"
        )
    if vec.min() < 0 or vec.max() >= arch.n_groups:
        raise ValueError(f"group indices outside [0, {arch.n_groups})")
    centroids = np.zeros((arch.n_groups, 1))
    return GroupAssignment(vec, centroids, 0.0)


class BlockBilinearEmbedding(BaseEstimator):
    """Train one fixed block-bilinear architecture on a triple store.

    ``architecture`` is a known model name ("DistMult", "ComplEx",
    "SimplE", "Analogy"), an architecture token line, or an Architecture.
    ``predict`` returns plausibility scores for id triples; higher means
    more plausible.
    """

    def __init__(
        self,
        architecture="DistMult",
        blocks=2,
        dim=32,
        groups=None,
        batch_size=512,
        epochs=100,
        learning_rate=0.1,
        l2=1e-3,
        lr_decay=1.0,
        eval_every=5,
        patience=10,
        tie_rule="mean",
        seed=0,
    ):
        self.architecture = architecture
        self.blocks = blocks
        self.dim = dim
        self.groups = groups
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.l2 = l2
        self.lr_decay = lr_decay
        self.eval_every = eval_every
        self.patience = patience
        self.tie_rule = tie_rule
        self.seed = seed

    def _train_config(self):
        return TrainConfig(
            dim=self.dim,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            l2=self.l2,
            lr_decay=self.lr_decay,
            epochs=self.epochs,
            seed=self.seed,
            eval_every=self.eval_every,
            patience=self.patience,
            tie_rule=self.tie_rule,
        )

    def fit(self, X, y=None):
        store = check_store(X)
        arch = _resolve_architecture(self.architecture, self.blocks)
        groups = _group_assignment(self.groups, store.n_relations, arch)
        result = train_standalone(arch, store, self._train_config(), groups=groups)
        self.architecture_ = arch
        self.groups_ = groups
        self.embeddings_ = result.table
        self.valid_mrr_ = result.best_valid_mrr
        self.history_ = result.history
        self.n_epochs_ = result.epochs_run
        return self

    def _check_fitted(self):
        if not hasattr(self, "embeddings_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet"
            )

    def predict(self, X):
        """Scores of (head, relation, tail) id triples."""
        self._check_fitted()
        triples = check_triples(
            X, self.embeddings_.n_entities, self.embeddings_.n_relations
        )
        return score_triples(self.architecture_, self.groups_, self.embeddings_, triples)

    def transform(self, X):
        """Entity embedding rows for an array of entity ids."""
        self._check_fitted()
        ids = np.asarray(X, dtype=np.int64).ravel()
        if len(ids) and (ids.min() < 0 or ids.max() >= self.embeddings_.n_entities):
            raise ValueError("entity ids out of range")
        return self.embeddings_.entities[ids].copy()

    def evaluate(self, X, split="test"):
        """Filtered ranking report on one split of a store."""
        self._check_fitted()
        store = check_store(X)
        return link_prediction_eval(
            self.architecture_,
            self.groups_,
            self.embeddings_,
            store,
            split=split,
            tie_rule=self.tie_rule,
        )


class RelationAwareSearch(BaseEstimator):
    """Search for relation-group-specific scoring functions, then retrain.

    ``fit`` runs the alternating search, derives the best sampled
    architecture on validation data, and (by default) retrains it from
    scratch. Prediction then uses the retrained model.
    """

    def __init__(
        self,
        n_groups=2,
        n_blocks=2,
        dim=32,
        search_epochs=20,
        batch_size=512,
        u_samples=2,
        learning_rate=0.1,
        l2=1e-3,
        reward_batch=256,
        reward_candidates=500,
        k_derive=16,
        single_level=False,
        freeze_groups=False,
        constraint_scope="per_group",
        ctrl_hidden=64,
        ctrl_embed=32,
        ctrl_lr=1e-3,
        baseline_decay=0.9,
        entropy_weight=0.0,
        retrain=True,
        epochs=100,
        lr_decay=1.0,
        eval_every=5,
        patience=10,
        tie_rule="mean",
        seed=0,
    ):
        self.n_groups = n_groups
        self.n_blocks = n_blocks
        self.dim = dim
        self.search_epochs = search_epochs
        self.batch_size = batch_size
        self.u_samples = u_samples
        self.learning_rate = learning_rate
        self.l2 = l2
        self.reward_batch = reward_batch
        self.reward_candidates = reward_candidates
        self.k_derive = k_derive
        self.single_level = single_level
        self.freeze_groups = freeze_groups
        self.constraint_scope = constraint_scope
        self.ctrl_hidden = ctrl_hidden
        self.ctrl_embed = ctrl_embed
        self.ctrl_lr = ctrl_lr
        self.baseline_decay = baseline_decay
        self.entropy_weight = entropy_weight
        self.retrain = retrain
        self.epochs = epochs
        self.lr_decay = lr_decay
        self.eval_every = eval_every
        self.patience = patience
        self.tie_rule = tie_rule
        self.seed = seed

    def _search_config(self):
        return SearchConfig(
            n_groups=self.n_groups,
            n_blocks=self.n_blocks,
            dim=self.dim,
            epochs=self.search_epochs,
            batch_size=self.batch_size,
            u_samples=self.u_samples,
            learning_rate=self.learning_rate,
            l2=self.l2,
            reward_batch=self.reward_batch,
            reward_candidates=self.reward_candidates,
            k_derive=self.k_derive,
            seed=self.seed,
            single_level=self.single_level,
            freeze_groups=self.freeze_groups,
            constraint_scope=self.constraint_scope,
            ctrl_hidden=self.ctrl_hidden,
            ctrl_embed=self.ctrl_embed,
            ctrl_lr=self.ctrl_lr,
            baseline_decay=self.baseline_decay,
            entropy_weight=self.entropy_weight,
        )

    def fit(self, X, y=None, group_init_vectors=None):
        store = check_store(X)
        cfg = self._search_config()
        result = search(store, cfg, group_init_vectors=group_init_vectors)
        arch, rewards = derive(result.policy, result.groups, result.table, store, cfg)
        self.policy_ = result.policy
        self.groups_ = result.groups
        self.supernet_ = result.table
        self.search_log_ = result.log
        self.search_seconds_ = result.wall_seconds
        self.architecture_ = arch
        self.derive_rewards_ = rewards
        if self.retrain:
            model = BlockBilinearEmbedding(
                architecture=arch,
                blocks=self.n_blocks,
                dim=self.dim,
                groups=result.groups.groups,
                batch_size=self.batch_size,
                epochs=self.epochs,
                learning_rate=self.learning_rate,
                l2=self.l2,
                lr_decay=self.lr_decay,
                eval_every=self.eval_every,
                patience=self.patience,
                tie_rule=self.tie_rule,
                seed=self.seed,
            )
            self.model_ = model.fit(store)
        return self

    def _check_fitted(self):
        if not hasattr(self, "architecture_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet"
            )

    def predict(self, X):
        """Scores of id triples under the derived architecture."""
        self._check_fitted()
        if self.retrain:
            return self.model_.predict(X)
        triples = check_triples(
            X, self.supernet_.n_entities, self.supernet_.n_relations
        )
        return score_triples(self.architecture_, self.groups_, self.supernet_, triples)

    def evaluate(self, X, split="test"):
        self._check_fitted()
        if self.retrain:
            return self.model_.evaluate(X, split=split)
        store = check_store(X)
        return link_prediction_eval(
            self.architecture_,
            self.groups_,
            self.supernet_,
            store,
            split=split,
            tie_rule=self.tie_rule,
        )
