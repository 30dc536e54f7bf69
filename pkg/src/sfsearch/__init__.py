"""Relation-aware scoring function search for knowledge graph embedding.

Entity and relation embeddings are split into blocks; a scoring function
assigns one signed relation block (or zero) to every block pair. Relations
are clustered into groups, each group gets its own scoring function, and a
recurrent policy trained with REINFORCE searches the space while all
candidates share one embedding table. The best sampled architecture is then
retrained from scratch.
"""

from .datasets import (
    RelationFamily,
    SyntheticSpec,
    TripleStore,
    classify_relation_patterns,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .errors import ConfigError, DataError, NumericalError
from .estimators import BlockBilinearEmbedding, RelationAwareSearch
from .evaluation import EvalReport, link_prediction_eval, triplet_classification
from .grouping import GroupAssignment, init_assignments, update_assignments
from .scoring import EmbeddingTable, score, triple_dot
from .search import SearchConfig, derive, reward, search
from .search_space import Architecture, OperationSet, check_exploitative, encode_known
from .training import TrainConfig, train_standalone

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "BlockBilinearEmbedding",
    "ConfigError",
    "DataError",
    "EmbeddingTable",
    "EvalReport",
    "GroupAssignment",
    "NumericalError",
    "OperationSet",
    "RelationAwareSearch",
    "RelationFamily",
    "SearchConfig",
    "SyntheticSpec",
    "TrainConfig",
    "TripleStore",
    "check_exploitative",
    "classify_relation_patterns",
    "derive",
    "encode_known",
    "generate_synthetic",
    "init_assignments",
    "link_prediction_eval",
    "load_dataset",
    "reward",
    "save_dataset",
    "score",
    "search",
    "train_standalone",
    "triple_dot",
    "triplet_classification",
    "update_assignments",
    "__version__",
]
