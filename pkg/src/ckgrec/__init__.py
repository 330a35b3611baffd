"""Dual collaborative knowledge-graph recommender.

Builds a user-side and an item-side knowledge graph from the same
interactions, encodes both with relation-space translations, propagates
entity representations through attention-weighted layers, and ranks
items for users with a pairwise objective.  See the README for the
pipeline and the CLI.
"""

from .config import RunConfig, load_config
from .errors import (
    CkgrecError,
    ColdEntityError,
    ConfigError,
    DimensionConflictError,
    FormatError,
    NumericFaultError,
    OracleError,
    SamplingExhaustedError,
    ShapeError,
    TrainingDiverged,
    UnresolvedEntityError,
)
from .graph import (
    AlignmentMap,
    BipartiteGraph,
    CollaborativeKG,
    InteractionRecord,
    RelationRegistry,
    Vocab,
    build_bipartite,
    build_graphs,
    build_item_side_ckg,
    build_user_side_ckg,
    neighbors,
    plan_alignment,
)
from .ingest import (
    RawRating,
    SynthConfig,
    filter_min_interactions,
    parse_attribute_triples,
    parse_interactions,
    synth_generate,
    to_implicit,
)
from .model import BprBatch, DualModel, bpr_loss, build_model, total_loss
from .propagation import (
    LayerStack,
    attention_logit,
    attention_weights,
    bi_interaction_aggregate,
    init_stack,
    neighborhood_message,
    propagate,
    propagate_backward,
)
from .rng import Rng
from .training import Adam, TrainSettings, train
from .transr import EmbeddingTable, TripleBatch, init_table, kg_loss, project, sample_negative_tail, triple_energy

__version__ = "0.1.0"
