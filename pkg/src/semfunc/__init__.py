"""Functional distributional semantics.

Predicates are probabilistic classifiers ("semantic functions") over a space
of sparse binary entity representations ("pixies"); a world model adds a
prior over linked pixies.  The package provides exact inference for small
spaces, mean-field inference for realistic ones, a trainer for triple
corpora and the usual lexical evaluations.
"""

from .errors import (
    ConfigurationError,
    DegenerateDistributionError,
    InputError,
    SemfuncError,
    TractabilityError,
    TrainingDivergedError,
    UndefinedConditionalError,
    UndefinedCorrelationError,
)
from .model import (
    GraphTopology,
    LinkWeights,
    PixieVector,
    SemanticFunction,
    SpaceConfig,
    TruthCondition,
    WorldModel,
    assembly_energy,
    assembly_weight,
    evaluate_semantic_function,
    load_model,
    predicate_generation_distribution,
    save_model,
)
from .oracle import (
    check_barbara,
    check_quantifier_equivalence,
    exact_conditional_truth,
    exact_posterior_marginals,
)
from .meanfield import MeanFieldSettings, MeanFieldState, inclusive_kl, optimize, update_linked, update_single
from .inference import (
    QueryGraph,
    RelpronProperty,
    graph_conditional_query,
    implication_score,
    rank_terms,
    relpron_score,
    similarity,
)
from .training import TrainingConfig, initialize_model, observation_objective, train
from .corpus import build_vocabulary, load_relpron, load_similarity_dataset, load_triples
from .evaluation import EvalReport, mean_average_precision, spearman

__version__ = "0.1.0"
