"""Clustering of stationary ergodic time series by empirical distributional distance."""

from .clustering import (
    Clustering,
    CountingLookup,
    cluster_known_k,
    cluster_threshold,
    exact_match,
    misclassification_rate,
)
from .distance import (
    CubeKey,
    PairwiseDistances,
    PartitionScheme,
    Sample,
    TruncationParams,
    cube_key,
    dcheck,
    dhat_exact,
    distance_matrix,
    empirical_profile,
    stabilization_level,
)
from .errors import (
    InvalidInputError,
    InvalidParameterError,
    InvalidSpecError,
    ProcclustError,
    UnsupportedSizeError,
)
from .generators import (
    CoupledPair,
    MarkovSpec,
    RotationSpec,
    gen_coupled,
    gen_markov,
    gen_rotation,
    markov_alpha_bound,
)
from .harness import ExperimentConfig, Source, TruncationSchedule, convergence_curve, run_experiment
from .mixing import Algo2Params, MixingBound, bosq_tail, default_params, error_bound, gamma

__version__ = "0.1.0"
