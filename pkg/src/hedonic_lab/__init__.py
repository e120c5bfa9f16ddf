"""Random additively separable hedonic games: checking, clustering, oracles, bounds."""

from .games import (
    Deviation,
    HedonicGame,
    InvalidAgentError,
    NEW_SINGLETON,
    PartialPartition,
    Partition,
    PartitionError,
    coalition_utility,
    enumerate_deviations,
    favor_in,
    favor_out,
)
from .stability import Concept, Verdict, check, concept_profile, implied_concepts
from .sampling import SeedSpec, UtilityDistribution, derive_trial_seed, sample_game
from .clustering import (
    AlgoConfig,
    RevelationLedger,
    StageReport,
    complete_partition,
    greedy_cliques,
    greedy_cluster,
    is_compatible,
    run_three_stage,
)
from .oracle import (
    EnumerationLimitError,
    bell,
    count_stable,
    enumerate_partitions,
    exists_stable,
    stirling2,
)

__version__ = "0.1.0"
