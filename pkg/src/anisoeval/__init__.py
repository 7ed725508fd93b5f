"""Budget-aware stratified evaluation of language models and capability-anisotropy analytics."""

from ._accel import NUMBA_ENABLED
from .analytics import (
    analysis_report, anisotropy_index, build_score_matrix, capability_inconsistency, dgs, generalization_gap,
    ks_statistic, paired_bootstrap, pearson, rank_under_scheme, rsa, spearman,
)
from .core import (
    CapabilityCell, GoldAnswer, ModelDescriptor, Sample, ScoreMatrix, Stratum, StratumAccumulator, WeightScheme,
    build_strata, default_schemes, read_samples, write_samples,
)
from .errors import AnisoEvalError
from .oracle import EndpointResponder, SyntheticProfile, SyntheticResponder
from .scheduler import EvaluationRun, SchedulerConfig, hs_halfwidth, neyman_allocation, run_evaluation
from .scoring import HybridScorer, ScoreRecord, cohen_kappa, hybrid_score, route

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED", "AnisoEvalError",
    "CapabilityCell", "GoldAnswer", "Sample", "Stratum", "StratumAccumulator", "ModelDescriptor", "WeightScheme",
    "ScoreMatrix", "build_strata", "default_schemes", "read_samples", "write_samples",
    "SchedulerConfig", "EvaluationRun", "run_evaluation", "neyman_allocation", "hs_halfwidth",
    "SyntheticProfile", "SyntheticResponder", "EndpointResponder",
    "ScoreRecord", "HybridScorer", "hybrid_score", "route", "cohen_kappa",
    "anisotropy_index", "capability_inconsistency", "dgs", "pearson", "spearman", "rank_under_scheme", "rsa",
    "paired_bootstrap", "ks_statistic", "generalization_gap", "build_score_matrix", "analysis_report",
]
