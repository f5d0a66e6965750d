"""Online change-point detection for streams of graph snapshots.

Train a reference model offline from a clean window of snapshots (spectral
embedding of the averaged adjacency matrix), then monitor a weighted
partial-sum statistic of the model residual online, with analytic or
Monte-Carlo thresholds, detectability checks, and delay prediction.  Handles
undirected, directed, and weighted graphs.
"""

from .graphs import (
    GraphSequence,
    GraphSnapshot,
    ResidualLayout,
    entrywise_power,
    hollow,
    mean_adjacency,
    vec_residual,
)
from .spectral import (
    Embedding,
    IndefiniteSpectrumError,
    ScreeReport,
    ase,
    directed_ase,
    omnibus_embed,
    procrustes_align,
    select_dimension,
    singular_spectrum,
    weighted_ase,
)
from .generators import (
    WeightSpec,
    sample_drdpg,
    sample_er,
    sample_rdpg,
    sample_sbm,
    sample_weighted_sbm,
    stream_rng,
)
from .nullmodel import (
    DetectabilityReport,
    NullModel,
    NullQuantileSampler,
    detectability,
    er_detectability_bound,
    estimate_error_loo,
    exact_null_model,
    gamma_mean,
    gamma_var,
    load_model,
    mean_after_change,
    predict_delay,
    save_model,
    threshold_quantile,
    threshold_three_sigma,
    train,
)
from .monitor import (
    Decision,
    DetectorState,
    MonitorResult,
    StatisticKind,
    ThresholdRule,
    detector_step,
    monitoring_projection,
    monitoring_residual,
    run_monitor,
    weight_omega,
)
from .scenarios import SCENARIO_NAMES, Scenario, make_scenario

__version__ = "0.1.0"

__all__ = [
    "GraphSnapshot",
    "GraphSequence",
    "ResidualLayout",
    "hollow",
    "vec_residual",
    "entrywise_power",
    "mean_adjacency",
    "Embedding",
    "ScreeReport",
    "IndefiniteSpectrumError",
    "ase",
    "directed_ase",
    "weighted_ase",
    "select_dimension",
    "singular_spectrum",
    "omnibus_embed",
    "procrustes_align",
    "WeightSpec",
    "stream_rng",
    "sample_rdpg",
    "sample_er",
    "sample_sbm",
    "sample_drdpg",
    "sample_weighted_sbm",
    "NullModel",
    "DetectabilityReport",
    "NullQuantileSampler",
    "train",
    "estimate_error_loo",
    "exact_null_model",
    "gamma_mean",
    "gamma_var",
    "threshold_three_sigma",
    "threshold_quantile",
    "detectability",
    "mean_after_change",
    "predict_delay",
    "er_detectability_bound",
    "save_model",
    "load_model",
    "StatisticKind",
    "ThresholdRule",
    "Decision",
    "DetectorState",
    "MonitorResult",
    "monitoring_residual",
    "monitoring_projection",
    "weight_omega",
    "detector_step",
    "run_monitor",
    "Scenario",
    "make_scenario",
    "SCENARIO_NAMES",
    "__version__",
]
