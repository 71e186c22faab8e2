"""Desk-scale masked-autoencoder pretraining grid with scaling-law fitting.

The package pretrains tiny masked-autoencoder vision transformers over a grid
of data amounts, image resolutions, and model sizes, evaluates them by frozen
linear probing or 2% fine-tuning, fits the log-log accuracy law per model
size, and extrapolates it against the 90% human-level threshold.
"""

__version__ = "0.1.0"

from .corpus import (
    FIG1_MIXTURE,
    CorpusManifest,
    ImageRecord,
    MixtureSpec,
    SubsetSpec,
    build_synthetic_corpus,
    empirical_mixture,
    sample_subset,
)
from .evaluation import EvalProtocol, EvalReport, RidgeProbeClassifier, linear_probe
from .mae import (
    MaeModelConfig,
    MaskedAutoencoder,
    MaskSet,
    ParameterStore,
    SizeLadder,
    TrainSchedule,
    forward,
    gradient,
    mae_loss,
    parameter_count,
    patchify,
    sample_mask,
    size_ladder,
    train,
    unpatchify,
)
from .scaling import (
    CanonicalScalingParams,
    FitResult,
    RawScalingParams,
    ScalingLawRegressor,
    ScalingPoint,
    canonicalize,
    check_identifiability,
    fit,
    predict,
    raw_of,
)
from .scenarios import (
    HUMAN_LEVEL_PCT,
    ScenarioSpec,
    builtin_table1,
    evaluate_scenario,
    solve_threshold_i,
    solve_threshold_ppi,
)

__all__ = [
    "FIG1_MIXTURE",
    "CorpusManifest",
    "ImageRecord",
    "MixtureSpec",
    "SubsetSpec",
    "build_synthetic_corpus",
    "empirical_mixture",
    "sample_subset",
    "EvalProtocol",
    "EvalReport",
    "RidgeProbeClassifier",
    "linear_probe",
    "MaeModelConfig",
    "MaskedAutoencoder",
    "MaskSet",
    "ParameterStore",
    "SizeLadder",
    "TrainSchedule",
    "forward",
    "gradient",
    "mae_loss",
    "parameter_count",
    "patchify",
    "sample_mask",
    "size_ladder",
    "train",
    "unpatchify",
    "CanonicalScalingParams",
    "FitResult",
    "RawScalingParams",
    "ScalingLawRegressor",
    "ScalingPoint",
    "canonicalize",
    "check_identifiability",
    "fit",
    "predict",
    "raw_of",
    "HUMAN_LEVEL_PCT",
    "ScenarioSpec",
    "builtin_table1",
    "evaluate_scenario",
    "solve_threshold_i",
    "solve_threshold_ppi",
    "__version__",
]
