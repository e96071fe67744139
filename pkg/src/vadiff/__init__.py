"""Unsupervised video-anomaly scoring by diffusion reconstruction.

A denoiser is trained on unlabeled per-segment feature vectors; at
scoring time each segment is partially noised, reconstructed through the
reverse ODE, and flagged when its reconstruction error exceeds the
batch-local threshold mu_p + k * sigma_p.  Frame-level ROC-AUC closes the
loop for labeled evaluation sets.
"""

from .autodiff import Var, affine, backward, silu, vsum
from .data import (
    DataError,
    DataStats,
    FeatureSet,
    SynthConfig,
    VideoRecord,
    estimate_sigma_data,
    load_features,
    load_manifest,
    make_batches,
    save_features,
    strip_labels,
    synth_generate,
    validate,
    validate_manifest,
)
from .evaluation import (
    EvalReport,
    evaluate,
    expand_segments,
    roc_auc,
    write_frames_csv,
    write_report_json,
)
from .network import (
    CheckpointError,
    DenoiserParams,
    NetworkConfig,
    Preconditioner,
    as_denoiser,
    denoise,
    film,
    forward_raw,
    fourier_embed,
    init_params,
    load_checkpoint,
    param_count,
    save_checkpoint,
    scalings,
)
from .rng import Rng, gaussian
from .sampling import (
    ScheduleConfig,
    karras_schedule,
    lms_sample,
    multistep_coeff,
    noise_bounds,
    ode_derivative,
    partial_reconstruct,
)
from .scoring import (
    BatchDecision,
    DatasetScores,
    ScoringConfig,
    batch_threshold,
    mse_per_instance,
    read_scores_csv,
    score_batch,
    score_dataset,
    write_scores_csv,
)
from .training import (
    EpochLog,
    OptimizerState,
    TrainConfig,
    TrainNoiseConfig,
    adam_step,
    dsm_loss,
    ema_update,
    fit,
    inverse_lr,
    loss_weight,
    sample_train_sigma,
)

__version__ = "0.1.0"

__all__ = [
    "Var", "affine", "backward", "silu", "vsum",
    "Rng", "gaussian",
    "NetworkConfig", "DenoiserParams", "Preconditioner", "CheckpointError",
    "scalings", "fourier_embed", "film", "forward_raw", "denoise",
    "as_denoiser", "init_params", "param_count", "save_checkpoint", "load_checkpoint",
    "ScheduleConfig", "karras_schedule", "noise_bounds", "ode_derivative",
    "multistep_coeff", "lms_sample", "partial_reconstruct",
    "TrainNoiseConfig", "TrainConfig", "OptimizerState", "EpochLog",
    "sample_train_sigma", "loss_weight", "dsm_loss", "inverse_lr",
    "adam_step", "ema_update", "fit",
    "DataError", "DataStats", "FeatureSet", "VideoRecord", "SynthConfig",
    "load_features", "load_manifest", "save_features", "estimate_sigma_data",
    "make_batches", "synth_generate", "strip_labels", "validate", "validate_manifest",
    "ScoringConfig", "BatchDecision", "DatasetScores",
    "mse_per_instance", "batch_threshold", "score_batch", "score_dataset",
    "write_scores_csv", "read_scores_csv",
    "EvalReport", "expand_segments", "roc_auc", "evaluate",
    "write_report_json", "write_frames_csv",
    "__version__",
]
