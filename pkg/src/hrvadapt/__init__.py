"""Teacher-student domain adaptation for biosensor HRV time series:
peak detection, windowed HRV features, simulated domain shift, a small exact
gradient neural core, distillation-based adaptation, and pooled evaluation."""

__version__ = "0.1.0"

from .features import (
    FEATURE_NAMES,
    HrvVector,
    LabelStream,
    PairedExample,
    WindowGrid,
    build_subject_example,
    build_window_grid,
    chunk_example,
    consensus_window_labels,
    extract_hrv_sequence,
)
from .metrics import (
    FoldPlan,
    MetricsReport,
    PredictionSet,
    ReportRow,
    auc_variance_bound,
    loso_folds,
    pooled_evaluate,
    pr_auc,
    roc_auc,
)
from .shift import (
    HmmShiftConfig,
    StatePath,
    ToyStudyConfig,
    generate_toy_study,
    perturb_intervals,
    reference_shift_config,
    sample_state_path,
)
from .signals import (
    IntervalSeries,
    PeakSeries,
    QrsConfig,
    Waveform,
    detect_peaks_ampd,
    detect_qrs,
    intervals_to_peaks,
    peaks_to_intervals,
)
from .training import (
    HybridLossConfig,
    PlattParams,
    TrainConfig,
    calibrate_teacher,
    clone_student,
    hybrid_loss,
    platt_calibrate,
    pretrain_teacher,
    train_student,
    train_supervised,
)
from .variants import (
    ABLATION_VARIANTS,
    TABLE1_VARIANTS,
    VariantSpec,
    predict_examples,
    prepare_teacher,
    run_variant,
)

__all__ = [
    "ABLATION_VARIANTS",
    "FEATURE_NAMES",
    "FoldPlan",
    "HmmShiftConfig",
    "HrvVector",
    "HybridLossConfig",
    "IntervalSeries",
    "LabelStream",
    "MetricsReport",
    "PairedExample",
    "PeakSeries",
    "PlattParams",
    "PredictionSet",
    "QrsConfig",
    "ReportRow",
    "StatePath",
    "TABLE1_VARIANTS",
    "ToyStudyConfig",
    "TrainConfig",
    "VariantSpec",
    "Waveform",
    "WindowGrid",
    "auc_variance_bound",
    "build_subject_example",
    "build_window_grid",
    "calibrate_teacher",
    "chunk_example",
    "clone_student",
    "consensus_window_labels",
    "detect_peaks_ampd",
    "detect_qrs",
    "extract_hrv_sequence",
    "generate_toy_study",
    "hybrid_loss",
    "intervals_to_peaks",
    "loso_folds",
    "peaks_to_intervals",
    "perturb_intervals",
    "platt_calibrate",
    "pooled_evaluate",
    "pr_auc",
    "predict_examples",
    "prepare_teacher",
    "pretrain_teacher",
    "reference_shift_config",
    "roc_auc",
    "run_variant",
    "sample_state_path",
    "train_student",
    "train_supervised",
]
