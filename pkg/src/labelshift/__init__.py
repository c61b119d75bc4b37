"""Label-shift correction toolkit.

Estimate importance weights between a source and a target domain from a black
box classifier's confusion matrix, train class-weighted softmax classifiers,
adapt them online as target data streams in, and evaluate the closed-form
error bounds that justify each step.
"""

from .bounds import (
    BoundParams,
    DriftEstimate,
    GaussianConditional,
    crude_bound,
    drift_term,
    finite_class_complexity,
    generalization_bound,
    lambda_bound_table,
    lambda_threshold,
    streaming_bound,
    threshold_curve,
)
from .classifier import (
    LabeledDataset,
    SoftmaxModel,
    TrainConfig,
    loss_and_gradient,
    predict,
    predict_proba,
    split_source,
    train,
    weighted_loss,
)
from .confusion import (
    ConfusionEstimate,
    Deltas,
    build_b,
    delta_b,
    delta_c,
    estimate_confusion,
    estimate_label_dist,
    marginal_radius,
)
from .distributions import (
    LabelDist,
    ShiftSpec,
    WeightShift,
    importance_weights,
    make_shift,
    sample_labels,
    shift_metrics,
)
from .errors import (
    BadMagic,
    BelowCritical,
    CountMismatch,
    DensityZero,
    DimensionMismatch,
    Divergence,
    EmptyInput,
    InvalidBeta,
    InvalidDelta,
    InvalidParams,
    InvalidSpec,
    LabelShiftError,
    LengthMismatch,
    NonConvergence,
    SingularConfusion,
    TruncatedFile,
    UnsupportedClass,
)
from .estimators import (
    SolverOptions,
    WeightEstimate,
    bbsl_weights,
    epsilon_theta,
    kkt_residual,
    lambda_rule,
    prox_solve,
    regularized_weights,
    select_theta,
    solve_theta_rho,
)
from .experiments import (
    ExperimentConfig,
    MetricsRecord,
    TrialData,
    build_trial_data,
    experiment_config_from_mapping,
    gen_gaussian_mixture,
    load_idx,
    paper_presets,
    parse_kv,
    records_to_csv,
    records_to_jsonl,
    resample_by_dist,
    run_experiment,
)
from .pipeline import BatchResult, macro_f1, run_batch
from .streaming import (
    StreamConfig,
    StreamRecord,
    hyperparam_objective,
    run_stream,
    select_hyperparams,
    stream_records_to_csv,
)

__version__ = "0.1.0"
