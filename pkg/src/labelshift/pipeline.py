"""Single-pass correction pipeline: split, fit the black box, estimate weights,
retrain, score. Both the batch harness and the streaming loop call into this."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import LabeledDataset, SoftmaxModel, TrainConfig, predict, split_source, train
from .confusion import ConfusionEstimate, Deltas, build_b, estimate_confusion, estimate_label_dist
from .errors import InvalidParams, LengthMismatch
from .estimators import (
    SolverOptions,
    WeightEstimate,
    bbsl_weights,
    lambda_rule,
    regularized_weights,
    select_theta,
)

DEFAULT_THETA_MAX = 4.216


def macro_f1(preds: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Unweighted mean of per-class F1 scores; a 0/0 class contributes 0."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise LengthMismatch(f"preds {preds.shape} vs labels {labels.shape}")
    scores = np.zeros(k)
    for c in range(k):
        tp = np.sum((preds == c) & (labels == c))
        fp = np.sum((preds == c) & (labels != c))
        fn = np.sum((preds != c) & (labels == c))
        denom = 2 * tp + fp + fn
        scores[c] = 2.0 * tp / denom if denom > 0 else 0.0
    return float(scores.mean())


@dataclass(frozen=True)
class BatchResult:
    """Everything one pipeline pass produces."""

    estimate: WeightEstimate
    model: SoftmaxModel
    confusion: ConfusionEstimate
    deltas: Deltas
    lambda_used: float
    sigma_min: float
    weight_mse: float
    accuracy: float
    macro_f1: float


def _seeds(seed: int, n: int) -> list[int]:
    state = np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


def run_batch(
    source: LabeledDataset,
    target_features: np.ndarray,
    *,
    beta: float,
    method: str = "rlls",
    lam: float | None = None,
    theta_max: float = DEFAULT_THETA_MAX,
    delta: float = 0.05,
    solver_opts: SolverOptions | None = None,
    train_cfg: TrainConfig | None = None,
    h0_data: LabeledDataset | None = None,
    true_weights: np.ndarray | None = None,
    target_labels: np.ndarray | None = None,
    seed: int = 0,
) -> BatchResult:
    """Run the full correction once and score it.

    The black box is fit on h0_data when given, otherwise on the weight split
    (which keeps it out of the final classifier's training set). lam=None
    applies the binary trust rule using the empirical sigma_min; the rlls
    method is the only one that consumes lam. true_weights and target_labels
    only feed the reported metrics, never the estimation path.
    """
    target_features = np.asarray(target_features, dtype=float)
    if target_features.ndim != 2 or target_features.shape[0] < 1:
        raise InvalidParams(f"target features must be a nonempty matrix, got {target_features.shape}")
    train_cfg = train_cfg or TrainConfig()
    solver_opts = solver_opts or SolverOptions()
    k = source.k

    split_seed, h0_seed, fit_seed = _seeds(seed, 3)
    class_set, weight_set = split_source(source, beta, split_seed)

    h0_train = h0_data if h0_data is not None else weight_set
    h0 = train(h0_train, np.ones(k), _reseed(train_cfg, h0_seed))

    c_hat = estimate_confusion(predict(h0, weight_set.features), weight_set.labels, k)
    q_hat = estimate_label_dist(predict(h0, target_features), k)
    b_hat = build_b(q_hat, c_hat)
    deltas = Deltas.compute(k, weight_set.n, target_features.shape[0], delta)

    if method == "rlls":
        theta_hat, rho = select_theta(c_hat, b_hat, deltas, solver_opts)
        if lam is None:
            lam = lambda_rule(target_features.shape[0], source.n, theta_max, c_hat.sigma_min)
        estimate = regularized_weights(theta_hat, lam)
        estimate = WeightEstimate(
            theta_hat=estimate.theta_hat,
            weights=estimate.weights,
            lam=lam,
            method="rlls",
            rho_selected=rho,
        )
    elif method == "bbsl":
        estimate = bbsl_weights(c_hat, q_hat)
    elif method == "oracle":
        if true_weights is None:
            raise InvalidParams("oracle method needs true_weights")
        w = np.asarray(true_weights, dtype=float)
        estimate = WeightEstimate(theta_hat=w - 1.0, weights=w, lam=1.0, method="oracle")
    elif method == "unweighted":
        estimate = WeightEstimate(
            theta_hat=np.zeros(k), weights=np.ones(k), lam=0.0, method="unweighted"
        )
    else:
        raise InvalidParams(f"unknown method {method!r}")

    model = train(class_set, estimate.weights, _reseed(train_cfg, fit_seed))

    weight_mse = float("nan")
    if true_weights is not None:
        diff = estimate.weights - np.asarray(true_weights, dtype=float)
        weight_mse = float(diff @ diff)
    accuracy = f1 = float("nan")
    if target_labels is not None:
        preds = predict(model, target_features)
        target_labels = np.asarray(target_labels)
        accuracy = float(np.mean(preds == target_labels))
        f1 = macro_f1(preds, target_labels, k)

    return BatchResult(
        estimate=estimate,
        model=model,
        confusion=c_hat,
        deltas=deltas,
        lambda_used=estimate.lam,
        sigma_min=c_hat.sigma_min,
        weight_mse=weight_mse,
        accuracy=accuracy,
        macro_f1=f1,
    )


def _reseed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        l2_penalty=cfg.l2_penalty,
        seed=seed,
    )
