"""Weighted empirical risk minimization with multinomial softmax regression.

Class weights are indexed by label, which is exactly the structure a label
shift induces; training is full-batch gradient descent so results are a pure
function of the inputs.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, Divergence, InvalidBeta, InvalidParams

LOSS_CLAMP = 30.0


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with integer labels in [0, k)."""

    features: np.ndarray
    labels: np.ndarray
    k: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y.astype(np.int64))
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidParams(f"features must be a nonempty 2-d matrix, got {x.shape}")
        if y.shape != (x.shape[0],):
            raise DimensionMismatch(f"{x.shape[0]} rows but labels shape {y.shape}")
        if np.any(np.isnan(x)):
            raise InvalidParams("features contain NaN")
        if y.size and (y.min() < 0 or y.max() >= self.k):
            raise InvalidParams(f"labels must lie in [0, {self.k})")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], self.k)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 300
    l2_penalty: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidParams("learning_rate must be positive")
        if self.epochs < 1:
            raise InvalidParams("epochs must be >= 1")
        if self.l2_penalty < 0:
            raise InvalidParams("l2_penalty must be nonnegative")


@dataclass(frozen=True)
class SoftmaxModel:
    """Linear softmax classifier: logits = X W^T + bias."""

    weights: np.ndarray
    bias: np.ndarray
    train_log: tuple = ()

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"{self.k},{self.d}\n")
        packed = np.hstack([self.weights, self.bias[:, None]])
        np.savetxt(buf, packed, delimiter=",", fmt="%.17g", newline="\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SoftmaxModel":
        lines = text.strip().split("\n")
        k, d = (int(tok) for tok in lines[0].split(","))
        packed = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
        if packed.shape != (k, d + 1):
            raise DimensionMismatch(f"expected {k}x{d + 1} parameter block, got {packed.shape}")
        return cls(weights=packed[:, :d], bias=packed[:, d])


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(model: SoftmaxModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != model.d:
        raise DimensionMismatch(f"features {features.shape} incompatible with d={model.d}")
    return _softmax(features @ model.weights.T + model.bias)


def predict(model: SoftmaxModel, features: np.ndarray) -> np.ndarray:
    """Argmax of the logits per row; ties resolve to the lower class index."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != model.d:
        raise DimensionMismatch(f"features {features.shape} incompatible with d={model.d}")
    return np.argmax(features @ model.weights.T + model.bias, axis=1)


def weighted_loss(
    model: SoftmaxModel,
    data: LabeledDataset,
    class_weights: np.ndarray,
    loss: str = "cross_entropy",
    clamp: float = LOSS_CLAMP,
) -> float:
    """Mean of weights[y_j] * loss_j over the dataset.

    Cross-entropy is clamped to [0, clamp] for reporting; the 0/1 variant
    matches the unit-interval losses the bound evaluators assume.
    """
    class_weights = np.asarray(class_weights, dtype=float)
    if class_weights.shape != (data.k,):
        raise DimensionMismatch(f"need {data.k} class weights, got shape {class_weights.shape}")
    if loss == "cross_entropy":
        proba = predict_proba(model, data.features)
        per_sample = -np.log(np.maximum(proba[np.arange(data.n), data.labels], 1e-300))
        per_sample = np.minimum(per_sample, clamp)
    elif loss == "zero_one":
        per_sample = (predict(model, data.features) != data.labels).astype(float)
    else:
        raise InvalidParams(f"unknown loss {loss!r}")
    return float(np.mean(class_weights[data.labels] * per_sample))


def loss_and_gradient(
    weights: np.ndarray,
    bias: np.ndarray,
    data: LabeledDataset,
    class_weights: np.ndarray,
    l2_penalty: float = 0.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Weighted cross-entropy plus L2 on the weight matrix, with its gradient."""
    sample_w = np.asarray(class_weights, dtype=float)[data.labels]
    proba = _softmax(data.features @ weights.T + bias)
    picked = np.maximum(proba[np.arange(data.n), data.labels], 1e-300)
    loss = float(np.mean(sample_w * -np.log(picked)))
    loss += 0.5 * l2_penalty * float(np.sum(weights * weights))

    grad_logits = proba.copy()
    grad_logits[np.arange(data.n), data.labels] -= 1.0
    grad_logits *= sample_w[:, None] / data.n
    grad_w = grad_logits.T @ data.features + l2_penalty * weights
    grad_b = grad_logits.sum(axis=0)
    return loss, grad_w, grad_b


def train(data: LabeledDataset, class_weights: np.ndarray, cfg: TrainConfig) -> SoftmaxModel:
    """Full-batch gradient descent on the weighted cross-entropy objective."""
    class_weights = np.asarray(class_weights, dtype=float)
    if class_weights.shape != (data.k,):
        raise DimensionMismatch(f"need {data.k} class weights, got shape {class_weights.shape}")
    if np.any(class_weights < 0):
        raise InvalidParams("class weights must be nonnegative")
    rng = np.random.default_rng(cfg.seed)
    weights = rng.normal(scale=0.01, size=(data.k, data.d))
    bias = np.zeros(data.k)

    log = []
    for _ in range(cfg.epochs):
        loss, grad_w, grad_b = loss_and_gradient(weights, bias, data, class_weights, cfg.l2_penalty)
        if not math.isfinite(loss):
            raise Divergence(f"loss became {loss!r}")
        log.append(loss)
        weights = weights - cfg.learning_rate * grad_w
        bias = bias - cfg.learning_rate * grad_b
    final_loss, _, _ = loss_and_gradient(weights, bias, data, class_weights, cfg.l2_penalty)
    if not math.isfinite(final_loss):
        raise Divergence(f"loss became {final_loss!r}")
    log.append(final_loss)
    return SoftmaxModel(weights=weights, bias=bias, train_log=tuple(log))


def split_source(data: LabeledDataset, beta: float, seed) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded shuffle, then split into (class set, weight set) with |class| = round(beta*n)."""
    if not 0.0 < beta < 1.0:
        raise InvalidBeta(f"need 0 < beta < 1, got {beta}")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    perm = rng.permutation(data.n)
    n_class = int(math.floor(beta * data.n + 0.5))
    n_class = min(max(n_class, 1), data.n - 1)
    return data.subset(perm[:n_class]), data.subset(perm[n_class:])
