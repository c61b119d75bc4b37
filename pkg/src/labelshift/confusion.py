"""Empirical confusion matrices and the concentration radii that govern them."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .distributions import LabelDist
from .errors import DimensionMismatch, EmptyInput, InvalidDelta, InvalidParams, LengthMismatch

SUM_ATOL = 1e-12


@dataclass(frozen=True)
class ConfusionEstimate:
    """Joint (prediction, label) probability matrix with its cached sigma_min.

    Rows index the predicted class, columns the true class; entries are joint
    probabilities, so the matrix sums to one. Row sums give the predicted-label
    marginal, column sums the true-label marginal.
    """

    matrix: np.ndarray
    n_samples: int
    sigma_min: float = None  # computed from matrix when omitted

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"confusion matrix must be square, got {m.shape}")
        if np.any(m < 0):
            raise InvalidParams("confusion entries must be nonnegative")
        if abs(m.sum() - 1.0) > SUM_ATOL:
            raise InvalidParams(f"confusion entries sum to {m.sum()!r}, not 1")
        if self.sigma_min is None:
            object.__setattr__(self, "sigma_min", float(np.linalg.svd(m, compute_uv=False)[-1]))

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def predicted_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def label_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        np.savetxt(buf, self.matrix, delimiter=",", fmt="%.17g", newline="\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n_samples: int = 0) -> "ConfusionEstimate":
        m = np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2)
        return cls(matrix=m, n_samples=n_samples)


@dataclass(frozen=True)
class Deltas:
    """High-probability radii for the estimation errors of C-hat and b-hat.

    delta_q and delta_p are the one-sided marginal radii kept for inspection;
    delta_b is the combined radius actually used by the weight estimator.
    """

    delta_c: float
    delta_b: float
    delta_q: float
    delta_p: float
    delta: float
    n_weight: int
    n_target: int

    def __post_init__(self):
        for name in ("delta_c", "delta_b", "delta_q", "delta_p"):
            if getattr(self, name) <= 0:
                raise InvalidParams(f"{name} must be positive")

    @classmethod
    def compute(cls, k: int, n_weight: int, n_target: int, delta: float) -> "Deltas":
        return cls(
            delta_c=delta_c(k, n_weight, delta),
            delta_b=delta_b(n_weight, n_target, delta),
            delta_q=marginal_radius(n_target, delta),
            delta_p=marginal_radius(n_weight, delta),
            delta=delta,
            n_weight=n_weight,
            n_target=n_target,
        )


def _check_labels(vec: np.ndarray, k: int, name: str) -> np.ndarray:
    vec = np.asarray(vec)
    if vec.size == 0:
        raise EmptyInput(f"{name} is empty")
    if vec.min() < 0 or vec.max() >= k:
        raise DimensionMismatch(f"{name} entries must lie in [0, {k})")
    return vec.astype(np.int64)


def estimate_confusion(preds: np.ndarray, labels: np.ndarray, k: int) -> ConfusionEstimate:
    """Empirical joint frequency of (predicted class, true class) pairs."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise LengthMismatch(f"preds has shape {preds.shape}, labels {labels.shape}")
    preds = _check_labels(preds, k, "preds")
    labels = _check_labels(labels, k, "labels")
    n = preds.size
    counts = np.zeros((k, k))
    np.add.at(counts, (preds, labels), 1.0)
    return ConfusionEstimate(matrix=counts / n, n_samples=n)


def estimate_label_dist(preds: np.ndarray, k: int) -> LabelDist:
    """Empirical class frequencies of a prediction vector."""
    preds = _check_labels(np.asarray(preds), k, "preds")
    return LabelDist(np.bincount(preds, minlength=k) / preds.size)


def build_b(q_hat: LabelDist, c_hat: ConfusionEstimate) -> np.ndarray:
    """Right-hand side of the reparameterized linear system: q-hat minus the row sums."""
    if q_hat.k != c_hat.k:
        raise DimensionMismatch(f"q_hat has {q_hat.k} classes, confusion {c_hat.k}")
    return q_hat.probs - c_hat.predicted_marginal


def _check_counts(delta: float, *counts: int) -> None:
    if not 0.0 < delta < 1.0:
        raise InvalidDelta(f"need 0 < delta < 1, got {delta}")
    for c in counts:
        if c < 1:
            raise InvalidParams(f"sample counts must be >= 1, got {c}")


def delta_c(k: int, n_weight: int, delta: float) -> float:
    """Spectral concentration radius of the empirical confusion matrix."""
    _check_counts(delta, n_weight)
    if k < 2:
        raise InvalidParams(f"need k >= 2, got {k}")
    log_term = math.log(2.0 * k / delta)
    return 2.0 * log_term / (3.0 * n_weight) + math.sqrt(2.0 * log_term / n_weight)


def delta_b(n_weight: int, n_target: int, delta: float) -> float:
    """Concentration radius of the empirical shift vector b-hat."""
    _check_counts(delta, n_weight, n_target)
    log_term = math.log(1.0 / delta)
    return (2.0 / math.sqrt(math.log(2.0))) * (
        math.sqrt(log_term / n_weight) + math.sqrt(log_term / n_target)
    )


def marginal_radius(n: int, delta: float) -> float:
    """Concentration radius of one empirical probability vector."""
    _check_counts(delta, n)
    return 1.0 / math.sqrt(n) + math.sqrt(math.log(1.0 / delta) / n)
