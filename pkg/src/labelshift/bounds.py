"""Closed-form evaluators for the generalization and estimation-error bounds,
the weight-trust threshold curve, and the assumption-drift diagnostic."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .distributions import LabelDist, sample_labels
from .errors import BelowCritical, DensityZero, InvalidParams
from .estimators import epsilon_theta


@dataclass(frozen=True)
class BoundParams:
    """Every scalar entering the bound formulas.

    theta_norm carries the actual shift magnitude ||theta||_2; theta_max an a
    priori cap on it. The exact-bound evaluator reads the former, the crude one
    the latter. complexity_term stands in for the (user-supplied) complexity of
    the hypothesis class; d_e, when positive, adds the drift inflation
    2*(1+lambda)*d_e for data that only approximately satisfies label shift.
    """

    n_p: int
    n_q: int
    beta: float
    lam: float
    delta: float
    k: int
    sigma_min: float
    d_inf: float = 1.0
    d: float = 1.0
    complexity_term: float = 0.0
    theta_norm: float | None = None
    theta_max: float | None = None
    d_e: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.delta <= 0.5:
            raise InvalidParams(f"need 0 < delta <= 0.5, got {self.delta}")
        if not 0.0 < self.beta < 1.0:
            raise InvalidParams(f"need 0 < beta < 1, got {self.beta}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidParams(f"need 0 <= lambda <= 1, got {self.lam}")
        if self.d < 1.0 or self.d_inf < 1.0:
            raise InvalidParams("divergences are >= 1 by definition")
        if self.n_p < 1 or self.n_q < 1:
            raise InvalidParams("sample counts must be >= 1")
        if self.k < 2:
            raise InvalidParams("need k >= 2")
        if self.sigma_min <= 0:
            raise InvalidParams("sigma_min must be positive")
        if self.complexity_term < 0 or self.d_e < 0:
            raise InvalidParams("complexity_term and d_e must be nonnegative")


def _source_term(p: BoundParams, union_factor: float) -> float:
    n = p.beta * p.n_p
    log_term = math.log(2.0 * union_factor / p.delta)
    bennett = p.d_inf * math.sqrt(log_term / n)
    bernstein = 2.0 * p.d_inf * log_term / n + math.sqrt(2.0 * p.d * log_term / n)
    return p.complexity_term + min(bennett, bernstein)


def _shift_term(p: BoundParams, theta: float, union_factor: float) -> float:
    eps = epsilon_theta(
        p.n_p, p.n_q, p.beta, theta, p.delta, p.sigma_min, p.k, union_factor=union_factor
    )
    return (1.0 - p.lam) * theta + p.lam * eps


def _evaluate(p: BoundParams, theta: float, union_factor: float = 1.0) -> float:
    value = _source_term(p, union_factor) + _shift_term(p, theta, union_factor)
    if p.d_e > 0:
        value += 2.0 * (1.0 + p.lam) * p.d_e
    return value


def generalization_bound(p: BoundParams) -> float:
    """Excess-risk bound in terms of the true shift magnitude ||theta||_2."""
    if p.theta_norm is None:
        raise InvalidParams("generalization_bound needs theta_norm")
    return _evaluate(p, p.theta_norm)


def crude_bound(p: BoundParams) -> float:
    """Same bound with the a priori cap theta_max in place of ||theta||_2."""
    if p.theta_max is None:
        raise InvalidParams("crude_bound needs theta_max")
    return _evaluate(p, p.theta_max)


def streaming_bound(p: BoundParams, t: int) -> float:
    """Bound after t stream steps: union-inflated logs, n_q replaced by t."""
    if t < 1:
        raise InvalidParams(f"need t >= 1, got {t}")
    if p.theta_norm is None:
        raise InvalidParams("streaming_bound needs theta_norm")
    return _evaluate(replace(p, n_q=t), p.theta_norm, union_factor=float(t))


def lambda_threshold(n_p: int, theta_max: float, sigma_min: float) -> float:
    """Target sample count above which estimated weights earn full trust."""
    if n_p < 1:
        raise InvalidParams("n_p must be >= 1")
    if theta_max <= 0:
        raise InvalidParams("theta_max must be positive")
    margin = sigma_min - 1.0 / math.sqrt(n_p)
    if margin <= 0:
        raise BelowCritical(f"sigma_min = {sigma_min} <= 1/sqrt(n_p); threshold is infinite")
    return 1.0 / (theta_max**2 * margin**2)


def threshold_curve(n_p: int, theta_max: float, n_points: int = 200) -> np.ndarray:
    """(sigma_min, n_q threshold) pairs on a log grid of sigma_min values."""
    low = (1.0 + 1e-3) / math.sqrt(n_p)
    if low >= 1.0:
        raise InvalidParams(f"n_p = {n_p} leaves no sigma_min range below 1")
    sigmas = np.geomspace(low, 1.0, n_points)
    thresholds = [lambda_threshold(n_p, theta_max, s) for s in sigmas]
    return np.column_stack([sigmas, thresholds])


def lambda_bound_table(p: BoundParams, lambdas) -> np.ndarray:
    """(lambda, crude bound) pairs over a grid of trust factors."""
    rows = [(lam, crude_bound(replace(p, lam=float(lam)))) for lam in lambdas]
    return np.array(rows)


def finite_class_complexity(d: float, d_inf: float, class_size: int, beta: float, n_p: int, delta: float) -> float:
    """Complexity stand-in for a finite hypothesis class of the given size."""
    if class_size < 1:
        raise InvalidParams("class_size must be >= 1")
    if not 0.0 < beta < 1.0:
        raise InvalidParams("need 0 < beta < 1")
    n = beta * n_p
    log_term = math.log(class_size) + math.log(3.0 / delta)
    return math.sqrt(2.0 * d * log_term / n) + 2.0 * d_inf * log_term / (3.0 * n)


@dataclass(frozen=True)
class DriftEstimate:
    value: float
    std_error: float
    n_mc: int


@dataclass(frozen=True)
class GaussianConditional:
    """Isotropic Gaussian class conditionals: X | Y=y ~ N(means[y], scale^2 I)."""

    means: np.ndarray
    scale: float = 1.0

    def sample(self, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mu = np.asarray(self.means, dtype=float)[labels]
        return mu + self.scale * rng.standard_normal(mu.shape)

    def pdf(self, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
        mu = np.asarray(self.means, dtype=float)[labels]
        d = mu.shape[1]
        sq = np.sum((x - mu) ** 2, axis=1)
        norm = (2.0 * math.pi * self.scale**2) ** (d / 2.0)
        return np.exp(-0.5 * sq / self.scale**2) / norm


def drift_term(q_cond, p_cond, q: LabelDist, n_mc: int, seed) -> DriftEstimate:
    """Monte-Carlo estimate of E_target |1 - p(X|Y)/q(X|Y)|.

    Zero exactly when the class conditionals agree, i.e. under label shift.
    """
    if n_mc < 2:
        raise InvalidParams("need n_mc >= 2 for a standard error")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    labels = sample_labels(q, n_mc, rng)
    x = q_cond.sample(labels, rng)
    q_density = np.asarray(q_cond.pdf(x, labels), dtype=float)
    if np.any(q_density <= 0):
        raise DensityZero("q(x|y) = 0 at a sampled point")
    ratio = np.asarray(p_cond.pdf(x, labels), dtype=float) / q_density
    values = np.abs(1.0 - ratio)
    return DriftEstimate(
        value=float(values.mean()),
        std_error=float(values.std(ddof=1) / math.sqrt(n_mc)),
        n_mc=n_mc,
    )
