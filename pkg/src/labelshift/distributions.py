"""Label distributions, synthetic shift generators, and shift-magnitude metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec, UnsupportedClass

PROB_ATOL = 1e-12

SHIFT_KINDS = ("uniform", "tweak_one", "minority_class", "dirichlet")


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class LabelDist:
    """Probability vector over k >= 2 classes."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size < 2:
            raise InvalidSpec(f"need a 1-d vector with k >= 2, got shape {p.shape}")
        if np.any(p < 0):
            raise InvalidSpec("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > PROB_ATOL:
            raise InvalidSpec(f"probabilities sum to {p.sum()!r}, not 1")

    @property
    def k(self) -> int:
        return self.probs.size

    def to_csv_row(self) -> str:
        return ",".join(repr(float(x)) for x in self.probs)

    @classmethod
    def from_csv_row(cls, row: str) -> "LabelDist":
        return cls(np.array([float(tok) for tok in row.strip().split(",")]))


@dataclass(frozen=True)
class WeightShift:
    """Shift vector theta = w - 1 together with the trust factor applied to it."""

    theta: np.ndarray
    lambda_applied: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        if not 0.0 <= self.lambda_applied <= 1.0:
            raise InvalidSpec("lambda_applied must be in [0, 1]")

    @property
    def weights(self) -> np.ndarray:
        """Importance weights 1 + lambda*theta, clipped at zero."""
        return np.maximum(0.0, 1.0 + self.lambda_applied * self.theta)


@dataclass(frozen=True)
class ShiftSpec:
    """Parameters of one synthetic label-distribution shift.

    kind selects the generator; only the fields relevant to it are read.
    The seed makes the random choices (shifted class indices, Dirichlet
    draw) reproducible.
    """

    kind: str
    rho: float = 0.5
    m: int = 1
    p_minor: float = 0.01
    alpha: float = 1.0
    seed: int = 0

    def validate(self, k: int) -> None:
        if self.kind not in SHIFT_KINDS:
            raise InvalidSpec(f"unknown shift kind {self.kind!r}")
        if self.kind == "tweak_one" and not 1.0 / k < self.rho < 1.0:
            raise InvalidSpec(f"tweak_one needs 1/k < rho < 1, got rho={self.rho}")
        if self.kind == "minority_class":
            if not 0.0 < self.p_minor < 1.0 / k:
                raise InvalidSpec(f"minority_class needs 0 < p_minor < 1/k, got {self.p_minor}")
            if not 1 <= self.m < k:
                raise InvalidSpec(f"minority_class needs 1 <= m < k, got m={self.m}")
            if self.m * self.p_minor >= 1.0:
                raise InvalidSpec("total minority mass must stay below 1")
        if self.kind == "dirichlet" and not self.alpha > 0:
            raise InvalidSpec(f"dirichlet needs alpha > 0, got {self.alpha}")


def make_shift(spec: ShiftSpec, k: int) -> LabelDist:
    """Build the label distribution described by `spec` over k classes."""
    spec.validate(k)
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "uniform":
        return LabelDist(np.full(k, 1.0 / k))
    if spec.kind == "tweak_one":
        probs = np.full(k, (1.0 - spec.rho) / (k - 1))
        probs[rng.integers(k)] = spec.rho
        return LabelDist(probs)
    if spec.kind == "minority_class":
        rest = (1.0 - spec.m * spec.p_minor) / (k - spec.m)
        probs = np.full(k, rest)
        minors = rng.choice(k, size=spec.m, replace=False)
        probs[minors] = spec.p_minor
        return LabelDist(probs)
    # dirichlet
    probs = rng.dirichlet(np.full(k, spec.alpha))
    return LabelDist(probs / probs.sum())


def importance_weights(q: LabelDist, p: LabelDist) -> np.ndarray:
    """Elementwise ratio q_i/p_i; zero on classes both distributions miss."""
    if q.k != p.k:
        raise UnsupportedClass(f"dimension mismatch: {q.k} vs {p.k}")
    bad = (q.probs > 0) & (p.probs == 0)
    if np.any(bad):
        raise UnsupportedClass(f"target mass on unsupported classes {np.flatnonzero(bad).tolist()}")
    w = np.zeros(q.k)
    sup = p.probs > 0
    w[sup] = q.probs[sup] / p.probs[sup]
    return w


def shift_metrics(q: LabelDist, p: LabelDist) -> tuple[float, float]:
    """Return (sup_i q_i/p_i, sum_i q_i^2/p_i), both 1 exactly when q = p."""
    w = importance_weights(q, p)
    d_inf = float(w.max())
    d = float(np.dot(q.probs, w))
    return d_inf, d


def sample_labels(dist: LabelDist, n: int, seed) -> np.ndarray:
    """Draw n i.i.d. labels by inverse CDF; boundary ties go to the lower index."""
    if n < 1:
        raise InvalidSpec(f"need n >= 1, got {n}")
    rng = _as_rng(seed)
    support = np.flatnonzero(dist.probs > 0)
    cum = np.cumsum(dist.probs[support])
    cum[-1] = 1.0  # guard against fp undershoot at the top bin
    u = rng.random(n)
    idx = np.searchsorted(cum, u, side="left")
    return support[idx].astype(np.int64)
