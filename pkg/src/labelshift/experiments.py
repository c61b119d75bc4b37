"""Experiment orchestration: synthetic and IDX-backed datasets, the multi-trial
batch harness, metrics aggregation, and the flat config-file format."""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .classifier import LabeledDataset, TrainConfig
from .distributions import LabelDist, ShiftSpec, importance_weights, make_shift, sample_labels
from .errors import (
    BadMagic,
    CountMismatch,
    InvalidParams,
    InvalidSpec,
    LabelShiftError,
    TruncatedFile,
)
from .estimators import METHODS, SolverOptions
from .pipeline import DEFAULT_THETA_MAX, macro_f1, run_batch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


# ---------------------------------------------------------------------------
# data generation


def gen_gaussian_mixture(
    k: int,
    d: int,
    label_dist: LabelDist,
    n: int,
    seed: int,
    draw_seed: int = 0,
    mean_scale: float = 2.0,
) -> LabeledDataset:
    """Class-conditional Gaussians with means fixed by `seed` alone.

    Two calls sharing `seed` share the exact class-conditional laws, so a pair
    of calls with different label distributions is a pure label shift;
    draw_seed decorrelates the actual samples between such calls.
    """
    if n < 1:
        raise InvalidParams(f"need n >= 1, got {n}")
    if d < 1:
        raise InvalidParams(f"need d >= 1, got {d}")
    if label_dist.k != k:
        raise InvalidParams(f"label_dist has {label_dist.k} classes, expected {k}")
    mean_rng = np.random.default_rng(np.random.SeedSequence(seed))
    means = mean_scale * mean_rng.standard_normal((k, d))
    draw_rng = np.random.default_rng(np.random.SeedSequence((seed, draw_seed)))
    labels = sample_labels(label_dist, n, draw_rng)
    features = means[labels] + draw_rng.standard_normal((n, d))
    return LabeledDataset(features=features, labels=labels, k=k)


def load_idx(images_path: str, labels_path: str) -> LabeledDataset:
    """Read an IDX image/label file pair; pixels are scaled into [0, 1]."""
    with open(images_path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise TruncatedFile(f"{images_path}: header truncated")
        magic, n_images, n_rows, n_cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise BadMagic(f"{images_path}: magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")
        payload = fh.read(n_images * n_rows * n_cols)
    if len(payload) < n_images * n_rows * n_cols:
        raise TruncatedFile(f"{images_path}: expected {n_images * n_rows * n_cols} pixels")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(n_images, n_rows * n_cols)

    with open(labels_path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise TruncatedFile(f"{labels_path}: header truncated")
        magic, n_labels = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise BadMagic(f"{labels_path}: magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")
        raw = fh.read(n_labels)
    if len(raw) < n_labels:
        raise TruncatedFile(f"{labels_path}: expected {n_labels} labels")
    if n_labels != n_images:
        raise CountMismatch(f"{n_images} images vs {n_labels} labels")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    k = int(labels.max()) + 1 if labels.size else 0
    return LabeledDataset(features=images / 255.0, labels=labels, k=max(k, 2))


def resample_by_dist(pool: LabeledDataset, dist: LabelDist, n: int, rng: np.random.Generator) -> LabeledDataset:
    """Draw n samples whose labels follow `dist`, picking pool rows per class."""
    by_class = [np.flatnonzero(pool.labels == c) for c in range(pool.k)]
    for c in range(pool.k):
        if dist.probs[c] > 0 and by_class[c].size == 0:
            raise InvalidSpec(f"pool has no examples of class {c}")
    labels = sample_labels(dist, n, rng)
    rows = np.array([by_class[c][rng.integers(by_class[c].size)] for c in labels])
    return LabeledDataset(features=pool.features[rows], labels=labels, k=pool.k)


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass(frozen=True)
class ExperimentConfig:
    k: int
    d: int
    n_p: int
    n_q: int
    beta: float
    source_shift: ShiftSpec
    target_shift: ShiftSpec
    h0_shift: ShiftSpec | None = None
    methods: tuple[str, ...] = ("rlls", "bbsl", "oracle", "unweighted")
    trials: int = 20
    seed: int = 0
    delta: float = 0.05
    theta_max: float = DEFAULT_THETA_MAX
    lambda_mode: str = "rule"
    lambdas: tuple[float, ...] = (1.0,)
    data_source: str = "gaussian_mixture"
    images_path: str | None = None
    labels_path: str | None = None
    delta_scale: float = 1.0
    mean_scale: float = 2.0
    learning_rate: float = 0.5
    epochs: int = 300
    l2_penalty: float = 1e-4
    n_h0: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidParams("trials must be >= 1")
        if self.lambda_mode not in ("rule", "fixed"):
            raise InvalidParams(f"unknown lambda_mode {self.lambda_mode!r}")
        if self.data_source not in ("gaussian_mixture", "idx_files"):
            raise InvalidParams(f"unknown data_source {self.data_source!r}")
        if self.data_source == "idx_files" and not (self.images_path and self.labels_path):
            raise InvalidParams("idx_files mode needs images_path and labels_path")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise InvalidParams(f"unknown methods {sorted(unknown)}")
        self.source_shift.validate(self.k)
        self.target_shift.validate(self.k)
        if self.h0_shift is not None:
            self.h0_shift.validate(self.k)

    def train_config(self, seed: int = 0) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            l2_penalty=self.l2_penalty,
            seed=seed,
        )

    def solver_options(self) -> SolverOptions:
        return SolverOptions(delta_scale=self.delta_scale)


@dataclass(frozen=True)
class MetricsRecord:
    method: str
    trial: int
    weight_mse: float
    accuracy: float
    macro_f1: float
    lambda_used: float
    sigma_min_observed: float
    error: str | None = None

    CSV_HEADER = "method,trial,weight_mse,accuracy,macro_f1,lambda_used,sigma_min_observed,error"

    def to_csv_row(self) -> str:
        cells = [
            self.method,
            str(self.trial),
            repr(float(self.weight_mse)),
            repr(float(self.accuracy)),
            repr(float(self.macro_f1)),
            repr(float(self.lambda_used)),
            repr(float(self.sigma_min_observed)),
            self.error or "",
        ]
        return ",".join(cells)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))


@dataclass(frozen=True)
class TrialData:
    """Materialized datasets for one trial, plus the ground truth behind them."""

    source: LabeledDataset
    target: LabeledDataset
    h0_data: LabeledDataset | None
    source_dist: LabelDist
    target_dist: LabelDist
    true_weights: np.ndarray
    seed: int


def _trial_seeds(master: int, trial: int, n: int) -> list[int]:
    state = np.random.SeedSequence((master, trial)).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


def build_trial_data(cfg: ExperimentConfig, trial: int) -> TrialData:
    """Generate the seeded datasets for one trial of an experiment.

    Shift specs are re-seeded per trial, so random choices inside them (which
    class is tweaked, which classes are minorities, the Dirichlet draw) are
    resampled across trials.
    """
    s_shift, t_shift, h_shift, s_draw, t_draw, h_draw, pool_seed, batch_seed = _trial_seeds(
        cfg.seed, trial, 8
    )
    p = make_shift(replace(cfg.source_shift, seed=s_shift), cfg.k)
    q = make_shift(replace(cfg.target_shift, seed=t_shift), cfg.k)
    true_w = importance_weights(q, p)
    n_h0 = cfg.n_h0 if cfg.n_h0 is not None else cfg.n_p

    if cfg.data_source == "gaussian_mixture":
        source = gen_gaussian_mixture(
            cfg.k, cfg.d, p, cfg.n_p, cfg.seed, draw_seed=s_draw, mean_scale=cfg.mean_scale
        )
        target = gen_gaussian_mixture(
            cfg.k, cfg.d, q, cfg.n_q, cfg.seed, draw_seed=t_draw, mean_scale=cfg.mean_scale
        )
        h0_data = None
        if cfg.h0_shift is not None:
            h_dist = make_shift(replace(cfg.h0_shift, seed=h_shift), cfg.k)
            h0_data = gen_gaussian_mixture(
                cfg.k, cfg.d, h_dist, n_h0, cfg.seed, draw_seed=h_draw, mean_scale=cfg.mean_scale
            )
    else:
        pool = load_idx(cfg.images_path, cfg.labels_path)
        rng = np.random.default_rng(np.random.SeedSequence((pool_seed,)))
        half = rng.permutation(pool.n)
        source_pool = pool.subset(half[: pool.n // 2])
        target_pool = pool.subset(half[pool.n // 2 :])
        source = resample_by_dist(source_pool, p, cfg.n_p, rng)
        target = resample_by_dist(target_pool, q, cfg.n_q, rng)
        h0_data = None
        if cfg.h0_shift is not None:
            h_dist = make_shift(replace(cfg.h0_shift, seed=h_shift), cfg.k)
            h0_data = resample_by_dist(source_pool, h_dist, n_h0, rng)

    return TrialData(
        source=source,
        target=target,
        h0_data=h0_data,
        source_dist=p,
        target_dist=q,
        true_weights=true_w,
        seed=batch_seed,
    )


def run_experiment(cfg: ExperimentConfig) -> list[MetricsRecord]:
    """Run every (method, trial) cell of the experiment; failures become records."""
    records = []
    for trial in range(cfg.trials):
        data = build_trial_data(cfg, trial)
        for method in cfg.methods:
            lambdas = cfg.lambdas if (cfg.lambda_mode == "fixed" and method == "rlls") else (None,)
            for lam in lambdas:
                try:
                    result = run_batch(
                        data.source,
                        data.target.features,
                        beta=cfg.beta,
                        method=method,
                        lam=lam if cfg.lambda_mode == "fixed" and method == "rlls" else None,
                        theta_max=cfg.theta_max,
                        delta=cfg.delta,
                        solver_opts=cfg.solver_options(),
                        train_cfg=cfg.train_config(),
                        h0_data=data.h0_data,
                        true_weights=data.true_weights,
                        target_labels=data.target.labels,
                        seed=data.seed,
                    )
                    records.append(
                        MetricsRecord(
                            method=method,
                            trial=trial,
                            weight_mse=result.weight_mse,
                            accuracy=result.accuracy,
                            macro_f1=result.macro_f1,
                            lambda_used=result.lambda_used,
                            sigma_min_observed=result.sigma_min,
                        )
                    )
                except LabelShiftError as exc:
                    records.append(
                        MetricsRecord(
                            method=method,
                            trial=trial,
                            weight_mse=float("nan"),
                            accuracy=float("nan"),
                            macro_f1=float("nan"),
                            lambda_used=float("nan"),
                            sigma_min_observed=float("nan"),
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
    records.sort(key=lambda r: (r.method, r.trial, r.lambda_used))
    return records


def records_to_csv(records: list[MetricsRecord]) -> str:
    lines = [MetricsRecord.CSV_HEADER]
    lines.extend(r.to_csv_row() for r in records)
    return "\n".join(lines) + "\n"


def records_to_jsonl(records: list[MetricsRecord]) -> str:
    return "\n".join(r.to_json() for r in records) + "\n"


# ---------------------------------------------------------------------------
# flat key = value config files


def parse_kv(text: str) -> dict[str, str]:
    """Parse the flat `key = value` format, one key per line, # comments."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParams(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _shift_from_mapping(kv: dict[str, str], prefix: str) -> ShiftSpec | None:
    kind = kv.get(f"{prefix}_kind")
    if kind is None or kind.lower() in ("", "none"):
        return None
    return ShiftSpec(
        kind=kind,
        rho=float(kv.get(f"{prefix}_rho", 0.5)),
        m=int(kv.get(f"{prefix}_m", 1)),
        p_minor=float(kv.get(f"{prefix}_p_minor", 0.01)),
        alpha=float(kv.get(f"{prefix}_alpha", 1.0)),
        seed=int(kv.get(f"{prefix}_seed", 0)),
    )


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in value.split(",") if tok.strip())


def experiment_config_from_mapping(kv: dict[str, str]) -> ExperimentConfig:
    source = _shift_from_mapping(kv, "source_shift")
    target = _shift_from_mapping(kv, "target_shift")
    if source is None or target is None:
        raise InvalidParams("config needs source_shift_kind and target_shift_kind")
    kwargs = dict(
        k=int(kv["k"]),
        d=int(kv.get("d", 5)),
        n_p=int(kv["n_p"]),
        n_q=int(kv["n_q"]),
        beta=float(kv.get("beta", 0.5)),
        source_shift=source,
        target_shift=target,
        h0_shift=_shift_from_mapping(kv, "h0_shift"),
        trials=int(kv.get("trials", 20)),
        seed=int(kv.get("seed", 0)),
        delta=float(kv.get("delta", 0.05)),
        theta_max=float(kv.get("theta_max", DEFAULT_THETA_MAX)),
        lambda_mode=kv.get("lambda_mode", "rule"),
        data_source=kv.get("data_source", "gaussian_mixture"),
        images_path=kv.get("images_path"),
        labels_path=kv.get("labels_path"),
        delta_scale=float(kv.get("delta_scale", 1.0)),
        mean_scale=float(kv.get("mean_scale", 2.0)),
        learning_rate=float(kv.get("learning_rate", 0.5)),
        epochs=int(kv.get("epochs", 300)),
        l2_penalty=float(kv.get("l2_penalty", 1e-4)),
    )
    if "methods" in kv:
        kwargs["methods"] = tuple(tok.strip() for tok in kv["methods"].split(",") if tok.strip())
    if "lambdas" in kv:
        kwargs["lambdas"] = _floats(kv["lambdas"])
    if "n_h0" in kv:
        kwargs["n_h0"] = int(kv["n_h0"])
    return ExperimentConfig(**kwargs)


def paper_presets() -> dict[str, ExperimentConfig]:
    """Named default experiments mirroring the shift families we reproduce."""
    base = dict(k=10, d=5, n_p=10000, n_q=10000, beta=0.5, trials=20, delta=0.05)
    uniform = ShiftSpec(kind="uniform")
    presets = {}
    for rho in (0.5, 0.8):
        presets[f"tweak_one_{rho}"] = ExperimentConfig(
            source_shift=ShiftSpec(kind="tweak_one", rho=rho), target_shift=uniform, **base
        )
    for alpha in (0.01, 0.1, 1.0, 10.0):
        presets[f"dirichlet_{alpha}"] = ExperimentConfig(
            source_shift=uniform, target_shift=ShiftSpec(kind="dirichlet", alpha=alpha), **base
        )
    low = dict(base, n_p=1000, n_q=1000)
    presets["minority_low_sample"] = ExperimentConfig(
        source_shift=ShiftSpec(kind="minority_class", m=5, p_minor=0.01),
        target_shift=uniform,
        h0_shift=ShiftSpec(kind="tweak_one", rho=0.5),
        **low,
    )
    return presets
