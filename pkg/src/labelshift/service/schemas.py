"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ShiftSpecModel(BaseModel):
    kind: str
    rho: float = 0.5
    m: int = 1
    p_minor: float = 0.01
    alpha: float = 1.0
    seed: int = 0


class WeightRequest(BaseModel):
    """Estimate importance weights from raw source/target samples."""

    source_features: list[list[float]]
    source_labels: list[int]
    target_features: list[list[float]]
    k: int
    beta: float = 0.5
    delta: float = 0.05
    delta_scale: float = 1.0
    method: str = "rlls"
    lam: float | None = Field(default=None, description="None applies the trust rule")
    theta_max: float = 4.216
    learning_rate: float = 0.5
    epochs: int = 300
    l2_penalty: float = 1e-4
    seed: int = 0


class DeltasModel(BaseModel):
    delta_c: float
    delta_b: float
    delta_q: float
    delta_p: float


class WeightResponse(BaseModel):
    theta: list[float]
    weights: list[float]
    lam: float
    rho: float | None
    method: str
    sigma_min: float
    deltas: DeltasModel


class ExperimentRequest(BaseModel):
    k: int
    d: int = 5
    n_p: int = 2000
    n_q: int = 2000
    beta: float = 0.5
    source_shift: ShiftSpecModel
    target_shift: ShiftSpecModel
    h0_shift: ShiftSpecModel | None = None
    methods: list[str] = ["rlls", "bbsl", "oracle", "unweighted"]
    trials: int = 20
    seed: int = 0
    delta: float = 0.05
    theta_max: float = 4.216
    lambda_mode: str = "rule"
    lambdas: list[float] = [1.0]
    delta_scale: float = 1.0
    mean_scale: float = 2.0
    learning_rate: float = 0.5
    epochs: int = 300
    l2_penalty: float = 1e-4
    n_h0: int | None = None


class MetricsRecordModel(BaseModel):
    method: str
    trial: int
    weight_mse: float | None
    accuracy: float | None
    macro_f1: float | None
    lambda_used: float | None
    sigma_min_observed: float | None
    error: str | None = None


class ExperimentResponse(BaseModel):
    records: list[MetricsRecordModel]


class StreamRequest(BaseModel):
    source_features: list[list[float]]
    source_labels: list[int]
    target_features: list[list[float]]
    target_labels: list[int] | None = None
    k: int
    recompute_every: int
    beta_grid: list[float]
    lambda_grid: list[float]
    theta_max: float = 4.216
    delta: float = 0.05
    horizon: int
    delta_scale: float = 1.0
    true_weights: list[float] | None = None
    learning_rate: float = 0.5
    epochs: int = 300
    l2_penalty: float = 1e-4
    seed: int = 0


class StreamRecordModel(BaseModel):
    t: int
    lambda_star: float
    beta_star: float
    bound_value: float
    target_accuracy: float | None
    weight_mse: float | None


class StreamResponse(BaseModel):
    records: list[StreamRecordModel]


class BoundCurveRequest(BaseModel):
    n_p: int
    theta_max: float
    delta: float = 0.05
    n_points: int = 200
    # parameters of the optional (lambda, bound) table
    n_q: int | None = None
    k: int | None = None
    beta: float = 0.5
    sigma_min: float | None = None
    lambda_points: int = 21


class CurvePoint(BaseModel):
    sigma_min: float
    n_q_threshold: float


class LambdaPoint(BaseModel):
    lam: float
    bound_value: float


class BoundCurveResponse(BaseModel):
    threshold_curve: list[CurvePoint]
    lambda_table: list[LambdaPoint]


class HealthResponse(BaseModel):
    status: str
    version: str
