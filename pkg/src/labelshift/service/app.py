"""FastAPI service exposing weight estimation, experiments, streaming runs,
and bound-curve tables over HTTP. The CLI is a thin client of this app."""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bounds import BoundParams, lambda_bound_table, threshold_curve
from ..classifier import LabeledDataset, TrainConfig
from ..distributions import ShiftSpec
from ..errors import LabelShiftError
from ..estimators import SolverOptions
from ..experiments import ExperimentConfig, run_experiment
from ..pipeline import run_batch
from ..streaming import StreamConfig, run_stream
from . import schemas

app = FastAPI(
    title="labelshift",
    description="Importance-weight estimation and label-shift correction service",
    version=__version__,
)


def _nan_to_none(x: float) -> float | None:
    return None if x is None or math.isnan(x) else float(x)


def _dataset(features: list[list[float]], labels: list[int], k: int) -> LabeledDataset:
    return LabeledDataset(features=np.asarray(features, dtype=float), labels=np.asarray(labels), k=k)


def _shift(model: schemas.ShiftSpecModel | None) -> ShiftSpec | None:
    if model is None:
        return None
    return ShiftSpec(
        kind=model.kind,
        rho=model.rho,
        m=model.m,
        p_minor=model.p_minor,
        alpha=model.alpha,
        seed=model.seed,
    )


@app.get("/health", response_model=schemas.HealthResponse)
def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/weights/estimate", response_model=schemas.WeightResponse)
def estimate_weights(req: schemas.WeightRequest) -> schemas.WeightResponse:
    try:
        source = _dataset(req.source_features, req.source_labels, req.k)
        result = run_batch(
            source,
            np.asarray(req.target_features, dtype=float),
            beta=req.beta,
            method=req.method,
            lam=req.lam,
            theta_max=req.theta_max,
            delta=req.delta,
            solver_opts=SolverOptions(delta_scale=req.delta_scale),
            train_cfg=TrainConfig(
                learning_rate=req.learning_rate, epochs=req.epochs, l2_penalty=req.l2_penalty
            ),
            seed=req.seed,
        )
    except LabelShiftError as exc:
        raise HTTPException(status_code=422, detail=f"{type(exc).__name__}: {exc}") from exc
    est = result.estimate
    return schemas.WeightResponse(
        theta=est.theta_hat.tolist(),
        weights=est.weights.tolist(),
        lam=est.lam,
        rho=None if math.isnan(est.rho_selected) else est.rho_selected,
        method=est.method,
        sigma_min=result.sigma_min,
        deltas=schemas.DeltasModel(
            delta_c=result.deltas.delta_c,
            delta_b=result.deltas.delta_b,
            delta_q=result.deltas.delta_q,
            delta_p=result.deltas.delta_p,
        ),
    )


@app.post("/experiments/run", response_model=schemas.ExperimentResponse)
def experiments_run(req: schemas.ExperimentRequest) -> schemas.ExperimentResponse:
    try:
        cfg = ExperimentConfig(
            k=req.k,
            d=req.d,
            n_p=req.n_p,
            n_q=req.n_q,
            beta=req.beta,
            source_shift=_shift(req.source_shift),
            target_shift=_shift(req.target_shift),
            h0_shift=_shift(req.h0_shift),
            methods=tuple(req.methods),
            trials=req.trials,
            seed=req.seed,
            delta=req.delta,
            theta_max=req.theta_max,
            lambda_mode=req.lambda_mode,
            lambdas=tuple(req.lambdas),
            delta_scale=req.delta_scale,
            mean_scale=req.mean_scale,
            learning_rate=req.learning_rate,
            epochs=req.epochs,
            l2_penalty=req.l2_penalty,
            n_h0=req.n_h0,
        )
        records = run_experiment(cfg)
    except LabelShiftError as exc:
        raise HTTPException(status_code=422, detail=f"{type(exc).__name__}: {exc}") from exc
    return schemas.ExperimentResponse(
        records=[
            schemas.MetricsRecordModel(
                method=r.method,
                trial=r.trial,
                weight_mse=_nan_to_none(r.weight_mse),
                accuracy=_nan_to_none(r.accuracy),
                macro_f1=_nan_to_none(r.macro_f1),
                lambda_used=_nan_to_none(r.lambda_used),
                sigma_min_observed=_nan_to_none(r.sigma_min_observed),
                error=r.error,
            )
            for r in records
        ]
    )


@app.post("/stream/run", response_model=schemas.StreamResponse)
def stream_run(req: schemas.StreamRequest) -> schemas.StreamResponse:
    try:
        cfg = StreamConfig(
            recompute_every=req.recompute_every,
            beta_grid=tuple(req.beta_grid),
            lambda_grid=tuple(req.lambda_grid),
            theta_max=req.theta_max,
            delta=req.delta,
            horizon=req.horizon,
        )
        source = _dataset(req.source_features, req.source_labels, req.k)
        records = run_stream(
            source,
            np.asarray(req.target_features, dtype=float),
            None if req.target_labels is None else np.asarray(req.target_labels),
            cfg,
            TrainConfig(
                learning_rate=req.learning_rate, epochs=req.epochs, l2_penalty=req.l2_penalty
            ),
            true_weights=None if req.true_weights is None else np.asarray(req.true_weights),
            solver_opts=SolverOptions(delta_scale=req.delta_scale),
            seed=req.seed,
        )
    except LabelShiftError as exc:
        raise HTTPException(status_code=422, detail=f"{type(exc).__name__}: {exc}") from exc
    return schemas.StreamResponse(
        records=[
            schemas.StreamRecordModel(
                t=r.t,
                lambda_star=r.lambda_star,
                beta_star=r.beta_star,
                bound_value=r.bound_value,
                target_accuracy=_nan_to_none(r.target_accuracy),
                weight_mse=_nan_to_none(r.weight_mse),
            )
            for r in records
        ]
    )


@app.post("/bounds/curve", response_model=schemas.BoundCurveResponse)
def bounds_curve(req: schemas.BoundCurveRequest) -> schemas.BoundCurveResponse:
    try:
        curve = threshold_curve(req.n_p, req.theta_max, req.n_points)
        lam_rows = []
        if req.n_q is not None and req.k is not None and req.sigma_min is not None:
            params = BoundParams(
                n_p=req.n_p,
                n_q=req.n_q,
                beta=req.beta,
                lam=0.0,
                delta=req.delta,
                k=req.k,
                sigma_min=req.sigma_min,
                theta_max=req.theta_max,
            )
            lams = np.linspace(0.0, 1.0, req.lambda_points)
            lam_rows = lambda_bound_table(params, lams).tolist()
    except LabelShiftError as exc:
        raise HTTPException(status_code=422, detail=f"{type(exc).__name__}: {exc}") from exc
    return schemas.BoundCurveResponse(
        threshold_curve=[schemas.CurvePoint(sigma_min=s, n_q_threshold=t) for s, t in curve],
        lambda_table=[schemas.LambdaPoint(lam=l, bound_value=b) for l, b in lam_rows],
    )
