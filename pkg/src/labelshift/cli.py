"""Thin command-line client for the labelshift service.

Every subcommand except `serve` talks to the HTTP API: by default to an
in-process copy of the app (no server needed), or to a running instance when
--server is given. File handling stays on the client; numeric work happens
behind the API.
"""

from __future__ import annotations

import argparse
import json
import sys

import httpx
import numpy as np

from .errors import LabelShiftError
from .experiments import (
    build_trial_data,
    experiment_config_from_mapping,
    load_idx,
    parse_kv,
)

SOURCE_CSV_HELP = "CSV with one sample per row: feature columns, integer label last"


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from .service import app  # imported lazily so --help stays fast

    transport = httpx.ASGITransport(app=app)
    return httpx.Client(transport=transport, base_url="http://labelshift.local", timeout=None)


def _post(server: str | None, path: str, payload: dict) -> dict:
    with _client(server) as client:
        response = client.post(path, json=payload)
    if response.status_code != 200:
        sys.exit(f"error: {path} returned {response.status_code}: {response.text}")
    return response.json()


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_labeled(args, prefix: str) -> tuple[np.ndarray, np.ndarray]:
    csv_path = getattr(args, prefix)
    if csv_path:
        table = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        return table[:, :-1], table[:, -1].astype(int)
    data = load_idx(getattr(args, f"{prefix}_images"), getattr(args, f"{prefix}_labels_idx"))
    return data.features, data.labels


def _load_features(args, prefix: str) -> np.ndarray:
    csv_path = getattr(args, prefix)
    if csv_path:
        return np.loadtxt(csv_path, delimiter=",", ndmin=2)
    data = load_idx(getattr(args, f"{prefix}_images"), getattr(args, f"{prefix}_labels_idx"))
    return data.features


def cmd_estimate_weights(args) -> None:
    source_x, source_y = _load_labeled(args, "source")
    target_x = _load_features(args, "target")
    k = args.k or int(source_y.max()) + 1
    payload = {
        "source_features": source_x.tolist(),
        "source_labels": source_y.tolist(),
        "target_features": target_x.tolist(),
        "k": k,
        "beta": args.beta,
        "delta": args.delta,
        "delta_scale": args.delta_scale,
        "method": args.method,
        "lam": args.lam,
        "theta_max": args.theta_max,
        "seed": args.seed,
    }
    body = _post(args.server, "/weights/estimate", payload)
    _write(json.dumps(body, indent=2) + "\n", args.out)


def _experiment_payload(kv: dict) -> dict:
    cfg = experiment_config_from_mapping(kv)  # validates the file client-side
    payload = {
        "k": cfg.k,
        "d": cfg.d,
        "n_p": cfg.n_p,
        "n_q": cfg.n_q,
        "beta": cfg.beta,
        "source_shift": vars(cfg.source_shift),
        "target_shift": vars(cfg.target_shift),
        "h0_shift": None if cfg.h0_shift is None else vars(cfg.h0_shift),
        "methods": list(cfg.methods),
        "trials": cfg.trials,
        "seed": cfg.seed,
        "delta": cfg.delta,
        "theta_max": cfg.theta_max,
        "lambda_mode": cfg.lambda_mode,
        "lambdas": list(cfg.lambdas),
        "delta_scale": cfg.delta_scale,
        "mean_scale": cfg.mean_scale,
        "learning_rate": cfg.learning_rate,
        "epochs": cfg.epochs,
        "l2_penalty": cfg.l2_penalty,
        "n_h0": cfg.n_h0,
    }
    return payload


def cmd_run_experiment(args) -> None:
    with open(args.config) as fh:
        kv = parse_kv(fh.read())
    if kv.get("data_source", "gaussian_mixture") == "idx_files":
        sys.exit("error: run the idx_files pipeline through the library API; the HTTP "
                 "service accepts synthetic configs only")
    body = _post(args.server, "/experiments/run", _experiment_payload(kv))
    records = body["records"]
    header = "method,trial,weight_mse,accuracy,macro_f1,lambda_used,sigma_min_observed,error"
    lines = [header]
    for r in records:
        lines.append(
            ",".join(
                [
                    r["method"],
                    str(r["trial"]),
                    _num(r["weight_mse"]),
                    _num(r["accuracy"]),
                    _num(r["macro_f1"]),
                    _num(r["lambda_used"]),
                    _num(r["sigma_min_observed"]),
                    r.get("error") or "",
                ]
            )
        )
    _write("\n".join(lines) + "\n", args.out)
    if args.jsonl:
        _write("\n".join(json.dumps(r) for r in records) + "\n", args.jsonl)


def _num(x) -> str:
    return "nan" if x is None else repr(float(x))


def cmd_stream(args) -> None:
    with open(args.config) as fh:
        kv = parse_kv(fh.read())
    payload = {
        "recompute_every": int(kv.get("recompute_every", 1)),
        "beta_grid": [float(tok) for tok in kv.get("beta_grid", "0.5").split(",")],
        "lambda_grid": [float(tok) for tok in kv.get("lambda_grid", "0,1").split(",")],
        "theta_max": float(kv.get("theta_max", 4.216)),
        "delta": float(kv.get("delta", 0.05)),
        "delta_scale": float(kv.get("delta_scale", 1.0)),
        "seed": int(kv.get("seed", 0)),
        "learning_rate": float(kv.get("learning_rate", 0.5)),
        "epochs": int(kv.get("epochs", 300)),
        "l2_penalty": float(kv.get("l2_penalty", 1e-4)),
    }
    if "source_csv" in kv:
        table = np.loadtxt(kv["source_csv"], delimiter=",", ndmin=2)
        target = np.loadtxt(kv["target_csv"], delimiter=",", ndmin=2)
        payload.update(
            source_features=table[:, :-1].tolist(),
            source_labels=table[:, -1].astype(int).tolist(),
            target_features=target.tolist(),
            k=int(kv["k"]),
            horizon=int(kv.get("horizon", target.shape[0])),
        )
        if "target_labels_csv" in kv:
            labels = np.loadtxt(kv["target_labels_csv"], delimiter=",").astype(int)
            payload["target_labels"] = labels.tolist()
    else:
        cfg = experiment_config_from_mapping(kv)
        data = build_trial_data(cfg, trial=int(kv.get("trial", 0)))
        payload.update(
            source_features=data.source.features.tolist(),
            source_labels=data.source.labels.tolist(),
            target_features=data.target.features.tolist(),
            target_labels=data.target.labels.tolist(),
            true_weights=data.true_weights.tolist(),
            k=cfg.k,
            horizon=int(kv.get("horizon", cfg.n_q)),
        )
    body = _post(args.server, "/stream/run", payload)
    header = "t,lambda_star,beta_star,bound_value,target_accuracy,weight_mse"
    lines = [header]
    for r in body["records"]:
        lines.append(
            ",".join(
                [
                    str(r["t"]),
                    _num(r["lambda_star"]),
                    _num(r["beta_star"]),
                    _num(r["bound_value"]),
                    _num(r["target_accuracy"]),
                    _num(r["weight_mse"]),
                ]
            )
        )
    _write("\n".join(lines) + "\n", args.out)


def cmd_bound_curve(args) -> None:
    payload = {
        "n_p": args.np,
        "theta_max": args.theta_max,
        "delta": args.delta,
        "n_points": args.points,
        "n_q": args.nq,
        "k": args.k,
        "beta": args.beta,
        "sigma_min": args.sigma_min,
        "lambda_points": args.lambda_points,
    }
    body = _post(args.server, "/bounds/curve", payload)
    curve_lines = ["sigma_min,n_q_threshold"]
    for row in body["threshold_curve"]:
        curve_lines.append(f"{row['sigma_min']!r},{row['n_q_threshold']!r}")
    _write("\n".join(curve_lines) + "\n", args.out)
    if body["lambda_table"]:
        lam_lines = ["lambda,bound_value"]
        for row in body["lambda_table"]:
            lam_lines.append(f"{row['lam']!r},{row['bound_value']!r}")
        _write("\n".join(lam_lines) + "\n", args.lambda_out)


def cmd_serve(args) -> None:
    import uvicorn

    uvicorn.run("labelshift.service:app", host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labelshift", description=__doc__)
    parser.add_argument("--server", default=None, help="base URL of a running service; "
                        "default runs the app in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-weights", help="estimate importance weights from data files")
    p.add_argument("--source", help=SOURCE_CSV_HELP)
    p.add_argument("--source-images", help="IDX image file for the source set")
    p.add_argument("--source-labels-idx", help="IDX label file for the source set")
    p.add_argument("--target", help="CSV of target feature rows")
    p.add_argument("--target-images", help="IDX image file for the target set")
    p.add_argument("--target-labels-idx", help="IDX label file for the target set")
    p.add_argument("--k", type=int, default=None, help="number of classes (default: infer)")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--delta-scale", type=float, default=1.0)
    p.add_argument("--method", default="rlls", choices=["rlls", "bbsl", "unweighted"])
    p.add_argument("--lam", type=float, default=None, help="fixed trust factor; default: rule")
    p.add_argument("--theta-max", type=float, default=4.216)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the weight JSON here instead of stdout")
    p.set_defaults(func=cmd_estimate_weights)

    p = sub.add_parser("run-experiment", help="run a multi-trial experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.add_argument("--jsonl", default=None, help="also mirror records as JSON lines")
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("stream", help="run the streaming adaptation loop from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("bound-curve", help="emit the trust-threshold curve as CSV")
    p.add_argument("--np", type=int, required=True, help="source sample count")
    p.add_argument("--theta-max", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--nq", type=int, default=None, help="target count for the lambda table")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--sigma-min", type=float, default=None)
    p.add_argument("--lambda-points", type=int, default=21)
    p.add_argument("--out", default=None, help="threshold curve CSV path (default stdout)")
    p.add_argument("--lambda-out", default=None, help="lambda table CSV path (default stdout)")
    p.set_defaults(func=cmd_bound_curve)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except LabelShiftError as exc:
        sys.exit(f"error: {type(exc).__name__}: {exc}")
    except OSError as exc:
        sys.exit(f"error: {exc}")


if __name__ == "__main__":
    main()
