"""Importance-weight estimators: the regularized solver, the plug-in baseline,
the trust-factor rule, and the closed-form error radius of the shift estimate."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .confusion import ConfusionEstimate, Deltas
from .distributions import LabelDist
from .errors import DimensionMismatch, InvalidDelta, InvalidParams, NonConvergence, SingularConfusion

KKT_TOL = 1e-8
SINGULAR_TOL = 1e-12

METHODS = ("rlls", "bbsl", "oracle", "unweighted")


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of the proximal solver and the regularization grid.

    delta_scale multiplies delta_c wherever the estimator consumes it, both in
    the rho grid and in the selection penalty; 1.0 is the theoretical value and
    0.01 the preset that behaves better in practice. tol is a relative
    objective-change early stop; success is always judged by the KKT residual.
    """

    max_iters: int = 200000
    tol: float = 1e-30
    step_rule: str = "fixed"
    rho_grid_max_exponent: int = 12
    delta_scale: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidParams("max_iters must be >= 1")
        if self.tol <= 0:
            raise InvalidParams("tol must be positive")
        if self.step_rule not in ("fixed", "backtracking"):
            raise InvalidParams(f"unknown step_rule {self.step_rule!r}")
        if self.delta_scale <= 0:
            raise InvalidParams("delta_scale must be positive")


@dataclass(frozen=True)
class WeightEstimate:
    """Estimated shift, derived weights, and bookkeeping about how they were made."""

    theta_hat: np.ndarray
    weights: np.ndarray
    lam: float
    method: str
    rho_selected: float = float("nan")
    objective: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "theta_hat", np.asarray(self.theta_hat, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.method not in METHODS:
            raise InvalidParams(f"unknown method {self.method!r}")
        if np.any(self.weights < 0):
            raise InvalidParams("weights must be nonnegative")

    def to_json(self) -> str:
        return json.dumps(
            {
                "theta": self.theta_hat.tolist(),
                "weights": self.weights.tolist(),
                "lambda": self.lam,
                "rho": self.rho_selected,
                "method": self.method,
            }
        )


@dataclass(frozen=True)
class ProxResult:
    """Solution of one penalized least-squares subproblem."""

    theta: np.ndarray
    objectives: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool


def _matrix(c) -> np.ndarray:
    return c.matrix if isinstance(c, ConfusionEstimate) else np.asarray(c, dtype=float)


def kkt_residual(c, b_hat: np.ndarray, rho: float, theta: np.ndarray) -> float:
    """First-order optimality residual of 0.5*||C t - b||^2 + rho*||t||."""
    c = _matrix(c)
    grad = c.T @ (c @ theta - b_hat)
    norm = np.linalg.norm(theta)
    if norm == 0.0:
        return max(0.0, float(np.linalg.norm(grad)) - rho)
    return float(np.linalg.norm(grad + rho * theta / norm))


def prox_solve(c, b_hat: np.ndarray, rho: float, opts: SolverOptions | None = None) -> ProxResult:
    """Proximal gradient descent on 0.5*||C t - b||^2 + rho*||t||_2.

    The prox of the unsquared norm is the block soft threshold
    v -> max(0, 1 - step*rho/||v||) * v, so iterates can land exactly at zero.
    """
    opts = opts or SolverOptions()
    c = _matrix(c)
    b_hat = np.asarray(b_hat, dtype=float)
    if c.shape[0] != b_hat.size:
        raise DimensionMismatch(f"matrix {c.shape} vs rhs {b_hat.shape}")
    if rho < 0:
        raise InvalidParams("rho must be nonnegative")

    gram = c.T @ c
    lin = c.T @ b_hat
    lipschitz = float(np.linalg.eigvalsh(gram)[-1])
    if lipschitz == 0.0:
        return ProxResult(np.zeros_like(b_hat), np.array([rho * 0.0]), 0.0, 0, True)
    step = 1.0 / lipschitz

    def objective(t):
        r = c @ t - b_hat
        return 0.5 * float(r @ r) + rho * float(np.linalg.norm(t))

    theta = np.zeros_like(b_hat)
    obj = objective(theta)
    history = [obj]
    for it in range(1, opts.max_iters + 1):
        grad = gram @ theta - lin
        if opts.step_rule == "backtracking":
            step = _backtrack(c, b_hat, rho, theta, grad, step)
        cand = theta - step * grad
        norm = np.linalg.norm(cand)
        shrink = max(0.0, 1.0 - step * rho / norm) if norm > 0 else 0.0
        theta = shrink * cand
        new_obj = objective(theta)
        resid = kkt_residual(c, b_hat, rho, theta)
        rel_change = abs(obj - new_obj) / max(abs(obj), 1.0)
        obj = new_obj
        history.append(obj)
        if resid <= KKT_TOL or rel_change < opts.tol:
            return ProxResult(theta, np.array(history), resid, it, resid <= KKT_TOL)
    return ProxResult(theta, np.array(history), resid, opts.max_iters, resid <= KKT_TOL)


def _backtrack(c, b_hat, rho, theta, grad, step, shrink_factor=0.5, grow_factor=2.0):
    """Largest step (up to doubling) passing the quadratic decrease test."""

    def smooth(t):
        r = c @ t - b_hat
        return 0.5 * float(r @ r)

    base = smooth(theta)
    step = step * grow_factor
    for _ in range(60):
        cand = theta - step * grad
        norm = np.linalg.norm(cand)
        factor = max(0.0, 1.0 - step * rho / norm) if norm > 0 else 0.0
        nxt = factor * cand
        diff = nxt - theta
        if smooth(nxt) <= base + float(grad @ diff) + float(diff @ diff) / (2.0 * step):
            return step
        step *= shrink_factor
    return step


def solve_theta_rho(c, b_hat: np.ndarray, rho: float, opts: SolverOptions | None = None) -> np.ndarray:
    """Solve one subproblem of the regularization path; raise on non-convergence."""
    result = prox_solve(c, b_hat, rho, opts)
    if not result.converged:
        raise NonConvergence(
            f"prox solver stalled at residual {result.kkt_residual:.3e} after "
            f"{result.iterations} iterations",
            best=result.theta,
            residual=result.kkt_residual,
        )
    return result.theta


def _grid_prox_solve(
    mat: np.ndarray, b_hat: np.ndarray, rhos: np.ndarray, opts: SolverOptions, check_every: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Run the proximal iteration for every rho at once.

    Rows evolve independently with the shared 1/L step, so each row follows
    exactly the sequence the single-rho solver would produce. Returns the
    iterates and their final KKT residuals.
    """
    gram = mat.T @ mat
    lin = mat.T @ b_hat
    lipschitz = float(np.linalg.eigvalsh(gram)[-1])
    m = rhos.size
    iterates = np.zeros((m, b_hat.size))
    if lipschitz == 0.0:
        return iterates, np.zeros(m)
    step = 1.0 / lipschitz
    tiny = np.finfo(float).tiny

    def residuals(z, grad):
        norms = np.linalg.norm(z, axis=1)
        active = norms > 0
        res = np.maximum(0.0, np.linalg.norm(grad, axis=1) - rhos)
        if np.any(active):
            adj = grad[active] + rhos[active, None] * z[active] / norms[active, None]
            res[active] = np.linalg.norm(adj, axis=1)
        return res

    for it in range(1, opts.max_iters + 1):
        grad = iterates @ gram - lin
        if it % check_every == 1 or check_every == 1:
            if np.all(residuals(iterates, grad) <= KKT_TOL):
                break
        cand = iterates - step * grad
        norms = np.maximum(np.linalg.norm(cand, axis=1), tiny)
        shrink = np.maximum(0.0, 1.0 - step * rhos / norms)
        iterates = shrink[:, None] * cand
    final = residuals(iterates, iterates @ gram - lin)
    return iterates, final


def select_theta(
    c,
    b_hat: np.ndarray,
    deltas: Deltas,
    opts: SolverOptions | None = None,
) -> tuple[np.ndarray, float]:
    """Pick the best shift estimate along a geometric regularization grid.

    Solves the penalized subproblem at rho_i = 2^(i+1) * (scale*delta_c) * delta_b
    for i = 0..rho_grid_max_exponent and keeps the candidate minimizing
    ||C t - b|| + 3*(scale*delta_c)*||t||; ties go to the larger rho. Grid
    points whose subproblem fails to converge are dropped; only if every point
    fails does the failure propagate.
    """
    opts = opts or SolverOptions()
    mat = _matrix(c)
    b_hat = np.asarray(b_hat, dtype=float)
    if mat.shape[0] != b_hat.size:
        raise DimensionMismatch(f"matrix {mat.shape} vs rhs {b_hat.shape}")
    scaled_dc = opts.delta_scale * deltas.delta_c
    penalty = 3.0 * scaled_dc

    exponents = np.arange(opts.rho_grid_max_exponent + 1)
    rhos = 2.0 ** (exponents + 1) * scaled_dc * deltas.delta_b
    thetas, residuals = _grid_prox_solve(mat, b_hat, rhos, opts)
    converged = residuals <= KKT_TOL
    if not np.any(converged):
        worst = int(np.argmin(residuals))
        raise NonConvergence(
            "no regularization grid point converged",
            best=thetas[worst],
            residual=float(residuals[worst]),
        )
    objectives = np.linalg.norm(thetas @ mat.T - b_hat, axis=1) + penalty * np.linalg.norm(
        thetas, axis=1
    )
    objectives[~converged] = math.inf
    best = int(np.flatnonzero(objectives <= objectives.min())[-1])
    return thetas[best], float(rhos[best])


def bbsl_weights(c_hat: ConfusionEstimate, q_hat: LabelDist) -> WeightEstimate:
    """Plug-in baseline: invert the empirical confusion matrix directly."""
    if c_hat.k != q_hat.k:
        raise DimensionMismatch(f"confusion is {c_hat.k}x{c_hat.k}, q_hat has {q_hat.k}")
    if c_hat.sigma_min <= SINGULAR_TOL:
        raise SingularConfusion(f"sigma_min = {c_hat.sigma_min:.3e}")
    w = np.linalg.solve(c_hat.matrix, q_hat.probs)
    return WeightEstimate(
        theta_hat=w - 1.0,
        weights=np.maximum(0.0, w),
        lam=1.0,
        method="bbsl",
    )


def regularized_weights(theta_hat: np.ndarray, lam: float) -> WeightEstimate:
    """Interpolate between no weighting (lam=0) and the full estimate (lam=1)."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidParams(f"lambda must be in [0, 1], got {lam}")
    theta_hat = np.asarray(theta_hat, dtype=float)
    return WeightEstimate(
        theta_hat=theta_hat,
        weights=np.maximum(0.0, 1.0 + lam * theta_hat),
        lam=lam,
        method="rlls",
    )


def epsilon_theta(
    n_p: int,
    n_q: int,
    beta: float,
    theta_norm: float,
    delta: float,
    sigma_min: float,
    k: int,
    *,
    union_factor: float = 1.0,
) -> float:
    """High-probability radius of the shift-estimation error, explicit constants.

    union_factor > 1 inflates every log argument, which is how the streaming
    evaluator accounts for re-estimating at each step.
    """
    if not 0.0 < delta <= 0.5:
        raise InvalidDelta(f"need 0 < delta <= 0.5, got {delta}")
    if not 0.0 < beta < 1.0:
        raise InvalidParams(f"need 0 < beta < 1, got {beta}")
    if sigma_min <= 0:
        raise InvalidParams("sigma_min must be positive")
    if n_p < 1 or n_q < 1:
        raise InvalidParams("sample counts must be >= 1")
    n_w = (1.0 - beta) * n_p
    u = union_factor
    return (
        2.0 * theta_norm * math.log(3.0 * k * u / delta) / n_w
        + theta_norm * math.sqrt(18.0 * math.log(6.0 * k * u / delta) / n_w)
        + math.sqrt(36.0 * math.log(3.0 * u / delta) / n_w)
        + math.sqrt(36.0 * math.log(3.0 * u / delta) / n_q)
    ) / sigma_min


def lambda_rule(
    n_q: int,
    n_p: int,
    theta_max: float,
    sigma_min_est: float,
    continuous: bool = False,
    *,
    k: int | None = None,
    beta: float = 0.5,
    delta: float = 0.1,
) -> float:
    """Decide how much to trust estimated weights given the sample sizes.

    Binary mode returns 1 exactly when n_q clears the trust threshold
    1/(theta_max^2 (sigma_min - 1/sqrt(n_p))^2) and sigma_min exceeds
    1/sqrt(n_p), else 0. Continuous mode returns the clipped margin
    1 - epsilon_theta/theta_max and needs k for the radius.
    """
    if sigma_min_est <= 0:
        raise InvalidParams("sigma_min_est must be positive")
    if theta_max <= 0:
        raise InvalidParams("theta_max must be positive")
    if continuous:
        if k is None:
            raise InvalidParams("continuous mode needs k")
        eps = epsilon_theta(n_p, n_q, beta, theta_max, delta, sigma_min_est, k)
        return float(min(1.0, max(0.0, 1.0 - eps / theta_max)))
    margin = sigma_min_est - 1.0 / math.sqrt(n_p)
    if margin <= 0:
        return 0.0
    threshold = 1.0 / (theta_max**2 * margin**2)
    return 1.0 if n_q >= threshold else 0.0
