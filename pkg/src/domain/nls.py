"""
Inner weighted least-squares fits: the best approximation of a fixed model's
values by a rival model over a design measure.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.stats import qmc

from .errors import InvalidArgumentError
from .model import FitResult
from .ports import RegressionModel

_logger = logging.getLogger(__name__)

MAX_ITER = 200
SSE_RTOL = 1e-12
GRAD_TOL = 1e-10
CONVERGED_GRAD_RTOL = 1e-8
BOUNDARY_RTOL = 1e-9
INITIAL_DAMPING = 1e-3
DAMPING_DOWN = 0.3
DAMPING_UP = 10.0
MAX_DAMPING = 1e12
MAX_HALVINGS = 4
TIE_SSE_RTOL = 1e-6
TIE_THETA_RTOL = 1e-3


def default_starts(
    model: RegressionModel,
    previous: Optional[Sequence[float]] = None,
    count: int = 5,
    seed: int = 20240601,
) -> List[np.ndarray]:
    """
    Puntos de arranque: el θ previo (si existe), el centro de la caja y
    puntos de Halton aleatorizados con `seed` hasta completar `count`.
    """
    if count < 1:
        raise InvalidArgumentError(f"need at least one start, got count={count}")
    space = model.param_space
    starts: List[np.ndarray] = []
    if previous is not None:
        starts.append(space.clip(np.asarray(previous, dtype=float)))
    if len(starts) < count:
        starts.append(space.center)
    remaining = count - len(starts)
    if remaining > 0:
        sampler = qmc.Halton(d=space.dim, scramble=True, seed=seed)
        unit = sampler.random(remaining)
        starts.extend(qmc.scale(unit, space.lower_array, space.upper_array))
    return starts


def _sse(model: RegressionModel, theta: np.ndarray, points, weights, target) -> float:
    residual = target - model.eval(points, theta)
    return float(weights @ (residual * residual))


def _gradient(model, theta, points, weights, target) -> np.ndarray:
    residual = target - model.eval(points, theta)
    jac = model.grad_theta(points, theta)
    return -2.0 * jac.T @ (weights * residual)


def _projected(grad: np.ndarray, theta: np.ndarray, lower: np.ndarray, upper: np.ndarray, slack: np.ndarray) -> np.ndarray:
    # Components pushing out of the box at an active bound do not count.
    pg = grad.copy()
    pg[(theta <= lower + slack) & (grad > 0)] = 0.0
    pg[(theta >= upper - slack) & (grad < 0)] = 0.0
    return pg


def _gauss_newton(model: RegressionModel, start: np.ndarray, points, weights, target):
    space = model.param_space
    lower, upper = space.lower_array, space.upper_array
    slack = BOUNDARY_RTOL * space.width
    theta = space.clip(np.asarray(start, dtype=float))
    sse = _sse(model, theta, points, weights, target)
    damping = INITIAL_DAMPING
    iterations = 0

    while iterations < MAX_ITER:
        iterations += 1
        residual = target - model.eval(points, theta)
        jac = model.grad_theta(points, theta)
        weighted_jac = jac * weights[:, None]
        normal = jac.T @ weighted_jac
        rhs = weighted_jac.T @ residual
        pg = _projected(-2.0 * rhs, theta, lower, upper, slack)
        if np.max(np.abs(pg)) <= GRAD_TOL:
            break

        scale = float(np.mean(np.diag(normal)))
        scale = scale if scale > 0 else 1.0
        accepted = False
        while not accepted and damping <= MAX_DAMPING:
            lhs = normal + damping * scale * np.eye(theta.size)
            try:
                step = linalg.solve(lhs, rhs, assume_a="pos")
            except (linalg.LinAlgError, ValueError):
                damping *= DAMPING_UP
                continue
            length = 1.0
            for _ in range(MAX_HALVINGS + 1):
                trial = space.clip(theta + length * step)
                trial_sse = _sse(model, trial, points, weights, target)
                if trial_sse < sse:
                    accepted = True
                    break
                length *= 0.5
            if not accepted:
                damping *= DAMPING_UP
        if not accepted:
            break

        change = sse - trial_sse
        theta, sse = trial, trial_sse
        damping = max(damping * DAMPING_DOWN, 1e-12)
        if change <= SSE_RTOL * max(sse, np.finfo(float).tiny) and np.max(np.abs(pg)) <= CONVERGED_GRAD_RTOL * (1.0 + sse):
            break

    return theta, sse, iterations


def _finish(model, theta, points, weights, target, starts_used, iterations, near_tie=False) -> FitResult:
    space = model.param_space
    slack = BOUNDARY_RTOL * space.width
    sse = _sse(model, theta, points, weights, target)
    grad = _gradient(model, theta, points, weights, target)
    grad_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
    on_boundary = bool(np.any(theta <= space.lower_array + slack) or np.any(theta >= space.upper_array - slack))
    converged = grad_norm <= CONVERGED_GRAD_RTOL * (1.0 + sse) or on_boundary
    return FitResult(
        theta_hat=tuple(float(t) for t in theta),
        sse=max(sse, 0.0),
        converged=converged,
        grad_norm=grad_norm,
        on_boundary=on_boundary,
        starts_used=starts_used,
        near_tie=near_tie,
        iterations=iterations,
    )


def fit(
    target: Sequence[float],
    points: Sequence[float],
    weights: Sequence[float],
    model: RegressionModel,
    starts: Sequence[Sequence[float]],
) -> FitResult:
    """
    Ajuste por mínimos cuadrados ponderados de `model` a `target`.

    Los modelos con solución cerrada (lineales en θ, cuadrática) se resuelven
    directamente cuando la solución cae dentro de la caja; en otro caso se usa
    Gauss-Newton amortiguado (Levenberg) con reducción del paso, proyectado
    en la caja, desde cada punto de arranque.

    Returns:
        FitResult: mejor mínimo local encontrado. `converged=False` si se
        agotaron las iteraciones sin alcanzar la tolerancia.

    Raises:
        NumericDomainError: si el modelo produce valores no finitos.
    """
    target = np.asarray(target, dtype=float).ravel()
    points = np.asarray(points, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if not (target.size == points.size == weights.size) or points.size == 0:
        raise InvalidArgumentError(
            f"target, points and weights must share a positive length, got {target.size}, {points.size}, {weights.size}"
        )
    if np.any(weights < 0):
        raise InvalidArgumentError("weights must be nonnegative")
    if not starts:
        raise InvalidArgumentError("at least one start is required")

    exact = model.exact_fit(points, weights, target)
    if exact is not None and model.param_space.contains(exact):
        return _finish(model, np.asarray(exact, dtype=float), points, weights, target, 1, 0)

    best_theta, best_sse, best_iter = None, np.inf, 0
    candidates = []
    for start in starts:
        theta, sse, iterations = _gauss_newton(model, np.asarray(start, dtype=float), points, weights, target)
        candidates.append((theta, sse))
        if sse < best_sse:
            best_theta, best_sse, best_iter = theta, sse, iterations

    width = model.param_space.width
    near_tie = any(
        abs(sse - best_sse) <= TIE_SSE_RTOL * max(best_sse, 1e-300)
        and np.max(np.abs(theta - best_theta) / width) > TIE_THETA_RTOL
        for theta, sse in candidates
    )
    result = _finish(model, best_theta, points, weights, target, len(starts), best_iter, near_tie)
    if not result.converged:
        _logger.debug(
            f"[FIT] {model.name}: no convergence after {result.iterations} iterations "
            f"(sse={result.sse:.6g}, |grad|={result.grad_norm:.3g})"
        )
    return result
