"""
Weight optimization on a fixed support.

Two methods: the quadratic-programming linearization of g(ω) = T_P(support, ω)
around the current weights, and the gradient exchange method that moves mass
from the least to the most sensitive support point.
"""
import logging
import time
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import minimize_scalar

from . import criterion
from .criterion import ComparisonProblem
from .design import build
from .errors import InvalidArgumentError
from .model import CriterionEval, FitResult, QPData, SolveOptions

_logger = logging.getLogger(__name__)

NORMAL_RIDGE = 1e-10
QP_REGULARIZATION = 1e-14
MAX_HALVINGS = 10
LINE_SEARCH_EVALS = 30


def build_qp(
    p: ComparisonProblem,
    support: Sequence[float],
    omega_bar: Sequence[float],
    fits: Sequence[FitResult],
) -> QPData:
    """
    Linealiza g(ω) alrededor de ω̄ con los θ̂ de `fits`.

    Para cada comparación: J (n×d) gradiente del candidato en θ̂, residuo r,
    R = diag(r)·J, b = r². Entonces Q(ω̄) = Σ p·R (JᵀΩ̄J)⁻¹ Rᵀ, con una
    pequeña cresta 1e-10·traza/d en la matriz normal.
    """
    support = np.asarray(support, dtype=float)
    omega_bar = np.asarray(omega_bar, dtype=float)
    if not np.any(omega_bar > 0):
        raise InvalidArgumentError("cannot linearize around an all-zero weight vector")
    n = support.size
    Q = np.zeros((n, n))
    b = np.zeros(n)
    for c, f in zip(p.comparisons, fits):
        candidate = p.models[c.candidate]
        residual = p.models[c.fixed].eval(support, p.fixed_theta(c.fixed)) - candidate.eval(support, f.theta)
        jac = candidate.grad_theta(support, f.theta)
        normal = jac.T @ (jac * omega_bar[:, None])
        ridge = NORMAL_RIDGE * np.trace(normal) / max(jac.shape[1], 1)
        normal += (ridge if ridge > 0 else NORMAL_RIDGE) * np.eye(jac.shape[1])
        R = residual[:, None] * jac
        Q += c.weight * R @ linalg.solve(normal, R.T, assume_a="pos")
        b += c.weight * residual * residual
    Q = 0.5 * (Q + Q.T)
    return QPData(Q=Q, b=b)


def _kkt_solve(H: np.ndarray, c: np.ndarray, free: list) -> Tuple[np.ndarray, float]:
    k = len(free)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = H[np.ix_(free, free)]
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([-c[free], [1.0]])
    try:
        sol = linalg.solve(kkt, rhs)
    except linalg.LinAlgError:
        sol, *_ = linalg.lstsq(kkt, rhs)
    return sol[:k], float(sol[k])


def solve_simplex_qp(q: QPData) -> np.ndarray:
    """
    Maximiza −ωᵀQω + bᵀω sobre el símplex de probabilidad.

    Método de conjunto activo primal sobre min ½ωᵀHω + cᵀω con H = 2(Q + δI),
    c = −b, arrancando en el mejor vértice.
    """
    b = np.asarray(q.b, dtype=float)
    n = b.size
    if n == 1:
        return np.ones(1)
    scale = max(1.0, float(np.trace(q.Q)) / n)
    H = 2.0 * (q.Q + QP_REGULARIZATION * scale * np.eye(n))
    c = -b
    mu_tol = 1e-13 * (1.0 + float(np.max(np.abs(H))) + float(np.max(np.abs(c))))

    start = int(np.argmax(b - np.diag(q.Q)))
    omega = np.zeros(n)
    omega[start] = 1.0
    free = [start]

    for _ in range(50 * n):
        target, nu = _kkt_solve(H, c, free)
        current = omega[free]
        if np.all(target >= 0.0):
            omega = np.zeros(n)
            omega[free] = target
            gradient = H @ omega + c
            bound = [k for k in range(n) if k not in free]
            if not bound:
                break
            multipliers = gradient[bound] + nu
            worst = int(np.argmin(multipliers))
            if multipliers[worst] >= -mu_tol:
                break
            free = sorted(free + [bound[worst]])
            continue
        direction = target - current
        shrinking = direction < 0
        ratios = np.full(len(free), np.inf)
        ratios[shrinking] = current[shrinking] / -direction[shrinking]
        blocking = int(np.argmin(ratios))
        step = float(min(1.0, ratios[blocking]))
        updated = current + step * direction
        updated[blocking] = 0.0
        omega = np.zeros(n)
        omega[free] = np.maximum(updated, 0.0)
        free = [k for k in free if omega[k] > 0.0]
        if not free:
            free = [start]
            omega[start] = 1.0
    else:
        _logger.warning(f"[QP] active-set iteration cap reached for n={n}")

    omega = np.maximum(omega, 0.0)
    return omega / omega.sum()


def _evaluate(p: ComparisonProblem, support: np.ndarray, omega: np.ndarray, warm, opts: SolveOptions) -> CriterionEval:
    return criterion.t_value(p, build(support, omega, normalize=True), warm=warm, opts=opts)


def _start(p: ComparisonProblem, support, omega0, opts: SolveOptions):
    support = np.asarray(support, dtype=float)
    omega = np.asarray(omega0, dtype=float)
    if support.size != omega.size:
        raise InvalidArgumentError(f"{support.size} support points but {omega.size} weights")
    if np.any(omega < 0) or abs(omega.sum() - 1.0) > 1e-10:
        raise InvalidArgumentError("starting weights must lie on the probability simplex")
    if support.size == 1:
        # el símplex de un solo punto es {1}
        return support, omega, None
    ev = _evaluate(p, support, omega, None, opts)
    if criterion.is_zero(p, ev):
        raise InvalidArgumentError("T_P is zero at the starting weights; weight optimization has no ascent direction")
    return support, omega, ev


def optimize_weights_qp(
    p: ComparisonProblem,
    support: Sequence[float],
    omega0: Sequence[float],
    max_rounds: int = 5,
    opts: Optional[SolveOptions] = None,
) -> np.ndarray:
    """
    Paso 2 por linealización cuadrática, repetida hasta `max_rounds` veces.

    Cada ronda resuelve el QP en ω̄ y sólo acepta el candidato si g no baja;
    si baja, el paso se reduce a la mitad hacia ω̄ (hasta 10 veces).
    """
    opts = opts or SolveOptions()
    support, omega, ev = _start(p, support, omega0, opts)
    if support.size == 1:
        return np.ones(1)
    started = time.time()
    initial = ev.value

    for round_ in range(max_rounds):
        q = build_qp(p, support, omega, ev.fits)
        proposal = solve_simplex_qp(q)
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            candidate_ev = _evaluate(p, support, proposal, ev, opts)
            if candidate_ev.value >= ev.value:
                accepted = candidate_ev
                break
            proposal = 0.5 * (proposal + omega)
        if accepted is None:
            _logger.debug(f"[STEP2] qp round {round_ + 1}: no ascent after {MAX_HALVINGS} halvings")
            break
        moved = float(np.max(np.abs(np.asarray(accepted.design.weights) - omega)))
        omega, ev = np.asarray(accepted.design.weights, dtype=float), accepted
        if moved <= 1e-12:
            break

    _logger.debug(
        f"[STEP2] qp | support={support.size} | g {initial:.10g} -> {ev.value:.10g} | {time.time() - started:.3f}s"
    )
    return omega


def optimize_weights_gradient(
    p: ComparisonProblem,
    support: Sequence[float],
    omega0: Sequence[float],
    max_iters: int = 200,
    tol: float = 1e-6,
    opts: Optional[SolveOptions] = None,
) -> np.ndarray:
    """
    Paso 2 por intercambio de masa: de k̲ = argmin v_k (entre pesos positivos)
    a k̄ = argmax v_k, con v_k = Ψ(x_k). El tamaño del paso sale de un modelo
    cuadrático de g o, si éste no es fiable, de una búsqueda acotada.
    """
    opts = opts or SolveOptions()
    support, omega, ev = _start(p, support, omega0, opts)
    if support.size == 1:
        return np.ones(1)
    started = time.time()
    initial = ev.value
    iterations = 0

    for iterations in range(1, max_iters + 1):
        v = np.atleast_1d(criterion.psi(p, ev, support))
        positive = np.flatnonzero(omega > 0)
        k_lo = int(positive[np.argmin(v[positive])])
        k_hi = int(np.argmax(v))
        slope = float(v[k_hi] - v[k_lo])
        if k_lo == k_hi or slope <= tol * ev.value:
            break

        alpha_max = float(omega[k_lo])
        direction = np.zeros_like(omega)
        direction[k_hi], direction[k_lo] = 1.0, -1.0
        cache = {}

        def g(alpha: float) -> float:
            if alpha not in cache:
                trial = np.maximum(omega + alpha * direction, 0.0)
                cache[alpha] = _evaluate(p, support, trial, ev, opts)
            return cache[alpha].value

        g_max = g(alpha_max)
        curvature = (ev.value + slope * alpha_max - g_max) / alpha_max ** 2
        if curvature > 0:
            alpha_q = min(alpha_max, slope / (2.0 * curvature))
            predicted = ev.value + slope * alpha_q - curvature * alpha_q ** 2
            if abs(g(alpha_q) - predicted) > 1e-6 * max(abs(predicted), 1e-300):
                minimize_scalar(
                    lambda a: -g(float(a)),
                    bounds=(0.0, alpha_max),
                    method="bounded",
                    options={"maxiter": LINE_SEARCH_EVALS, "xatol": 1e-10 * max(alpha_max, 1e-12)},
                )
        best_alpha = max(cache, key=lambda a: (cache[a].value, -a))
        if cache[best_alpha].value <= ev.value:
            break
        ev = cache[best_alpha]
        omega = np.asarray(ev.design.weights, dtype=float)

    _logger.debug(
        f"[STEP2] gradient | support={support.size} | {iterations} exchanges | "
        f"g {initial:.10g} -> {ev.value:.10g} | {time.time() - started:.3f}s"
    )
    return omega
