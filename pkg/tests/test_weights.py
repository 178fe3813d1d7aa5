import numpy as np
import pytest
from scipy.optimize import minimize

from src.domain import criterion, weights
from src.domain.errors import InvalidArgumentError
from src.domain.expr import parse, to_model
from src.domain.criterion import make_problem
from src.domain.design import build
from src.domain.families import linear
from src.domain.model import Design, ParamSpace, QPData

SUPPORT = np.array([-1.0, 0.0, 1.0])
UNIFORM = np.full(3, 1.0 / 3.0)


def slsqp_optimum(q: QPData, starts) -> float:
    """Máximo de −ωᵀQω + bᵀω en el símplex con SLSQP desde varios arranques."""
    n = q.b.size
    simplex = {"type": "eq", "fun": lambda w: w.sum() - 1.0, "jac": lambda w: np.ones_like(w)}
    best = -np.inf
    for x0 in starts:
        result = minimize(
            lambda w: -q.objective(w),
            x0,
            jac=lambda w: 2.0 * q.Q @ w - q.b,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * n,
            constraints=[simplex],
            options={"ftol": 1e-15, "maxiter": 500},
        )
        w = np.clip(result.x, 0.0, None)
        best = max(best, q.objective(w / w.sum()))
    return float(best)


def simplex_starts(n: int, rng: np.random.Generator) -> list:
    starts = [np.full(n, 1.0 / n)]
    for k in range(n):
        vertex = np.full(n, 0.1 / (n - 1))
        vertex[k] = 0.9
        starts.append(vertex)
    starts.extend(rng.dirichlet(np.ones(n), size=3))
    return starts


@pytest.mark.parametrize("Q,b,expected,value", [
    (np.zeros((2, 2)), np.array([3.0, 1.0]), [1.0, 0.0], 3.0),
    (np.eye(2), np.array([1.0, 1.0]), [0.5, 0.5], 0.5),
    (np.diag([1.0, 2.0]), np.array([1.0, 1.0]), [2.0 / 3.0, 1.0 / 3.0], 1.0 / 3.0),
])
def test_simplex_qp_small_cases(Q, b, expected, value):
    q = QPData(Q=Q, b=b)
    omega = weights.solve_simplex_qp(q)
    np.testing.assert_allclose(omega, expected, atol=1e-9)
    assert q.objective(omega) == pytest.approx(value, abs=1e-10)


def test_simplex_qp_matches_slsqp():
    rng = np.random.default_rng(1234)
    for trial in range(120):
        n = (2, 3, 4, 5)[trial % 4]
        a = rng.uniform(-1.0, 1.0, size=(n, n))
        q = QPData(Q=a.T @ a / n, b=rng.uniform(0.0, 1.0, size=n))
        omega = weights.solve_simplex_qp(q)
        assert np.all(omega >= 0.0)
        assert omega.sum() == pytest.approx(1.0, abs=1e-12)
        best = slsqp_optimum(q, simplex_starts(n, rng))
        found = q.objective(omega)
        assert found == pytest.approx(best, abs=1e-5)
        assert found >= best - 1e-9
        # KKT: no vertex direction improves the objective
        gradient = -2.0 * q.Q @ omega + q.b
        assert gradient.max() <= gradient @ omega + 1e-9
        # y todos los puntos con peso comparten la derivada parcial
        active = omega > 1e-9
        assert np.ptp(gradient[active]) <= 1e-7


def test_build_qp_is_exact_at_expansion_point(x2_problem):
    ev = criterion.t_value(x2_problem, Design.uniform(SUPPORT))
    q = weights.build_qp(x2_problem, SUPPORT, UNIFORM, ev.fits)
    assert q.objective(UNIFORM) == pytest.approx(ev.value, abs=1e-10)
    np.testing.assert_allclose(q.Q, q.Q.T, atol=1e-12)
    assert np.linalg.eigvalsh(q.Q).min() >= -1e-10


def test_build_qp_against_hand_expansion_for_constant_candidate():
    square = to_model(parse("t1*x^2"), ParamSpace(lower=(0.5,), upper=(2.0,)))
    constant = to_model(parse("t1"), ParamSpace(lower=(-10.0,), upper=(10.0,)))
    p = make_problem([square, constant], [(1.0,), None], [[0.0, 1.0], [0.0, 0.0]], (-1.0, 1.0))
    ev = criterion.t_value(p, Design.uniform(SUPPORT))
    q = weights.build_qp(p, SUPPORT, UNIFORM, ev.fits)
    # fitted constant 2/3, residuals r = x² - 2/3, JᵀΩJ = 1
    r = SUPPORT ** 2 - 2.0 / 3.0
    np.testing.assert_allclose(q.b, r ** 2, atol=1e-14)
    np.testing.assert_allclose(q.Q, np.outer(r, r) / (1.0 + 1e-10), atol=1e-14)


def test_build_qp_vanishes_when_models_coincide():
    ray = to_model(parse("t1*x"), ParamSpace(lower=(0.5,), upper=(2.0,)))
    line = linear(ParamSpace(lower=(-10.0, -10.0), upper=(10.0, 10.0)))
    p = make_problem([ray, line], [(1.0,), None], [[0.0, 1.0], [0.0, 0.0]], (-1.0, 1.0))
    ev = criterion.t_value(p, Design.uniform(SUPPORT))
    q = weights.build_qp(p, SUPPORT, UNIFORM, ev.fits)
    np.testing.assert_allclose(q.b, 0.0, atol=1e-20)
    np.testing.assert_allclose(q.Q, 0.0, atol=1e-20)


def test_build_qp_rejects_zero_weights(x2_problem):
    ev = criterion.t_value(x2_problem, Design.uniform(SUPPORT))
    with pytest.raises(InvalidArgumentError):
        weights.build_qp(x2_problem, SUPPORT, np.zeros(3), ev.fits)


def test_qp_weights_for_square_vs_line(x2_problem):
    omega = weights.optimize_weights_qp(x2_problem, SUPPORT, UNIFORM)
    np.testing.assert_allclose(omega, [0.25, 0.5, 0.25], atol=1e-6)


def test_gradient_weights_for_square_vs_line(x2_problem):
    omega = weights.optimize_weights_gradient(x2_problem, SUPPORT, UNIFORM)
    np.testing.assert_allclose(omega, [0.25, 0.5, 0.25], atol=1e-4)


def test_weight_optimization_never_decreases_criterion(x2_problem):
    support = np.array([-1.0, -0.5, 0.0, 0.3, 1.0])
    start = np.full(5, 0.2)
    before = criterion.t_value(x2_problem, Design.uniform(support)).value
    for method in (weights.optimize_weights_qp, weights.optimize_weights_gradient):
        omega = method(x2_problem, support, start)
        after = criterion.t_value(x2_problem, build(support, omega)).value
        assert after >= before


def test_weight_optimization_input_checks(x2_problem):
    with pytest.raises(InvalidArgumentError):
        weights.optimize_weights_qp(x2_problem, SUPPORT, [0.5, 0.5])
    with pytest.raises(InvalidArgumentError):
        weights.optimize_weights_qp(x2_problem, SUPPORT, [0.5, 0.5, 0.5])
    with pytest.raises(InvalidArgumentError, match="zero"):
        weights.optimize_weights_gradient(x2_problem, np.array([-1.0, 1.0]), [0.5, 0.5])


def test_point_without_contribution_gets_no_weight(x2_problem):
    # en el óptimo Ψ(0.7) = (0.49 − 0.5)² queda muy por debajo de T_P = 0.25
    support = np.array([-1.0, 0.0, 0.7, 1.0])
    start = np.full(4, 0.25)
    omega = weights.optimize_weights_qp(x2_problem, support, start, max_rounds=20)
    assert omega[2] <= 1e-6
    np.testing.assert_allclose(omega[[0, 1, 3]], [0.25, 0.5, 0.25], atol=1e-5)
    omega = weights.optimize_weights_gradient(x2_problem, support, start, max_iters=500, tol=1e-8)
    assert omega[2] <= 1e-3


@pytest.mark.parametrize("method", [weights.optimize_weights_qp, weights.optimize_weights_gradient])
def test_single_point_keeps_all_mass(x2_problem, method):
    assert method(x2_problem, np.array([0.5]), [1.0]).tolist() == [1.0]


@pytest.mark.parametrize("method", [weights.optimize_weights_qp, weights.optimize_weights_gradient])
def test_optimal_weights_are_a_fixed_point(x2_problem, method):
    optimal = np.array([0.25, 0.5, 0.25])
    np.testing.assert_allclose(method(x2_problem, SUPPORT, optimal), optimal, atol=1e-9)


def test_psi_is_equal_on_points_with_weight(x2_problem):
    support = np.array([-1.0, -0.4, 0.1, 0.8, 1.0])
    omega = weights.optimize_weights_qp(x2_problem, support, np.full(5, 0.2), max_rounds=20)
    ev = criterion.t_value(x2_problem, build(support, omega))
    v = np.atleast_1d(criterion.psi(x2_problem, ev, support))
    positive = omega > 1e-6
    assert np.ptp(v[positive]) <= 1e-5 * ev.value
    # los puntos sin peso no superan a los que lo tienen
    assert v[~positive].max(initial=-np.inf) <= v[positive].min() + 1e-6 * ev.value
