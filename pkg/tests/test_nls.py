import numpy as np
import pytest

from src.domain import families, nls
from src.domain.errors import InvalidArgumentError
from src.domain.expr import parse, to_model
from src.domain.model import ParamSpace

EXP3_BOX = ParamSpace(lower=(-10.0, -10.0, 0.01), upper=(10.0, 10.0, 5.0))


def line_model():
    return families.linear(ParamSpace(lower=(-10.0, -10.0), upper=(10.0, 10.0)))


def test_constant_model_fits_weighted_mean():
    model = to_model(parse("t1"), ParamSpace(lower=(-10.0,), upper=(10.0,)))
    result = nls.fit([0.0, 1.0], [0.0, 1.0], [0.5, 0.5], model, [model.param_space.center])
    assert result.theta_hat == pytest.approx((0.5,))
    assert result.sse == pytest.approx(0.25)
    assert result.converged


@pytest.mark.parametrize("weights,theta,sse", [
    ((0.25, 0.5, 0.25), (0.5, 0.0), 0.25),
    ((1 / 3, 1 / 3, 1 / 3), (2 / 3, 0.0), 2 / 9),
])
def test_line_fit_to_square(weights, theta, sse):
    points = np.array([-1.0, 0.0, 1.0])
    model = line_model()
    result = nls.fit(points ** 2, points, weights, model, nls.default_starts(model))
    assert result.theta_hat == pytest.approx(theta, abs=1e-12)
    assert result.sse == pytest.approx(sse, rel=1e-12)
    assert not result.on_boundary


def test_nonlinear_fit_recovers_generating_parameters():
    model = families.exp3(EXP3_BOX)
    points = np.linspace(0.0, 10.0, 11)
    weights = np.full(11, 1 / 11)
    target = model.eval(points, np.array([2.0, 1.0, 0.8]))
    result = nls.fit(target, points, weights, model, nls.default_starts(model, count=5))
    assert result.sse < 1e-16
    assert result.theta_hat == pytest.approx((2.0, 1.0, 0.8), abs=1e-5)
    assert result.converged
    assert result.starts_used == 5


def test_fit_never_worse_than_any_start():
    model = families.exp3(EXP3_BOX)
    points = np.array([0.0, 0.441, 1.952, 10.0])
    weights = np.array([0.209, 0.385, 0.291, 0.115])
    target = families.exp4().eval(points, np.array([2.0, 1.0, 0.8, 1.5]))
    starts = nls.default_starts(model, count=5)
    result = nls.fit(target, points, weights, model, starts)
    for start in starts:
        residual = target - model.eval(points, start)
        assert result.sse <= float(weights @ residual ** 2)


def test_first_order_condition_at_interior_optimum():
    model = families.exp3(EXP3_BOX)
    points = np.linspace(0.0, 10.0, 11)
    weights = np.full(11, 1 / 11)
    target = families.exp4().eval(points, np.array([2.0, 1.0, 0.8, 1.5]))
    result = nls.fit(target, points, weights, model, nls.default_starts(model, count=5))
    assert not result.on_boundary
    assert result.grad_norm <= 1e-8 * (1.0 + result.sse)


def test_warm_start_is_a_fixed_point():
    model = families.exp3(EXP3_BOX)
    points = np.linspace(0.0, 10.0, 11)
    weights = np.full(11, 1 / 11)
    target = families.exp4().eval(points, np.array([2.0, 1.0, 0.8, 1.5]))
    first = nls.fit(target, points, weights, model, nls.default_starts(model, count=5))
    again = nls.fit(target, points, weights, model, nls.default_starts(model, first.theta, count=1))
    assert again.theta_hat == pytest.approx(first.theta_hat, rel=1e-7, abs=1e-9)
    assert again.sse == pytest.approx(first.sse, rel=1e-10)


def test_fit_on_box_boundary_is_flagged():
    # the best straight line has slope 1, but the box caps it at 0.5
    model = families.linear(ParamSpace(lower=(-1.0, -0.5), upper=(1.0, 0.5)))
    points = np.linspace(0.0, 1.0, 5)
    result = nls.fit(points, points, np.full(5, 0.2), model, nls.default_starts(model, count=3))
    assert result.on_boundary
    assert result.converged
    assert result.theta_hat[1] == pytest.approx(0.5)


def test_default_starts():
    model = families.exp3(EXP3_BOX)
    previous = np.array([1.0, 2.0, 3.0])
    assert len(nls.default_starts(model, previous, count=1)) == 1
    np.testing.assert_array_equal(nls.default_starts(model, previous, count=1)[0], previous)
    np.testing.assert_array_equal(nls.default_starts(model, None, count=1)[0], EXP3_BOX.center)

    first = nls.default_starts(model, count=5, seed=42)
    second = nls.default_starts(model, count=5, seed=42)
    assert len(first) == 5
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)
    for start in first:
        assert EXP3_BOX.contains(start)


def test_default_starts_clips_previous_into_box():
    model = families.exp3(EXP3_BOX)
    start = nls.default_starts(model, [20.0, 0.0, 0.0], count=1)[0]
    np.testing.assert_array_equal(start, [10.0, 0.0, 0.01])


def test_fit_input_checks():
    model = line_model()
    with pytest.raises(InvalidArgumentError):
        nls.fit([1.0, 2.0], [0.0], [1.0], model, [model.param_space.center])
    with pytest.raises(InvalidArgumentError):
        nls.fit([1.0], [0.0], [1.0], model, [])
    with pytest.raises(InvalidArgumentError):
        nls.default_starts(model, count=0)
