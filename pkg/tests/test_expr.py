import numpy as np
import pytest

from src.domain.errors import ExprSyntaxError, InvalidArgumentError, NumericDomainError, UnknownIdentifierError
from src.domain.expr import (
    Add,
    Call,
    Const,
    Div,
    Mul,
    Neg,
    Pow,
    Sub,
    Sym,
    differentiate,
    is_linear_in_params,
    parse,
    to_model,
    to_source,
)
from src.domain.model import ParamSpace


def box(dim, lo=-10.0, hi=10.0):
    return ParamSpace(lower=(lo,) * dim, upper=(hi,) * dim)


def test_parse_exp4_shape():
    expr = parse("t1 - t2*exp(-t3*x^t4)")
    assert expr.params == ("t1", "t2", "t3", "t4")
    assert expr.ast == Sub(
        Sym("t1"),
        Mul(Sym("t2"), Call("exp", (Mul(Neg(Sym("t3")), Pow(Sym("x"), Sym("t4"))),))),
    )


def test_parse_emax_shape():
    expr = parse("t1 + t2*x/(t3+x)")
    assert expr.params == ("t1", "t2", "t3")
    assert expr.ast == Add(Sym("t1"), Div(Mul(Sym("t2"), Sym("x")), Add(Sym("t3"), Sym("x"))))


def test_params_in_order_of_first_appearance():
    assert parse("t3*x + t1 - t3").params == ("t3", "t1")


def test_power_is_right_associative():
    assert parse("x^t1^2").ast == Pow(Sym("x"), Pow(Sym("t1"), Const(2.0)))


def test_unary_minus_binds_looser_than_power():
    assert parse("-x^2").ast == Neg(Pow(Sym("x"), Const(2.0)))


def test_syntax_error_position():
    with pytest.raises(ExprSyntaxError) as excinfo:
        parse("t1 + *x")
    assert excinfo.value.position == 5
    assert "number" in excinfo.value.expected


@pytest.mark.parametrize("source,position", [("", 0), ("(t1 + x", 7), ("t1 x", 3), ("exp(x, t1)", 0)])
def test_other_syntax_errors(source, position):
    with pytest.raises(ExprSyntaxError) as excinfo:
        parse(source)
    assert excinfo.value.position == position


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as excinfo:
        parse("t1 + sin(x)")
    assert excinfo.value.position == 5


@pytest.mark.parametrize("source", [
    "t1 - t2*exp(-t3*x^t4)",
    "t1 + t2*x/(t3+x)",
    "t1 + t2/(1 + exp((t3 - x)/t4))",
    "(t1 - x) - (t2 - x)",
    "t1/(x/t2)",
    "(-x)^2 + -t1^-2",
    "xlogy(t1, x) + log(t2*x) - 2.5e-3",
])
def test_pretty_print_round_trip(source):
    expr = parse(source)
    assert parse(to_source(expr.ast)).ast == expr.ast


def test_derivative_of_intercept_is_one():
    assert differentiate(parse("t1 + t2*x"), "t1").ast == Const(1.0)


def test_derivatives_evaluate_like_hand_results():
    xs = np.linspace(0.0, 10.0, 21)

    expr = parse("t1 - t2*exp(-t3*x)")
    theta = np.array([2.0, 1.3, 0.7])
    np.testing.assert_allclose(
        differentiate(expr, "t3").evaluate(xs, theta), 1.3 * xs * np.exp(-0.7 * xs), rtol=1e-14
    )

    expr = parse("t1 + t2*x/(t3+x)")
    theta = np.array([60.0, 294.0, 25.0])
    np.testing.assert_allclose(
        differentiate(expr, "t3").evaluate(xs, theta), -294.0 * xs / (25.0 + xs) ** 2, rtol=1e-12
    )


def test_derivative_keeps_parameter_frame():
    derivative = differentiate(parse("t1 + t2*x"), "t2")
    assert derivative.params == ("t1", "t2")
    np.testing.assert_allclose(derivative.evaluate(np.array([1.0, 2.0]), np.array([5.0, 7.0])), [1.0, 2.0])


def test_differentiate_unknown_parameter():
    with pytest.raises(InvalidArgumentError):
        differentiate(parse("t1 + x"), "t2")


@pytest.mark.parametrize("source,x_range", [
    ("t1 + t2/(1 + exp((t3 - x)/t4))", (0.0, 500.0)),
    ("t1 - t2*exp(-t3*x^t4)", (0.1, 10.0)),
    ("t1*log(1 + t2*x) + xlogy(t3, x)", (0.1, 10.0)),
    ("(t1 + x)^t2 / (t3 + x^2)", (0.1, 5.0)),
])
def test_symbolic_gradient_matches_finite_differences(source, x_range):
    expr = parse(source)
    model = to_model(expr, box(len(expr.params), 0.1, 100.0))
    rng = np.random.default_rng(3)
    for _ in range(50):
        theta = rng.uniform(0.5, 3.0, size=model.dim)
        x = float(rng.uniform(*x_range))
        analytic = model.grad_theta(x, theta)
        numeric = np.zeros(model.dim)
        for k in range(model.dim):
            h = 1e-6 * (1.0 + abs(theta[k]))
            up, down = theta.copy(), theta.copy()
            up[k] += h
            down[k] -= h
            numeric[k] = (model.eval(x, up) - model.eval(x, down)) / (2.0 * h)
        scale = max(1.0, float(np.max(np.abs(analytic))))
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-6 * scale)


def test_linearity_detection():
    assert is_linear_in_params(parse("t1 + t2*x"))
    assert is_linear_in_params(parse("t1*x^2"))
    assert is_linear_in_params(parse("t1*exp(x) + t2*log(1 + x)"))
    assert not is_linear_in_params(parse("t1 + t2*x/(t3+x)"))
    assert not is_linear_in_params(parse("t1*t2*x"))


def test_to_model_dimension_and_constant_model():
    model = to_model(parse("t1+t2*x"), box(2))
    assert model.dim == 2
    assert model.linear

    constant = to_model(parse("t1"), box(1))
    np.testing.assert_allclose(constant.eval(np.array([-3.0, 0.0, 8.0]), np.array([4.5])), [4.5, 4.5, 4.5])
    np.testing.assert_allclose(constant.grad_theta(np.array([1.0, 2.0]), np.array([4.5])), [[1.0], [1.0]])


def test_to_model_dimension_mismatch():
    with pytest.raises(InvalidArgumentError, match="dimension 3"):
        to_model(parse("t1 + t2*x"), box(3))


def test_powers_of_zero_and_negative_bases():
    model = to_model(parse("x^t1"), box(1, -5.0, 5.0))
    assert model.eval(0.0, np.array([1.5])) == 0.0
    assert model.eval(0.0, np.array([0.0])) == 1.0
    with pytest.raises(NumericDomainError):
        model.eval(-1.0, np.array([0.5]))
