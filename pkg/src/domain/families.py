"""
Built-in regression families.

Exponential growth models (Mitscherlich / Bertalanffy with an extra shape
exponent) and the dose-response candidates commonly used in Phase II
dose-finding: linear, quadratic (umbrella), Emax and sigmoid Emax.
All gradients are closed form.
"""
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit, xlogy

from .errors import InvalidArgumentError
from .model import ParamSpace
from .ports import RegressionModel

MeanFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class BuiltinModel(RegressionModel):
    """
    Modelo con media y jacobiano en forma cerrada.
    """

    def __init__(
        self,
        family: str,
        name: str,
        param_space: ParamSpace,
        mean: MeanFn,
        jacobian: MeanFn,
        formula: str,
        linear: bool = False,
    ):
        super().__init__(name, param_space, linear=linear)
        self.family = family
        self.formula = formula
        self._mean_fn = mean
        self._jac_fn = jacobian

    def with_space(self, param_space: ParamSpace) -> "BuiltinModel":
        return type(self)(
            self.family, self.name, param_space, self._mean_fn, self._jac_fn, self.formula, self.linear
        )

    def _mean(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return self._mean_fn(x, theta)

    def _jacobian(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return self._jac_fn(x, theta)


class QuadraticModel(BuiltinModel):
    """
    θ₁ + θ₂x(θ₃ − x): a reparameterised quadratic polynomial, so the inner fit
    is a polynomial regression mapped back through θ₂ = −β₂, θ₃ = β₁/θ₂.
    """

    def exact_fit(self, points: np.ndarray, weights: np.ndarray, target: np.ndarray) -> Optional[np.ndarray]:
        active = weights > 0
        xs = points[active]
        if np.unique(xs).size < 3:
            return None
        root_w = np.sqrt(weights[active])
        basis = np.column_stack([np.ones_like(xs), xs, xs * xs]) * root_w[:, None]
        beta, *_ = linalg.lstsq(basis, target[active] * root_w)
        curvature_scale = np.max(np.abs(beta)) * 1e-12 / max(1.0, float(np.max(np.abs(xs)))) ** 2
        if abs(beta[2]) <= curvature_scale:
            return None
        theta2 = -beta[2]
        return np.array([beta[0], theta2, beta[1] / theta2])


def _linear_mean(x, t):
    return t[0] + t[1] * x


def _linear_jac(x, t):
    return np.column_stack([np.ones_like(x), x])


def _quadratic_mean(x, t):
    return t[0] + t[1] * x * (t[2] - x)


def _quadratic_jac(x, t):
    return np.column_stack([np.ones_like(x), x * (t[2] - x), t[1] * x])


def _emax_mean(x, t):
    return t[0] + t[1] * x / (t[2] + x)


def _emax_jac(x, t):
    denom = t[2] + x
    return np.column_stack([np.ones_like(x), x / denom, -t[1] * x / denom ** 2])


def _sigmoid_mean(x, t):
    return t[0] + t[1] * expit((x - t[2]) / t[3])


def _sigmoid_jac(x, t):
    # s = 1/(1+exp((θ₃−x)/θ₄)); s(1−s) equals exp(·)/(1+exp(·))² without overflow
    s = expit((x - t[2]) / t[3])
    slope = s * (1.0 - s)
    return np.column_stack([
        np.ones_like(x),
        s,
        -t[1] * slope / t[3],
        -t[1] * slope * (x - t[2]) / t[3] ** 2,
    ])


def _exp3_mean(x, t):
    return t[0] - t[1] * np.exp(-t[2] * x)


def _exp3_jac(x, t):
    decay = np.exp(-t[2] * x)
    return np.column_stack([np.ones_like(x), -decay, t[1] * x * decay])


def _exp4_mean(x, t):
    return t[0] - t[1] * np.exp(-t[2] * np.power(x, t[3]))


def _exp4_jac(x, t):
    u = np.power(x, t[3])
    decay = np.exp(-t[2] * u)
    # xlogy keeps x^θ₄·log x at 0 for x = 0
    return np.column_stack([
        np.ones_like(x),
        -decay,
        t[1] * u * decay,
        t[1] * t[2] * decay * xlogy(u, x),
    ])


# Nominal centres used when a caller does not give a parameter box
_NOMINAL = {
    "linear": (60.0, 0.56),
    "quadratic": (60.0, 7.0 / 2250.0, 600.0),
    "emax": (60.0, 294.0, 25.0),
    "sigmoid_emax": (49.62, 290.51, 150.0, 45.51),
    "exp3": (2.0, 1.0, 0.8),
    "exp4": (2.0, 1.0, 0.8, 1.5),
}


def _space(family: str, param_space: Optional[ParamSpace]) -> ParamSpace:
    return param_space if param_space is not None else ParamSpace.around(_NOMINAL[family])


def linear(param_space: Optional[ParamSpace] = None, name: str = "linear") -> BuiltinModel:
    return BuiltinModel("linear", name, _space("linear", param_space), _linear_mean, _linear_jac,
                        "t1 + t2*x", linear=True)


def quadratic(param_space: Optional[ParamSpace] = None, name: str = "quadratic") -> QuadraticModel:
    return QuadraticModel("quadratic", name, _space("quadratic", param_space), _quadratic_mean,
                          _quadratic_jac, "t1 + t2*x*(t3 - x)")


def emax(param_space: Optional[ParamSpace] = None, name: str = "emax") -> BuiltinModel:
    return BuiltinModel("emax", name, _space("emax", param_space), _emax_mean, _emax_jac,
                        "t1 + t2*x/(t3 + x)")


def sigmoid_emax(param_space: Optional[ParamSpace] = None, name: str = "sigmoid_emax") -> BuiltinModel:
    return BuiltinModel("sigmoid_emax", name, _space("sigmoid_emax", param_space), _sigmoid_mean,
                        _sigmoid_jac, "t1 + t2/(1 + exp((t3 - x)/t4))")


def exp3(param_space: Optional[ParamSpace] = None, name: str = "exp3") -> BuiltinModel:
    return BuiltinModel("exp3", name, _space("exp3", param_space), _exp3_mean, _exp3_jac,
                        "t1 - t2*exp(-t3*x)")


def exp4(param_space: Optional[ParamSpace] = None, name: str = "exp4") -> BuiltinModel:
    return BuiltinModel("exp4", name, _space("exp4", param_space), _exp4_mean, _exp4_jac,
                        "t1 - t2*exp(-t3*x^t4)")


BUILTIN_FAMILIES: Dict[str, Callable[..., BuiltinModel]] = {
    "linear": linear,
    "quadratic": quadratic,
    "emax": emax,
    "sigmoid_emax": sigmoid_emax,
    "exp3": exp3,
    "exp4": exp4,
}


def builtin(family: str, param_space: Optional[ParamSpace] = None, name: Optional[str] = None) -> BuiltinModel:
    try:
        factory = BUILTIN_FAMILIES[family]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown builtin '{family}', choose one of {sorted(BUILTIN_FAMILIES)}"
        ) from None
    return factory(param_space, name=name or family)


def nominal_center(family: str) -> Sequence[float]:
    return _NOMINAL[family]
