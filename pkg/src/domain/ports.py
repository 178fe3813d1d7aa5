from abc import ABC, abstractmethod
from typing import Optional, Union

import numpy as np
from scipy import linalg

from .errors import InvalidArgumentError, NumericDomainError
from .model import ParamSpace

ArrayLike = Union[float, np.ndarray]


class RegressionModel(ABC):
    """
    Interfaz Strategy para funciones de regresión η(x, θ) con gradiente en θ.

    Las implementaciones son inmutables tras su construcción, de modo que
    pueden compartirse entre hilos sin sincronización.
    """

    def __init__(self, name: str, param_space: ParamSpace, linear: bool = False):
        self._name = name
        self._param_space = param_space
        self._linear = linear

    @property
    def name(self) -> str:
        return self._name

    @property
    def dim(self) -> int:
        return self._param_space.dim

    @property
    def param_space(self) -> ParamSpace:
        return self._param_space

    @property
    def linear(self) -> bool:
        """True when η is affine in θ, so inner fits have a closed form."""
        return self._linear

    @abstractmethod
    def with_space(self, param_space: ParamSpace) -> "RegressionModel":
        """
        Devuelve una copia del modelo sobre otra caja de parámetros.
        """

    @abstractmethod
    def _mean(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Vectorised η over a 1-D array of x."""

    @abstractmethod
    def _jacobian(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """∂η/∂θ as an (n, d) array."""

    def eval(self, x: ArrayLike, theta: np.ndarray) -> ArrayLike:
        """
        Evalúa η(x, θ).

        Args:
            x: Punto del espacio de diseño o array de puntos.
            theta: Vector de parámetros de longitud `dim`.

        Returns:
            float si x es escalar, np.ndarray en otro caso.
        """
        theta = self._check_theta(theta)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        with np.errstate(all="ignore"):
            values = self._mean(xs, theta)
        self._check_finite(values, xs, theta, "value")
        return float(values[0]) if np.ndim(x) == 0 else values

    def grad_theta(self, x: ArrayLike, theta: np.ndarray) -> np.ndarray:
        """
        Gradiente ∂η/∂θ: vector (d,) para x escalar, matriz (n, d) para un array.
        """
        theta = self._check_theta(theta)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        with np.errstate(all="ignore"):
            jac = self._jacobian(xs, theta)
        self._check_finite(jac, xs, theta, "gradient")
        return jac[0] if np.ndim(x) == 0 else jac

    def exact_fit(self, points: np.ndarray, weights: np.ndarray, target: np.ndarray) -> Optional[np.ndarray]:
        """
        Closed-form weighted least squares, or None when the model has none.

        For affine models η(x, θ) = η(x, 0) + J(x)θ, so the fit is a weighted
        linear regression of target − η(x, 0) on the columns of J.
        """
        if not self._linear:
            return None
        zero = np.zeros(self.dim)
        active = weights > 0
        xs = points[active]
        root_w = np.sqrt(weights[active])
        offset = self.eval(xs, zero)
        design_matrix = self.grad_theta(xs, zero) * root_w[:, None]
        theta, *_ = linalg.lstsq(design_matrix, (target[active] - offset) * root_w)
        return theta

    def _check_theta(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.dim:
            raise InvalidArgumentError(
                f"model '{self.name}' expects {self.dim} parameters, got {theta.size}"
            )
        return theta

    def _check_finite(self, values: np.ndarray, xs: np.ndarray, theta: np.ndarray, what: str) -> None:
        if np.all(np.isfinite(values)):
            return
        bad = np.flatnonzero(~np.isfinite(values.reshape(xs.size, -1)).all(axis=1))
        x_bad = xs[bad[0]] if bad.size else xs[0]
        raise NumericDomainError(
            f"model '{self.name}' produced a non-finite {what} at x={float(x_bad)!r}, theta={theta.tolist()!r}"
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, dim={self.dim})"
