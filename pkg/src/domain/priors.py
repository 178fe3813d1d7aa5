"""
Generadores de priors discretas para el criterio bayesiano.
"""
import itertools
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .model import DiscretePrior


def point_prior(center: Sequence[float]) -> DiscretePrior:
    """Single atom of mass 1 (the locally optimal case)."""
    return DiscretePrior.normalized([center], [1.0])


def _coordinates(center: Sequence[float], coords: Optional[Sequence[int]]) -> list:
    coords = list(range(len(center))) if coords is None else list(coords)
    if not coords:
        raise InvalidArgumentError("at least one coordinate must vary")
    bad = [k for k in coords if not 0 <= k < len(center)]
    if bad or len(set(coords)) != len(coords):
        raise InvalidArgumentError(f"coordinates {coords} are not distinct indices into a {len(center)}-vector")
    return coords


def product_grid_prior(
    center: Sequence[float],
    sigma: float,
    coords: Optional[Sequence[int]] = None,
    levels: int = 5,
    step: float = 0.5,
) -> DiscretePrior:
    """
    Producto de rejillas univariantes independientes.

    La coordenada j toma los valores μ_j + step·σ·(i − c), i = 1..levels,
    c = (levels + 1)/2, con pesos ∝ exp(−(i − c)²/8). Las coordenadas no
    incluidas en `coords` quedan fijas en el centro.

    Args:
        center: Vector μ.
        sigma: Desviación típica (σ = 0 devuelve la prior puntual).
        coords: Índices (base 0) de las coordenadas que varían.
    """
    if sigma < 0:
        raise InvalidArgumentError(f"sigma must be >= 0, got {sigma}")
    if levels < 1 or levels % 2 == 0:
        raise InvalidArgumentError(f"levels must be a positive odd number, got {levels}")
    if sigma == 0:
        return point_prior(center)
    coords = _coordinates(center, coords)
    offsets = np.arange(1, levels + 1) - (levels + 1) / 2
    level_weights = np.exp(-offsets ** 2 / 8.0)

    points, masses = [], []
    for combo in itertools.product(range(levels), repeat=len(coords)):
        lam = np.asarray(center, dtype=float).copy()
        mass = 1.0
        for k, level in zip(coords, combo):
            lam[k] += step * sigma * offsets[level]
            mass *= level_weights[level]
        points.append(lam)
        masses.append(mass)
    return DiscretePrior.normalized(points, masses)


def factorial_prior(
    center: Sequence[float],
    sigma: float,
    coords: Optional[Sequence[int]] = None,
    exponent_sign: int = -1,
) -> DiscretePrior:
    """
    Factorial completo {μ + eσ : e ∈ {−1, 0, 1}^m} con pesos
    ∝ exp(sign·‖eσ‖²/(2σ²)). sign = −1 es la forma gaussiana.
    """
    if exponent_sign not in (-1, 1):
        raise InvalidArgumentError(f"exponent_sign must be -1 or +1, got {exponent_sign}")
    if sigma < 0:
        raise InvalidArgumentError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return point_prior(center)
    coords = _coordinates(center, coords)

    points, masses = [], []
    for signs in itertools.product((-1, 0, 1), repeat=len(coords)):
        e = np.asarray(signs, dtype=float)
        lam = np.asarray(center, dtype=float).copy()
        lam[coords] += e * sigma
        distance2 = float(np.sum((e * sigma) ** 2))
        points.append(lam)
        masses.append(np.exp(exponent_sign * distance2 / (2.0 * sigma ** 2)))
    return DiscretePrior.normalized(points, masses)
