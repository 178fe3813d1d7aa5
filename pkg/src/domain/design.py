"""
Measure operations on approximate designs.
"""
import logging
import math
from typing import Sequence

import numpy as np
from pydantic import ValidationError

from .errors import DegenerateDesignError, InvalidArgumentError
from .model import Design

_logger = logging.getLogger(__name__)

# masas que ya suman 1 a este nivel no se renormalizan
NORMALIZED_TOL = 1e-14


def build(points: Sequence[float], weights: Sequence[float], normalize: bool = True) -> Design:
    """
    Construye un Design, traduciendo errores de validación a InvalidArgumentError.
    """
    try:
        return Design.from_arrays(points, weights, normalize=normalize)
    except (ValidationError, ValueError) as exc:
        raise InvalidArgumentError(f"invalid design: {exc}") from exc


def merge_points(points: Sequence[float], weights: Sequence[float], merge_tol: float) -> Design:
    """
    Fusiona puntos (sin ordenar, posiblemente repetidos) en un Design canónico.

    Recorre los puntos de izquierda a derecha; un punto se une al grupo abierto
    si dista menos de `merge_tol` de su posición actual (media ponderada del
    grupo, o media simple si el grupo aún no tiene masa).
    """
    if merge_tol < 0:
        raise InvalidArgumentError(f"merge_tol must be >= 0, got {merge_tol}")
    points = np.asarray(points, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if points.size == 0:
        raise InvalidArgumentError("design has empty support")
    if points.size != weights.size:
        raise InvalidArgumentError(f"{points.size} points but {weights.size} weights")
    order = np.argsort(points, kind="stable")
    points, weights = points[order], weights[order]

    locations: list[float] = []
    masses: list[float] = []
    mass = weights[0]
    moment = weights[0] * points[0]
    plain_sum, count = points[0], 1
    first = last = points[0]

    def location() -> float:
        # un punto aislado conserva su coordenada exacta
        if count == 1:
            return float(first)
        centre = moment / mass if mass > 0 else plain_sum / count
        return float(min(max(centre, first), last))

    for x, w in zip(points[1:], weights[1:]):
        current = location()
        if x - current < merge_tol or x == current:
            mass += w
            moment += w * x
            plain_sum += x
            count += 1
            last = x
            continue
        locations.append(current)
        masses.append(mass)
        mass, moment, plain_sum, count = w, w * x, x, 1
        first = last = x
    locations.append(location())
    masses.append(mass)

    total = math.fsum(masses)
    if not total > 0:
        raise DegenerateDesignError("design has no mass")
    return build(locations, masses, normalize=abs(total - 1.0) > NORMALIZED_TOL)


def canonicalize(d: Design, merge_tol: float) -> Design:
    """Merges points closer than merge_tol and renormalizes."""
    return merge_points(d.points, d.masses, merge_tol)


def prune(d: Design, threshold: float) -> Design:
    """
    Elimina los puntos con peso estrictamente menor que `threshold`.

    Raises:
        DegenerateDesignError: si ningún punto alcanza el umbral.
    """
    if not 0.0 <= threshold < 1.0:
        raise InvalidArgumentError(f"prune threshold must lie in [0, 1), got {threshold}")
    keep = d.masses >= threshold
    if not keep.any():
        raise DegenerateDesignError(
            f"every weight of the {d.size}-point design is below the prune threshold {threshold:.3e}"
        )
    if keep.all():
        return d
    _logger.debug(f"[PRUNE] dropping {int((~keep).sum())} point(s) below {threshold:.3e}")
    return build(d.points[keep], d.masses[keep])


def drop_empty(d: Design) -> Design:
    """Removes zero-weight points."""
    keep = d.masses > 0
    return d if keep.all() else build(d.points[keep], d.masses[keep])


def mix(xi: Design, zeta: Design, alpha: float) -> Design:
    """
    Combinación convexa (1 − α)ξ + αζ sobre la unión de soportes.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgumentError(f"mixing weight must lie in [0, 1], got {alpha}")
    points = np.concatenate([xi.points, zeta.points])
    weights = np.concatenate([(1.0 - alpha) * xi.masses, alpha * zeta.masses])
    keep = weights > 0
    return merge_points(points[keep], weights[keep], 0.0)


def pad(d: Design, extra_points: Sequence[float], merge_tol: float) -> Design:
    """
    Adds candidate points with zero weight, merging candidates that fall
    within merge_tol of an existing point.
    """
    extra = np.asarray(extra_points, dtype=float).ravel()
    return merge_points(
        np.concatenate([d.points, extra]),
        np.concatenate([d.masses, np.zeros(extra.size)]),
        merge_tol,
    )


def round_to_runs(d: Design, n: int) -> np.ndarray:
    """
    Reparte n observaciones entre los puntos del soporte.

    Cada punto recibe al menos una observación; el resto se asigna por restos
    mayores (Hamilton) sobre n·ω, con desempate por el menor índice.
    """
    k = d.size
    if n < k:
        raise InvalidArgumentError(f"cannot allocate {n} runs over {k} support points")
    quota = n * d.masses
    runs = np.maximum(np.floor(quota).astype(int), 1)
    remainder = quota - runs
    by_largest = np.argsort(-remainder, kind="stable")
    shortfall = n - int(runs.sum())
    i = 0
    while shortfall > 0:
        runs[by_largest[i % k]] += 1
        shortfall -= 1
        i += 1
    by_smallest = np.argsort(remainder, kind="stable")
    i = 0
    while shortfall < 0:
        j = by_smallest[i % k]
        if runs[j] > 1:
            runs[j] -= 1
            shortfall += 1
        i += 1
    return runs
