"""
The T_P criterion, the Ψ function and the equivalence-theorem check.

A problem lists models η_1..η_ν, nominal values θ̄_i for the fixed models and a
comparison table P. Every positive entry p_ij is one comparison: the fixed
model η_i(·, θ̄_i) against the best-fitting member of the class η_j.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import xarray as xr
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.optimize import minimize_scalar

from . import nls
from .errors import InvalidArgumentError, NumericDomainError
from .model import CriterionEval, Design, DiscretePrior, FitResult, OptimalityReport, SolveOptions
from .ports import RegressionModel

_logger = logging.getLogger(__name__)

# Ψ curves whose range is below this (relative) count as constant
FLAT_RTOL = 1e-14
# Criterion values below this fraction of the fitted signal count as zero
ZERO_RTOL = 1e-20


class Comparison(BaseModel):
    """
    Una comparación activa (i, j) del problema, con su peso p_ij·τ.
    """
    model_config = ConfigDict(frozen=True)

    index: int
    fixed: int
    candidate: int
    weight: float = Field(..., gt=0)
    label: str
    pair: Tuple[int, int]
    tau: float = 1.0


class ComparisonProblem(BaseModel):
    """
    Problema de discriminación: modelos, parámetros fijos, tabla P y espacio de diseño.

    `origin` y `tau` sólo se rellenan en problemas expandidos desde una prior:
    indican, para cada entrada, el modelo original y la masa del átomo.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    models: Tuple[RegressionModel, ...] = Field(..., min_length=1)
    fixed_params: Tuple[Optional[Tuple[float, ...]], ...]
    table: np.ndarray
    space: Tuple[float, float]
    names: Tuple[str, ...] = ()
    origin: Tuple[int, ...] = ()
    tau: Tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check_problem(self) -> "ComparisonProblem":
        n = len(self.models)
        if len(self.fixed_params) != n:
            raise ValueError(f"{n} models but {len(self.fixed_params)} fixed-parameter entries")
        if self.table.shape != (n, n):
            raise ValueError(f"comparison table has shape {self.table.shape}, expected {(n, n)}")
        if not np.all(np.isfinite(self.table)) or np.any(self.table < 0):
            raise ValueError("comparison table entries must be finite and nonnegative")
        a, b = self.space
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise ValueError(f"design space [{a}, {b}] is not a proper interval")
        off_diagonal = self.table * (1.0 - np.eye(n))
        if not np.any(off_diagonal > 0):
            raise ValueError("comparison table has no positive off-diagonal entry")
        for i in range(n):
            if not np.any(off_diagonal[i] > 0):
                continue
            theta = self.fixed_params[i]
            model = self.models[i]
            if theta is None:
                raise ValueError(f"model {self.model_name(i)!r} is compared as fixed model but has no fixed parameters")
            if len(theta) != model.dim:
                raise ValueError(
                    f"model {self.model_name(i)!r} has {model.dim} parameters but {len(theta)} fixed values"
                )
            if not model.param_space.contains(theta):
                raise ValueError(f"fixed parameters {theta} of {self.model_name(i)!r} lie outside its parameter box")
        for name, values in (("names", self.names), ("origin", self.origin), ("tau", self.tau)):
            if values and len(values) != n:
                raise ValueError(f"{name} has {len(values)} entries for {n} models")
        return self

    def model_name(self, i: int) -> str:
        return self.names[i] if self.names else self.models[i].name

    @property
    def lower(self) -> float:
        return self.space[0]

    @property
    def upper(self) -> float:
        return self.space[1]

    @property
    def width(self) -> float:
        return self.space[1] - self.space[0]

    @cached_property
    def comparisons(self) -> Tuple[Comparison, ...]:
        """Positive off-diagonal entries of P in row-major order."""
        result: List[Comparison] = []
        n = len(self.models)
        for i in range(n):
            for j in range(n):
                p = float(self.table[i, j])
                if i == j or p <= 0:
                    continue
                origin_i = self.origin[i] if self.origin else i
                origin_j = self.origin[j] if self.origin else j
                result.append(Comparison(
                    index=len(result),
                    fixed=i,
                    candidate=j,
                    weight=p,
                    label=f"{self.model_name(i)} vs {self.model_name(j)}",
                    pair=(origin_i, origin_j),
                    tau=self.tau[i] if self.tau else 1.0,
                ))
        return tuple(result)

    def fixed_theta(self, i: int) -> np.ndarray:
        return np.asarray(self.fixed_params[i], dtype=float)


def make_problem(
    models: Sequence[RegressionModel],
    fixed_params: Sequence[Optional[Sequence[float]]],
    table,
    space: Tuple[float, float],
    names: Sequence[str] = (),
) -> ComparisonProblem:
    """Builds a ComparisonProblem, reporting invariant violations as InvalidArgumentError."""
    try:
        return ComparisonProblem(
            models=tuple(models),
            fixed_params=tuple(None if t is None else tuple(float(v) for v in t) for t in fixed_params),
            table=np.asarray(table, dtype=float),
            space=(float(space[0]), float(space[1])),
            names=tuple(names),
        )
    except ValidationError as exc:
        raise InvalidArgumentError(f"invalid comparison problem: {exc}") from exc


def expand_bayes(
    models: Sequence[RegressionModel],
    fixed_or_prior: Sequence[Union[None, Sequence[float], DiscretePrior]],
    base_table,
    space: Tuple[float, float],
    names: Sequence[str] = (),
) -> ComparisonProblem:
    """
    Reduce el criterio bayesiano a uno local con más comparaciones.

    Cada átomo λ_ik de la prior del modelo i pasa a ser un modelo fijo
    η_i(·, λ_ik) con pesos p_ij·τ_ik; los modelos candidatos (columnas) se
    comparten. Los modelos con prior quedan sólo como candidatos.
    """
    base = np.asarray(base_table, dtype=float)
    n = len(models)
    if base.shape != (n, n) or len(fixed_or_prior) != n:
        raise InvalidArgumentError(
            f"{n} models need a {n}x{n} table and {n} parameter entries, "
            f"got table {base.shape} and {len(fixed_or_prior)} entries"
        )
    names = tuple(names) if names else tuple(m.name for m in models)
    off_diagonal = base * (1.0 - np.eye(n))

    entry_models: List[RegressionModel] = list(models)
    entry_fixed: List[Optional[Tuple[float, ...]]] = []
    entry_names: List[str] = list(names)
    origin: List[int] = list(range(n))
    tau: List[float] = [1.0] * n
    atom_rows: List[Tuple[int, float]] = []
    atom_fixed: List[Tuple[float, ...]] = []

    for i, (model, given) in enumerate(zip(models, fixed_or_prior)):
        active = bool(np.any(off_diagonal[i] > 0))
        if isinstance(given, DiscretePrior):
            entry_fixed.append(None)
            if not active:
                continue
            if given.dim != model.dim:
                raise InvalidArgumentError(
                    f"prior for {names[i]!r} has dimension {given.dim}, model has {model.dim}"
                )
            for k, atom in enumerate(given.atoms):
                if not model.param_space.contains(atom.lam):
                    raise InvalidArgumentError(
                        f"prior atom {k + 1} {atom.lam} of {names[i]!r} lies outside its parameter box"
                    )
                entry_models.append(model)
                atom_fixed.append(tuple(atom.lam))
                entry_names.append(f"{names[i]}@{k + 1}")
                origin.append(i)
                tau.append(atom.tau)
                atom_rows.append((i, atom.tau))
        else:
            if active and given is None:
                raise InvalidArgumentError(f"model {names[i]!r} is compared as fixed model but has neither θ̄ nor prior")
            entry_fixed.append(None if given is None else tuple(float(v) for v in given))
    entry_fixed.extend(atom_fixed)

    size = len(entry_models)
    table = np.zeros((size, size))
    for i in range(n):
        if not isinstance(fixed_or_prior[i], DiscretePrior):
            table[i, :n] = off_diagonal[i]
    for row, (i, mass) in enumerate(atom_rows, start=n):
        table[row, :n] = off_diagonal[i] * mass

    try:
        problem = ComparisonProblem(
            models=tuple(entry_models),
            fixed_params=tuple(entry_fixed),
            table=table,
            space=(float(space[0]), float(space[1])),
            names=tuple(entry_names),
            origin=tuple(origin),
            tau=tuple(tau),
        )
    except ValidationError as exc:
        raise InvalidArgumentError(f"invalid comparison problem: {exc}") from exc
    _logger.info(f"[BAYES] expanded {n} models into {len(problem.comparisons)} active comparisons")
    return problem


# ---------------------------------------------------------------------------
# Criterion value
# ---------------------------------------------------------------------------

def _check_design(p: ComparisonProblem, d: Design) -> None:
    if not d.within(p.lower, p.upper):
        raise InvalidArgumentError(
            f"design support [{d.support[0]}, {d.support[-1]}] leaves the design space [{p.lower}, {p.upper}]"
        )


def _warm_fits(warm: Union[None, CriterionEval, Sequence[FitResult]], count: int) -> Optional[Sequence[FitResult]]:
    if warm is None:
        return None
    fits = warm.fits if isinstance(warm, CriterionEval) else warm
    return fits if len(fits) == count else None


def t_value(
    p: ComparisonProblem,
    d: Design,
    warm: Union[None, CriterionEval, Sequence[FitResult]] = None,
    opts: Optional[SolveOptions] = None,
) -> CriterionEval:
    """
    Evalúa T_P(ξ) = Σ p_ij · inf_θ Σ_k ω_k [η_i(x_k, θ̄_i) − η_j(x_k, θ)]².

    Args:
        warm: ajustes previos (mismo orden de comparaciones) usados como arranque.
        opts: arranques múltiples, semilla e hilos.

    Raises:
        NumericDomainError: anotado con la comparación que lo produjo.
    """
    opts = opts or SolveOptions()
    _check_design(p, d)
    comparisons = p.comparisons
    previous = _warm_fits(warm, len(comparisons))
    points, weights = d.points, d.masses

    def run(c: Comparison) -> FitResult:
        candidate = p.models[c.candidate]
        try:
            target = p.models[c.fixed].eval(points, p.fixed_theta(c.fixed))
            if previous is not None:
                starts = nls.default_starts(candidate, previous[c.index].theta, opts.warm_starts, opts.seed)
            else:
                starts = nls.default_starts(candidate, None, opts.multistart, opts.seed)
            return nls.fit(target, points, weights, candidate, starts)
        except NumericDomainError as exc:
            raise exc.with_context(f"comparison {c.index} ({c.label})") from exc

    if opts.threads > 1 and len(comparisons) > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as executor:
            fits = list(executor.map(run, comparisons))
    else:
        fits = [run(c) for c in comparisons]

    contributions = tuple(c.weight * f.sse for c, f in zip(comparisons, fits))
    flags = []
    for c, f in zip(comparisons, fits):
        if f.on_boundary:
            flags.append(f"{c.label}: inner fit on the parameter-box boundary")
        if f.near_tie:
            flags.append(f"{c.label}: near-tied inner minima")
    return CriterionEval(
        design=d,
        value=math.fsum(contributions),
        fits=tuple(fits),
        contributions=contributions,
        degenerate_flags=tuple(flags),
    )


def _target_scales(p: ComparisonProblem, d: Design) -> np.ndarray:
    # Σ_k ω_k η_i(x_k, θ̄_i)² per comparison: the size of what is being fitted
    return np.array([
        float(d.masses @ p.models[c.fixed].eval(d.points, p.fixed_theta(c.fixed)) ** 2)
        for c in p.comparisons
    ])


def zero_comparisons(p: ComparisonProblem, ev: CriterionEval) -> List[str]:
    """Labels of comparisons whose rival model reproduces the fixed one on the design."""
    scales = _target_scales(p, ev.design)
    return [c.label for c, f, s in zip(p.comparisons, ev.fits, scales) if f.sse <= ZERO_RTOL * s]


def is_zero(p: ComparisonProblem, ev: CriterionEval) -> bool:
    """T_P is zero up to rounding in the inner fits."""
    weights = np.array([c.weight for c in p.comparisons])
    return ev.value <= ZERO_RTOL * float(weights @ _target_scales(p, ev.design))


def pairwise_values(p: ComparisonProblem, ev: CriterionEval) -> Dict[Tuple[int, int], float]:
    """
    T_ij por par de modelos originales (promediado sobre la prior si la hay).
    """
    values: Dict[Tuple[int, int], float] = {}
    for c, f in zip(p.comparisons, ev.fits):
        values[c.pair] = values.get(c.pair, 0.0) + c.tau * f.sse
    return values


def minimax_value(p: ComparisonProblem, ev: CriterionEval, fixed: int) -> float:
    """min_j T_{fixed,j} over the pairs in which `fixed` is the fixed model."""
    values = [v for (i, _), v in pairwise_values(p, ev).items() if i == fixed]
    if not values:
        raise InvalidArgumentError(f"model {fixed} is not a fixed model in any comparison")
    return min(values)


# ---------------------------------------------------------------------------
# Ψ function
# ---------------------------------------------------------------------------

def psi(p: ComparisonProblem, ev: CriterionEval, x):
    """
    Ψ(x, ξ) = Σ p_ij [η_i(x, θ̄_i) − η_j(x, θ̂_ij)]², con θ̂ congelados en `ev`.

    Devuelve float para x escalar y np.ndarray para un array.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    total = np.zeros_like(xs)
    for c, f in zip(p.comparisons, ev.fits):
        diff = p.models[c.fixed].eval(xs, p.fixed_theta(c.fixed)) - p.models[c.candidate].eval(xs, f.theta)
        total += c.weight * diff * diff
    return float(total[0]) if np.ndim(x) == 0 else total


def evaluation_grid(p: ComparisonProblem, grid_points: int) -> np.ndarray:
    if grid_points < 3:
        raise InvalidArgumentError(f"grid_points must be >= 3, got {grid_points}")
    return np.linspace(p.lower, p.upper, grid_points)


def psi_curve(p: ComparisonProblem, ev: CriterionEval, grid_points: int = 1001) -> xr.DataArray:
    """
    Ψ sobre una malla equiespaciada, con T_P en los atributos.
    """
    grid = evaluation_grid(p, grid_points)
    return xr.DataArray(
        psi(p, ev, grid),
        coords={"x": grid},
        dims="x",
        name="psi",
        attrs={"t_value": ev.value, "description": "sensitivity function over the design space"},
    )


def _local_maxima_from_curve(p: ComparisonProblem, ev: CriterionEval, curve: xr.DataArray, refine_tol: float) -> List[float]:
    grid = curve["x"].values
    values = curve.values
    top = float(values.max())
    if top - float(values.min()) <= FLAT_RTOL * max(1.0, abs(top)):
        return [p.lower, p.upper]

    maxima: List[float] = []
    if values[0] > values[1]:
        maxima.append(p.lower)
    for i in range(1, values.size - 1):
        if values[i] > values[i - 1] and values[i] >= values[i + 1]:
            result = minimize_scalar(
                lambda t: -psi(p, ev, t),
                bounds=(grid[i - 1], grid[i + 1]),
                method="bounded",
                options={"xatol": refine_tol},
            )
            x_best = float(result.x) if -result.fun >= values[i] else float(grid[i])
            maxima.append(x_best)
    if values[-1] > values[-2]:
        maxima.append(p.upper)

    deduplicated: List[float] = []
    for x in sorted(maxima):
        if not deduplicated or x - deduplicated[-1] > refine_tol:
            deduplicated.append(x)
    return deduplicated


def psi_local_maxima(
    p: ComparisonProblem,
    ev: CriterionEval,
    grid_points: int = 1001,
    refine_tol: Optional[float] = None,
) -> List[float]:
    """
    Máximos locales estrictos de Ψ detectados en malla y refinados con Brent acotado.

    Un Ψ constante devuelve sólo los extremos del intervalo.
    """
    refine_tol = refine_tol if refine_tol is not None else 1e-8 * p.width
    return _local_maxima_from_curve(p, ev, psi_curve(p, ev, grid_points), refine_tol)


class PsiScan(BaseModel):
    """Ψ curve, its refined local maxima and the overall maximum."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    curve: xr.DataArray
    maxima: Tuple[float, ...]
    max_psi: float
    argmax_psi: float


def scan_psi(p: ComparisonProblem, ev: CriterionEval, opts: Optional[SolveOptions] = None) -> PsiScan:
    """
    Máximo de Ψ sobre la malla, los máximos refinados y los puntos soporte.
    """
    opts = opts or SolveOptions()
    curve = psi_curve(p, ev, opts.grid_points)
    maxima = _local_maxima_from_curve(p, ev, curve, opts.resolved_refine_tol(p.width))
    candidates = np.concatenate([curve["x"].values, np.asarray(maxima), ev.design.points])
    values = np.concatenate([curve.values, psi(p, ev, np.asarray(maxima)), psi(p, ev, ev.design.points)])
    best = int(np.argmax(values))
    return PsiScan(
        curve=curve,
        maxima=tuple(maxima),
        max_psi=float(values[best]),
        argmax_psi=float(candidates[best]),
    )


def psi_basins(curve: xr.DataArray, points) -> np.ndarray:
    """
    Índice de malla del máximo local de Ψ al que se llega subiendo desde cada punto.

    Dos puntos con el mismo índice no tienen ningún mínimo local de Ψ entre
    ellos. En una meseta no se avanza, así que cada punto queda en su sitio.
    """
    grid = curve["x"].values
    values = curve.values
    last = grid.size - 1
    peaks = []
    for x in np.atleast_1d(np.asarray(points, dtype=float)):
        i = int(np.clip(np.searchsorted(grid, x), 0, last))
        if i > 0 and abs(grid[i - 1] - x) <= abs(grid[i] - x):
            i -= 1
        while True:
            left = values[i - 1] if i > 0 else -np.inf
            right = values[i + 1] if i < last else -np.inf
            if max(left, right) <= values[i]:
                break
            i = i - 1 if left > right else i + 1
        peaks.append(i)
    return np.asarray(peaks, dtype=int)


def efficiency_from(value: float, max_psi: float) -> float:
    if value <= 0 or max_psi <= 0:
        return 0.0
    return float(min(1.0, value / max_psi))


def efficiency_lower_bound(p: ComparisonProblem, d: Design, opts: Optional[SolveOptions] = None) -> float:
    """
    Cota inferior de eficiencia T_P(ξ) / max_x Ψ(x, ξ); 0 si T_P(ξ) = 0.
    """
    ev = t_value(p, d, opts=opts)
    if is_zero(p, ev):
        return 0.0
    return efficiency_from(ev.value, scan_psi(p, ev, opts).max_psi)


def check_optimality(
    p: ComparisonProblem,
    d: Design,
    tol: float = 1e-3,
    opts: Optional[SolveOptions] = None,
) -> OptimalityReport:
    """
    Comprueba el teorema de equivalencia: max Ψ ≤ (1+tol)·T_P y Ψ ≈ T_P en el soporte.
    """
    if tol <= 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol}")
    ev = t_value(p, d, opts=opts)
    scan = scan_psi(p, ev, opts)
    value = ev.value
    support = d.points[d.masses > 0]
    support_psi = np.atleast_1d(psi(p, ev, support))
    gap = scan.max_psi - value
    zero = is_zero(p, ev)
    gap_ratio = math.inf if zero else scan.max_psi / value

    if zero:
        passed, diagnosis = False, "zero criterion: the design does not discriminate between the models (T_P = 0)"
    else:
        bound_ok = scan.max_psi <= (1.0 + tol) * value
        support_ok = bool(np.all(np.abs(support_psi - value) <= tol * value))
        passed = bound_ok and support_ok
        if passed:
            diagnosis = "equivalence condition holds"
        elif not bound_ok:
            diagnosis = f"Ψ exceeds T_P by a factor {gap_ratio:.6g} at x={scan.argmax_psi:.6g}"
        else:
            worst = int(np.argmax(np.abs(support_psi - value)))
            diagnosis = f"Ψ at support point x={support[worst]:.6g} is {support_psi[worst]:.6g}, not T_P"
    if ev.degenerate_flags:
        diagnosis += f"; {len(ev.degenerate_flags)} degenerate inner fit(s)"

    return OptimalityReport(
        t_value=value,
        max_psi=scan.max_psi,
        argmax_psi=scan.argmax_psi,
        gap=gap,
        gap_ratio=gap_ratio,
        support_psi=tuple(float(v) for v in support_psi),
        tol=tol,
        passed=passed,
        diagnosis=diagnosis,
    )


def directional_derivative(
    p: ComparisonProblem,
    xi: Design,
    zeta: Design,
    opts: Optional[SolveOptions] = None,
) -> float:
    """
    Q(ζ, ξ) − T_P(ξ), with Q(ζ, ξ) = ∫ Ψ(x, ξ) dζ(x) and θ̂ frozen at the ξ fits.
    """
    _check_design(p, zeta)
    ev = t_value(p, xi, opts=opts)
    q_value = float(zeta.masses @ np.atleast_1d(psi(p, ev, zeta.points)))
    return q_value - ev.value
