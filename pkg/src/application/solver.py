"""
Outer algorithms for T_P-optimal designs.

`solve` alternates between adding the local maxima of Ψ to the support and
optimizing the weights on the enlarged support. `solve_af` is the classical
exchange method that moves mass towards the argmax of Ψ with a vanishing step.
"""
import logging
import time
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.domain import criterion, weights
from src.domain.criterion import ComparisonProblem, PsiScan
from src.domain.design import build, canonicalize, drop_empty, merge_points, mix, pad, prune
from src.domain.errors import DegenerateDesignError, InvalidArgumentError, InvalidStartError, NumericDomainError
from src.domain.model import CriterionEval, Design, SolveOptions, SolveReport, TraceRow

_logger = logging.getLogger(__name__)

StepRule = Callable[[int], float]

# pérdida relativa de T_P (en unidades de eff_tol) admitida al unir una cuenca
BASIN_SLACK = 0.01


def harmonic() -> StepRule:
    """α_s = 1/(s + 1) for s = 1, 2, ..."""
    return lambda s: 1.0 / (s + 1.0)


def constant(c: float) -> StepRule:
    if not 0.0 <= c <= 1.0:
        raise InvalidArgumentError(f"constant step must lie in [0, 1], got {c}")
    return lambda s: c


STEP_RULES = {"harmonic": harmonic, "constant": constant}


def default_start(p: ComparisonProblem, count: int = 11) -> Design:
    """Uniform weights on an equispaced grid over the design space."""
    return Design.equidistant(p.lower, p.upper, count)


def _initial_eval(p: ComparisonProblem, xi0: Design, opts: SolveOptions) -> CriterionEval:
    if not xi0.within(p.lower, p.upper):
        raise InvalidArgumentError(
            f"starting design [{xi0.support[0]}, {xi0.support[-1]}] leaves the design space [{p.lower}, {p.upper}]"
        )
    ev = criterion.t_value(p, xi0, opts=opts)
    if criterion.is_zero(p, ev):
        degenerate = criterion.zero_comparisons(p, ev)
        raise InvalidStartError(
            f"T_P of the starting design is zero ({len(degenerate)} comparison(s) fitted exactly: "
            f"{', '.join(degenerate)}); use a starting design with more support points "
            f"or check that the compared models differ",
            comparisons=degenerate,
        )
    return ev


def _in_iteration(exc: NumericDomainError, iteration: int) -> NumericDomainError:
    context = f"iteration {iteration}" + (f", {exc.context}" if exc.context else "")
    return NumericDomainError(exc.detail, context=context)


def _support_spread(p: ComparisonProblem, ev: CriterionEval) -> float:
    d = ev.design
    support = d.points[d.masses > 0]
    values = np.atleast_1d(criterion.psi(p, ev, support))
    return float((values.max() - values.min()) / ev.value) if ev.value > 0 else 0.0


def _optimize_weights(p: ComparisonProblem, union: Design, opts: SolveOptions) -> np.ndarray:
    if opts.step2_method == "gradient":
        return weights.optimize_weights_gradient(
            p, union.points, union.masses, max_iters=opts.gradient_iters, opts=opts
        )
    return weights.optimize_weights_qp(p, union.points, union.masses, max_rounds=opts.step2_rounds, opts=opts)


def merge_shared_basins(ev: CriterionEval, scan: PsiScan, merge_tol: float) -> Optional[Design]:
    """
    Une los puntos soporte que suben al mismo máximo local de Ψ.

    El punto resultante se coloca en el máximo refinado de esa cuenca y recibe
    la masa del grupo. Devuelve None si cada punto ocupa su propia cuenca.
    """
    d = ev.design
    peaks = criterion.psi_basins(scan.curve, d.points)
    if np.unique(peaks).size == peaks.size:
        return None
    grid = scan.curve["x"].values
    step = float(grid[1] - grid[0])
    maxima = np.asarray(scan.maxima, dtype=float)
    points, masses = [], []
    for peak in np.unique(peaks):
        members = np.flatnonzero(peaks == peak)
        location = float(d.points[members[0]])
        if members.size > 1:
            location = float(grid[peak])
            if maxima.size:
                nearest = float(maxima[np.argmin(np.abs(maxima - location))])
                if abs(nearest - location) <= 2.0 * step:
                    location = nearest
        points.append(location)
        masses.append(float(d.masses[members].sum()))
    return merge_points(points, masses, merge_tol)


def _consolidate(
    p: ComparisonProblem, ev: CriterionEval, scan: PsiScan, floor: float, opts: SolveOptions, merge_tol: float
) -> Tuple[CriterionEval, PsiScan]:
    merged = merge_shared_basins(ev, scan, merge_tol)
    if merged is None:
        return ev, scan
    try:
        if merged.size > 1:
            omega = _optimize_weights(p, merged, opts)
            merged = canonicalize(prune(build(merged.points, omega), opts.prune_threshold), merge_tol)
    except (InvalidArgumentError, DegenerateDesignError):
        return ev, scan
    candidate = criterion.t_value(p, merged, warm=ev, opts=opts)
    if candidate.value < floor or candidate.value < ev.value * (1.0 - BASIN_SLACK * opts.eff_tol):
        _logger.debug(f"[SOLVE] basin merge rejected | T {ev.value:.10g} -> {candidate.value:.10g}")
        return ev, scan
    _logger.info(f"[SOLVE] merged support sharing a Ψ basin | {ev.design.size} -> {candidate.design.size} points")
    return candidate, criterion.scan_psi(p, candidate, opts)


def _polish(
    p: ComparisonProblem, ev: CriterionEval, scan: PsiScan, opts: SolveOptions, merge_tol: float
) -> Tuple[CriterionEval, PsiScan, float]:
    """
    Rondas extra de pesos sobre el soporte aceptado hasta que Ψ quede nivelado
    en los puntos con masa (dentro de lemma_tol·T_P) o se agote polish_rounds.
    """
    spread = _support_spread(p, ev)
    polished_any = False
    for _ in range(opts.polish_rounds):
        if spread <= opts.lemma_tol or ev.design.size == 1:
            break
        d = ev.design
        try:
            omega = weights.optimize_weights_qp(p, d.points, d.masses, max_rounds=opts.step2_rounds, opts=opts)
            omega = weights.optimize_weights_gradient(
                p, d.points, omega, max_iters=opts.gradient_iters, tol=0.1 * opts.lemma_tol, opts=opts
            )
            polished = canonicalize(prune(build(d.points, omega), opts.prune_threshold), merge_tol)
        except (InvalidArgumentError, DegenerateDesignError):
            break
        candidate = criterion.t_value(p, polished, warm=ev, opts=opts)
        if candidate.value < ev.value:
            break
        candidate_spread = _support_spread(p, candidate)
        if candidate.value == ev.value and candidate_spread >= spread:
            break
        ev, spread, polished_any = candidate, candidate_spread, True
    if polished_any:
        scan = criterion.scan_psi(p, ev, opts)
    return ev, scan, spread


def solve(p: ComparisonProblem, xi0: Optional[Design] = None, opts: Optional[SolveOptions] = None) -> SolveReport:
    """
    Calcula un diseño T_P-óptimo.

    Cada iteración: máximos locales de Ψ (más los extremos) unidos al soporte
    actual, optimización de pesos sobre la unión, poda de pesos pequeños y
    fusión de puntos cercanos. Un diseño nuevo sólo se acepta si T_P no baja.
    Tras aceptar, los puntos que comparten cuenca de Ψ se unen y los pesos se
    repulen hasta que Ψ quede nivelado en el soporte.
    Para cuando la cota de eficiencia alcanza 1 − eff_tol.

    Raises:
        InvalidStartError: si T_P(ξ₀) = 0.
        NumericDomainError: con la iteración y la comparación que lo produjo.
    """
    opts = opts or SolveOptions()
    xi0 = xi0 or default_start(p)
    merge_tol = opts.resolved_merge_tol(p.width)
    started = time.time()

    ev = _initial_eval(p, xi0, opts)
    scan = criterion.scan_psi(p, ev, opts)
    efficiency = criterion.efficiency_from(ev.value, scan.max_psi)
    trace: List[TraceRow] = [TraceRow(
        iter=0, support_size=xi0.size, t_value=ev.value, max_psi=scan.max_psi,
        efficiency=efficiency, seconds=time.time() - started, psi_spread=_support_spread(p, ev),
    )]
    warnings: List[str] = []
    _logger.info(f"[SOLVE] start | support={xi0.size} | T={ev.value:.10g} | eff={efficiency:.6f}")

    iteration = 0
    while efficiency < 1.0 - opts.eff_tol and iteration < opts.max_outer:
        iteration += 1
        tick = time.time()
        try:
            candidates = list(scan.maxima) + [p.lower, p.upper]
            union = pad(ev.design, candidates, merge_tol)
            omega = _optimize_weights(p, union, opts)
            optimized = build(union.points, omega)
            proposals = [canonicalize(prune(optimized, opts.prune_threshold), merge_tol), drop_empty(optimized)]

            accepted = None
            for proposal in proposals:
                candidate_ev = criterion.t_value(p, proposal, warm=ev, opts=opts)
                if candidate_ev.value >= ev.value:
                    accepted = candidate_ev
                    break
            if accepted is None:
                message = f"iteration {iteration}: no ascent from Step 2, keeping the previous design"
                _logger.warning(f"[SOLVE] {message}")
                warnings.append(message)
                break

            floor = ev.value
            ev = accepted
            scan = criterion.scan_psi(p, ev, opts)
            if opts.merge_basins:
                ev, scan = _consolidate(p, ev, scan, floor, opts, merge_tol)
            ev, scan, spread = _polish(p, ev, scan, opts, merge_tol)
        except NumericDomainError as exc:
            raise _in_iteration(exc, iteration) from exc

        efficiency = criterion.efficiency_from(ev.value, scan.max_psi)
        if spread > opts.lemma_tol:
            warnings.append(
                f"iteration {iteration}: Ψ differs across support points by {spread:.3g}·T_P"
            )
        trace.append(TraceRow(
            iter=iteration, support_size=ev.design.size, t_value=ev.value, max_psi=scan.max_psi,
            efficiency=efficiency, seconds=time.time() - tick, psi_spread=spread,
        ))
        _logger.info(
            f"[SOLVE] iter {iteration} | support={ev.design.size} | T={ev.value:.10g} | "
            f"eff={efficiency:.6f} | {time.time() - tick:.3f}s"
        )

    converged = efficiency >= 1.0 - opts.eff_tol
    if not converged:
        warnings.append(f"efficiency {efficiency:.6f} below 1 - eff_tol after {iteration} iteration(s)")
    warnings.extend(dict.fromkeys(ev.degenerate_flags))
    for warning in ev.degenerate_flags:
        _logger.warning(f"[SOLVE] {warning}")
    _logger.info(
        f"[SOLVE] done | converged={converged} | iterations={iteration} | {time.time() - started:.2f}s"
    )
    return SolveReport(
        design=ev.design,
        value=ev.value,
        efficiency=efficiency,
        iterations=iteration,
        trace=tuple(trace),
        warnings=tuple(warnings),
        converged=converged,
        method="algorithm2",
    )


def solve_af(
    p: ComparisonProblem,
    xi0: Optional[Design] = None,
    alpha: Optional[StepRule] = None,
    opts: Optional[SolveOptions] = None,
) -> SolveReport:
    """
    Método de intercambio clásico: ξ_{s+1} = (1 − α_s)ξ_s + α_s·δ_{x_{s+1}}, con
    x_{s+1} el máximo de Ψ(·, ξ_s).

    T_P no tiene por qué crecer en cada paso; el informe devuelve el mejor
    diseño visto. La traza guarda el mejor valor hasta cada paso y el del
    propio paso en step_value.
    """
    opts = opts or SolveOptions()
    xi0 = xi0 or default_start(p)
    alpha = alpha or harmonic()
    merge_tol = opts.resolved_merge_tol(p.width)
    started = time.time()

    ev = _initial_eval(p, xi0, opts)
    scan = criterion.scan_psi(p, ev, opts)
    efficiency = criterion.efficiency_from(ev.value, scan.max_psi)
    best_ev, best_eff, best_max_psi = ev, efficiency, scan.max_psi
    trace: List[TraceRow] = [TraceRow(
        iter=0, support_size=xi0.size, t_value=ev.value, max_psi=scan.max_psi,
        efficiency=efficiency, seconds=time.time() - started, step_value=ev.value,
    )]

    step = 0
    while best_eff < 1.0 - opts.eff_tol and step < opts.af_max_iter:
        step += 1
        tick = time.time()
        rate = alpha(step)
        try:
            if rate > 0:
                xi = canonicalize(mix(ev.design, Design.point_mass(scan.argmax_psi), rate), merge_tol)
                ev = criterion.t_value(p, xi, warm=ev, opts=opts)
                scan = criterion.scan_psi(p, ev, opts)
        except NumericDomainError as exc:
            raise _in_iteration(exc, step) from exc
        efficiency = criterion.efficiency_from(ev.value, scan.max_psi)
        if ev.value > best_ev.value:
            best_ev, best_eff, best_max_psi = ev, efficiency, scan.max_psi
        # t_value, max_psi y efficiency son los del mejor diseño visto
        trace.append(TraceRow(
            iter=step, support_size=best_ev.design.size, t_value=best_ev.value, max_psi=best_max_psi,
            efficiency=best_eff, seconds=time.time() - tick, step_value=ev.value,
        ))
        if step % 100 == 0:
            _logger.info(f"[AF] step {step} | support={ev.design.size} | T={ev.value:.10g} | eff={efficiency:.6f}")

    converged = best_eff >= 1.0 - opts.eff_tol
    warnings = [] if converged else [f"exchange method stopped at efficiency {best_eff:.6f} after {step} step(s)"]
    warnings.extend(dict.fromkeys(best_ev.degenerate_flags))
    _logger.info(f"[AF] done | converged={converged} | steps={step} | {time.time() - started:.2f}s")
    return SolveReport(
        design=best_ev.design,
        value=best_ev.value,
        efficiency=best_eff,
        iterations=step,
        trace=tuple(trace),
        warnings=tuple(warnings),
        converged=converged,
        method="atkinson-fedorov",
    )
