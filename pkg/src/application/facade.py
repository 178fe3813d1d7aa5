import logging
from functools import cached_property
from typing import Optional

import xarray as xr

from src.adapters import config_file
from src.adapters.config_file import ProblemConfig
from src.application import solver
from src.domain import criterion
from src.domain.criterion import ComparisonProblem
from src.domain.model import CriterionEval, Design, OptimalityReport, SolveOptions, SolveReport

_logger = logging.getLogger(__name__)


class DiscriminationFacade:
    """
    Fachada principal de la aplicación.
    Construye el problema a partir de la configuración y expone los casos de
    uso (resolver, comprobar un diseño, curva Ψ) a la interfaz.
    """

    def __init__(self, config: ProblemConfig, threads: Optional[int] = None, seed: Optional[int] = None):
        overrides = {}
        if threads is not None:
            overrides["threads"] = threads
        if seed is not None:
            overrides["seed"] = seed
        self.config = config.model_copy(
            update={"solver": config.solver.model_copy(update=overrides)}
        ) if overrides else config

    @property
    def options(self) -> SolveOptions:
        return self.config.solver

    @cached_property
    def problem(self) -> ComparisonProblem:
        return config_file.to_problem(self.config)

    def start_design(self) -> Design:
        return config_file.start_design(self.config)

    def solve(self) -> SolveReport:
        """
        Ejecuta el algoritmo configurado desde el diseño inicial configurado.
        """
        algorithm = self.config.algorithm
        start = self.start_design()
        if algorithm.method == "atkinson-fedorov":
            rule = solver.harmonic() if algorithm.step_rule == "harmonic" else solver.constant(algorithm.step_constant)
            return solver.solve_af(self.problem, start, rule, self.options)
        return solver.solve(self.problem, start, self.options)

    def check(self, design: Design, tol: Optional[float] = None) -> OptimalityReport:
        return criterion.check_optimality(self.problem, design, tol or self.options.check_tol, self.options)

    def evaluate(self, design: Design) -> CriterionEval:
        return criterion.t_value(self.problem, design, opts=self.options)

    def curve(self, design: Design) -> xr.DataArray:
        ev = self.evaluate(design)
        return criterion.psi_curve(self.problem, ev, self.options.grid_points)

    def pairwise(self, design: Design):
        return criterion.pairwise_values(self.problem, self.evaluate(design))
