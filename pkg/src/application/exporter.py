import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd
import xarray as xr

from src.adapters import config_file, csv_store
from src.adapters.config_file import ProblemConfig
from src.domain.criterion import ComparisonProblem
from src.domain.design import round_to_runs
from src.domain.model import OptimalityReport, SolveReport

_logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["iter", "support_size", "t_value", "max_psi", "efficiency", "seconds", "psi_spread", "step_value"]


class ResultExporter:
    """
    Escribe los resultados de una ejecución: diseño, traza, curva Ψ e informe.
    Todos los números salen con 17 cifras significativas.
    """

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)

    def _path(self, name: Union[str, Path]) -> Path:
        path = Path(name)
        path = path if path.is_absolute() else self.out_dir / path
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_trace(self, report: SolveReport, name: str = "trace.csv") -> Path:
        frame = pd.DataFrame([row.model_dump() for row in report.trace], columns=TRACE_COLUMNS)
        path = self._path(name)
        frame.to_csv(path, index=False, float_format=csv_store.FLOAT_FORMAT)
        return path

    def write_curve(self, curve: xr.DataArray, name: str = "curve.csv") -> Path:
        """`x,psi,t_value` over the grid; t_value repeats the T_P reference level on every row."""
        frame = curve.to_dataframe(name="psi").reset_index()[["x", "psi"]]
        frame["t_value"] = float(curve.attrs["t_value"])
        path = self._path(name)
        frame.to_csv(path, index=False, float_format=csv_store.FLOAT_FORMAT)
        return path

    def write_design(self, report: SolveReport, name: str = "design.csv") -> Path:
        return csv_store.write_design(self._path(name), report.design)

    def write_report(self, text: str, name: str = "report.txt") -> Path:
        path = self._path(name)
        path.write_text(text, encoding="utf-8")
        return path

    def write_effective_config(self, cfg: ProblemConfig, name: str = "effective_config.toml") -> Path:
        path = self._path(name)
        path.write_text(config_file.dumps(cfg), encoding="utf-8")
        return path


def _pair_lines(problem: ComparisonProblem, pairwise: Dict[Tuple[int, int], float]) -> List[str]:
    return [
        f"  T[{problem.model_name(i)} | {problem.model_name(j)}] = {value:.17g}"
        for (i, j), value in sorted(pairwise.items())
    ]


def render_report(
    cfg: ProblemConfig,
    problem: ComparisonProblem,
    report: SolveReport,
    check: Optional[OptimalityReport] = None,
    pairwise: Optional[Dict[Tuple[int, int], float]] = None,
) -> str:
    """
    Informe de texto: diseño en dos filas (puntos sobre pesos), criterio,
    eficiencia, avisos y la configuración efectiva en TOML.
    """
    lines = [
        "T-optimal discriminating design",
        "=" * 31,
        f"method:        {report.method}",
        f"design space:  [{problem.lower:g}, {problem.upper:g}]",
        f"models:        {', '.join(m.name for m in cfg.models)}",
        f"comparisons:   {len(problem.comparisons)}",
        "",
        "design (points over weights):",
        report.design.rows(),
        "",
        f"T_P:           {report.value:.17g}",
        f"efficiency >=  {report.efficiency:.17g}",
        f"iterations:    {report.iterations}",
        f"converged:     {report.converged}",
    ]
    if check is not None:
        lines += [
            f"max psi:       {check.max_psi:.17g} at x = {check.argmax_psi:.17g}",
            f"check:         {'pass' if check.passed else 'fail'} ({check.diagnosis})",
        ]
    if pairwise:
        lines += ["", "pairwise criterion values:"] + _pair_lines(problem, pairwise)
    if cfg.output.runs is not None and cfg.output.runs >= report.design.size:
        runs = round_to_runs(report.design, cfg.output.runs)
        lines += ["", f"rounded to {cfg.output.runs} runs: {' '.join(str(int(r)) for r in runs)}"]
    if report.warnings:
        lines += ["", "warnings:"] + [f"  - {w}" for w in report.warnings]
    lines += ["", "# effective configuration", config_file.dumps(cfg)]
    return "\n".join(lines)
