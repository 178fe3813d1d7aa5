"""
Problem configuration files (TOML).

Example::

    [design_space]
    lower = 0.0
    upper = 10.0

    [[models]]
    name = "eta1"
    builtin = "exp4"
    fixed_params = [2.0, 1.0, 0.8, 1.5]

    [[models]]
    name = "eta2"
    expression = "t1 - t2*exp(-t3*x)"
    lower = [0.0, 0.0, 0.01]
    upper = [10.0, 10.0, 10.0]

    [comparisons]
    table = [[0, 1], [0, 0]]

Expressions follow the grammar in `src.domain.expr`. Priors go in a
`[models.prior]` table under the model they belong to.
"""
import json
import math
import tomllib
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.domain import families, priors
from src.domain.criterion import ComparisonProblem, expand_bayes
from src.domain.errors import ConfigError, DesignError, ExprSyntaxError
from src.domain.expr import parse, to_model
from src.domain.model import Design, DiscretePrior, ParamSpace, PriorAtom, SolveOptions
from src.domain.ports import RegressionModel

SHORTHANDS = ("all-pairs", "lower-triangle", "upper-triangle")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class DesignSpaceConfig(_Section):
    lower: float
    upper: float

    @model_validator(mode="after")
    def _check_interval(self) -> "DesignSpaceConfig":
        if not self.lower < self.upper:
            raise ValueError(f"lower ({self.lower}) must be below upper ({self.upper})")
        return self


class AtomConfig(_Section):
    lam: List[float] = Field(..., alias="lambda", min_length=1)
    tau: float = Field(..., gt=0)


class PriorConfig(_Section):
    """
    Prior discreta: átomos explícitos o generada (rejilla producto o factorial ±σ).
    `coords` usa índices de parámetro en base 1 (t1 = 1).
    """
    kind: Literal["atoms", "grid", "factorial"]
    atoms: Optional[List[AtomConfig]] = None
    center: Optional[List[float]] = None
    variance: Optional[float] = Field(None, ge=0)
    coords: Optional[List[int]] = None
    levels: int = Field(5, ge=1)
    step: float = Field(0.5, gt=0)
    exponent_sign: Literal[-1, 1] = -1

    @model_validator(mode="after")
    def _check_kind(self) -> "PriorConfig":
        if self.kind == "atoms" and not self.atoms:
            raise ValueError("kind = 'atoms' needs a non-empty 'atoms' list")
        if self.kind != "atoms" and self.variance is None:
            raise ValueError(f"kind = '{self.kind}' needs 'variance' (σ²)")
        return self


class ModelConfig(_Section):
    name: str = Field(..., min_length=1)
    builtin: Optional[str] = None
    expression: Optional[str] = None
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    fixed_params: Optional[List[float]] = None
    prior: Optional[PriorConfig] = None

    @model_validator(mode="after")
    def _check_source(self) -> "ModelConfig":
        if (self.builtin is None) == (self.expression is None):
            raise ValueError("give exactly one of 'builtin' or 'expression'")
        if self.builtin is not None and self.builtin not in families.BUILTIN_FAMILIES:
            raise ValueError(f"unknown builtin '{self.builtin}', choose one of {sorted(families.BUILTIN_FAMILIES)}")
        if (self.lower is None) != (self.upper is None):
            raise ValueError("give both 'lower' and 'upper' or neither")
        return self


class ComparisonConfig(_Section):
    """Full matrix (`table`) or a shorthand with a common value."""
    table: Optional[List[List[float]]] = None
    shorthand: Optional[Literal["all-pairs", "lower-triangle", "upper-triangle"]] = None
    value: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _check_form(self) -> "ComparisonConfig":
        if (self.table is None) == (self.shorthand is None):
            raise ValueError("give exactly one of 'table' or 'shorthand'")
        return self


class AlgorithmConfig(_Section):
    method: Literal["algorithm2", "atkinson-fedorov"] = "algorithm2"
    step_rule: Literal["harmonic", "constant"] = "harmonic"
    step_constant: float = Field(0.1, ge=0, le=1)


class StartConfig(_Section):
    points: Optional[List[float]] = None
    weights: Optional[List[float]] = None
    count: int = Field(11, ge=1)

    @model_validator(mode="after")
    def _check_pairs(self) -> "StartConfig":
        if self.weights is not None and self.points is None:
            raise ValueError("'weights' needs 'points'")
        if self.points is not None and self.weights is not None and len(self.points) != len(self.weights):
            raise ValueError(f"{len(self.points)} points but {len(self.weights)} weights")
        return self


class OutputConfig(_Section):
    dir: Optional[str] = None
    runs: Optional[int] = Field(None, ge=1)
    design: str = "design.csv"
    trace: str = "trace.csv"
    curve: str = "curve.csv"
    report: str = "report.txt"


class ProblemConfig(_Section):
    """
    Configuración completa de un problema de discriminación.
    """
    design_space: DesignSpaceConfig
    models: List[ModelConfig] = Field(..., min_length=2)
    comparisons: ComparisonConfig
    solver: SolveOptions = SolveOptions()
    algorithm: AlgorithmConfig = AlgorithmConfig()
    start: StartConfig = StartConfig()
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _check_names(self) -> "ProblemConfig":
        names = [m.name for m in self.models]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate model names: {duplicates}")
        if self.comparisons.table is not None:
            n = len(self.models)
            if len(self.comparisons.table) != n or any(len(row) != n for row in self.comparisons.table):
                raise ValueError(f"comparisons.table must be {n}x{n} for {n} models")
        return self


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------

def _format_validation(exc: ValidationError) -> List[str]:
    lines = []
    for err in exc.errors():
        path = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return lines


def loads(text: str, source: str = "<string>") -> ProblemConfig:
    """
    Raises:
        ConfigError: con línea/columna (sintaxis TOML) o ruta del campo (validación).
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: invalid TOML", [str(exc)]) from exc
    try:
        return ProblemConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{source}: invalid problem configuration", _format_validation(exc)) from exc


def load(path: Union[str, Path]) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    return loads(text, str(path))


# ---------------------------------------------------------------------------
# Building the domain problem
# ---------------------------------------------------------------------------

def _center(cfg: ModelConfig) -> Optional[List[float]]:
    if cfg.fixed_params is not None:
        return cfg.fixed_params
    if cfg.prior is not None and cfg.prior.center is not None:
        return cfg.prior.center
    if cfg.builtin is not None:
        return list(families.nominal_center(cfg.builtin))
    return None


def _param_space(cfg: ModelConfig, where: str) -> ParamSpace:
    try:
        if cfg.lower is not None:
            return ParamSpace(lower=tuple(cfg.lower), upper=tuple(cfg.upper))
        center = _center(cfg)
        if center is None:
            raise ConfigError(f"{where}: give 'lower'/'upper' or 'fixed_params' to define the parameter box")
        return ParamSpace.around(center)
    except ValidationError as exc:
        raise ConfigError(f"{where}: invalid parameter box", _format_validation(exc)) from exc


def build_model(cfg: ModelConfig, index: int) -> RegressionModel:
    where = f"models.{index}"
    space = _param_space(cfg, where)
    if cfg.builtin is not None:
        model = families.builtin(cfg.builtin, name=cfg.name)
        if model.dim != space.dim:
            raise ConfigError(f"{where}: builtin '{cfg.builtin}' has {model.dim} parameters, box has {space.dim}")
        return model.with_space(space)
    try:
        return to_model(parse(cfg.expression), space, name=cfg.name)
    except ExprSyntaxError as exc:
        raise ConfigError(f"{where}.expression: {exc}", [cfg.expression, " " * exc.position + "^"]) from exc


def build_prior(cfg: PriorConfig, model_cfg: ModelConfig, dim: int, where: str) -> DiscretePrior:
    try:
        if cfg.kind == "atoms":
            return DiscretePrior(atoms=tuple(PriorAtom(lam=tuple(a.lam), tau=a.tau) for a in cfg.atoms))
        center = cfg.center or model_cfg.fixed_params
        if center is None:
            raise ConfigError(f"{where}: a generated prior needs 'center' or the model's 'fixed_params'")
        if len(center) != dim:
            raise ConfigError(f"{where}: center has {len(center)} entries, model has {dim} parameters")
        coords = None if cfg.coords is None else [k - 1 for k in cfg.coords]
        sigma = math.sqrt(cfg.variance)
        if cfg.kind == "grid":
            return priors.product_grid_prior(center, sigma, coords, levels=cfg.levels, step=cfg.step)
        return priors.factorial_prior(center, sigma, coords, exponent_sign=cfg.exponent_sign)
    except ValidationError as exc:
        raise ConfigError(f"{where}: invalid prior", _format_validation(exc)) from exc
    except DesignError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc


def comparison_table(cfg: ComparisonConfig, n: int) -> np.ndarray:
    if cfg.table is not None:
        return np.asarray(cfg.table, dtype=float)
    rows, cols = np.indices((n, n))
    mask = {
        "all-pairs": rows != cols,
        "lower-triangle": cols < rows,
        "upper-triangle": cols > rows,
    }[cfg.shorthand]
    value = cfg.value if cfg.value is not None else 1.0 / int(mask.sum())
    return np.where(mask, value, 0.0)


def to_problem(cfg: ProblemConfig) -> ComparisonProblem:
    """
    Construye el ComparisonProblem (expandido si hay priors).

    Raises:
        ConfigError: modelos, priors o tabla inconsistentes.
    """
    models = [build_model(m, i) for i, m in enumerate(cfg.models)]
    parameters: List[Union[None, Tuple[float, ...], DiscretePrior]] = []
    for i, (m, model) in enumerate(zip(cfg.models, models)):
        if m.prior is not None:
            parameters.append(build_prior(m.prior, m, model.dim, f"models.{i}.prior"))
        elif m.fixed_params is not None:
            parameters.append(tuple(m.fixed_params))
        else:
            parameters.append(None)
    table = comparison_table(cfg.comparisons, len(models))
    space = (cfg.design_space.lower, cfg.design_space.upper)
    try:
        return expand_bayes(models, parameters, table, space, names=[m.name for m in cfg.models])
    except DesignError as exc:
        raise ConfigError(f"inconsistent problem: {exc}") from exc


def start_design(cfg: ProblemConfig) -> Design:
    start = cfg.start
    space = cfg.design_space
    try:
        if start.points is None:
            return Design.equidistant(space.lower, space.upper, start.count)
        weights = start.weights if start.weights is not None else [1.0] * len(start.points)
        design = Design.from_arrays(start.points, weights)
    except (ValidationError, ValueError) as exc:
        raise ConfigError(f"start: invalid starting design: {exc}") from exc
    if not design.within(space.lower, space.upper):
        raise ConfigError("start: starting design leaves the design space")
    return design


# ---------------------------------------------------------------------------
# Effective-config echo
# ---------------------------------------------------------------------------

ARRAY_TABLES = {"models"}

TomlScalar = Union[bool, int, float, str]
TomlValue = Union[TomlScalar, List["TomlValue"], Tuple["TomlValue", ...], Dict[str, "TomlValue"]]


def _value(value: TomlValue) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value) if math.isfinite(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_value(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{ " + ", ".join(f"{k} = {_value(v)}" for k, v in value.items()) + " }"
    raise TypeError(f"cannot render {type(value).__name__} as TOML")


def _table(prefix: str, data: Dict[str, TomlValue], lines: List[str]) -> None:
    nested = []
    for key, value in data.items():
        if isinstance(value, dict) or key in ARRAY_TABLES:
            nested.append((key, value))
        else:
            lines.append(f"{key} = {_value(value)}")
    for key, value in nested:
        name = f"{prefix}.{key}" if prefix else key
        if key in ARRAY_TABLES:
            for item in value:
                lines.append("")
                lines.append(f"[[{name}]]")
                _table(name, item, lines)
        else:
            lines.append("")
            lines.append(f"[{name}]")
            _table(name, value, lines)


def dumps(cfg: ProblemConfig) -> str:
    """Renders the fully defaulted configuration back to TOML."""
    lines: List[str] = []
    _table("", cfg.model_dump(mode="json", by_alias=True, exclude_none=True), lines)
    return "\n".join(lines).lstrip("\n") + "\n"
