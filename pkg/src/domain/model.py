import math
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Precisión de trabajo (épsilon de máquina para float64)
MACHINE_EPS = float(np.finfo(float).eps)
DEFAULT_PRUNE_THRESHOLD = MACHINE_EPS ** 0.25
WEIGHT_SUM_TOL = 1e-12


class ParamSpace(BaseModel):
    """
    Caja compacta de parámetros Θ_j = [lower, upper] (coordenada a coordenada).
    """
    model_config = ConfigDict(frozen=True)

    lower: tuple[float, ...] = Field(..., min_length=1, description="Cotas inferiores")
    upper: tuple[float, ...] = Field(..., min_length=1, description="Cotas superiores")

    @model_validator(mode="after")
    def _check_bounds(self) -> "ParamSpace":
        if len(self.lower) != len(self.upper):
            raise ValueError(f"lower has {len(self.lower)} entries but upper has {len(self.upper)}")
        for k, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"bound {k} is not finite: [{lo}, {hi}]")
            if not lo < hi:
                raise ValueError(f"bound {k} is empty: lower={lo} >= upper={hi}")
        return self

    @classmethod
    def around(cls, center: Sequence[float], scale: float = 10.0) -> "ParamSpace":
        """
        Caja por defecto centre ± scale·|centre| (± scale si el centro es 0).
        """
        half = [scale * abs(c) if c != 0 else scale for c in center]
        return cls(
            lower=tuple(float(c) - h for c, h in zip(center, half)),
            upper=tuple(float(c) + h for c, h in zip(center, half)),
        )

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower_array + self.upper_array)

    @property
    def width(self) -> np.ndarray:
        return self.upper_array - self.lower_array

    def contains(self, theta: Sequence[float], rtol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        slack = rtol * self.width
        return bool(np.all(theta >= self.lower_array - slack) and np.all(theta <= self.upper_array + slack))

    def clip(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.lower_array, self.upper_array)


class Design(BaseModel):
    """
    Diseño aproximado: medida de probabilidad con soporte finito.

    Soporte estrictamente creciente y pesos no negativos que suman 1.
    """
    model_config = ConfigDict(frozen=True)

    support: tuple[float, ...] = Field(..., min_length=1)
    weights: tuple[float, ...] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_measure(self) -> "Design":
        if len(self.support) != len(self.weights):
            raise ValueError(f"{len(self.support)} support points but {len(self.weights)} weights")
        if not all(math.isfinite(x) for x in self.support):
            raise ValueError("support points must be finite")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise ValueError("support must be strictly increasing")
        if any(not math.isfinite(w) or w < 0 for w in self.weights):
            raise ValueError("weights must be finite and nonnegative")
        total = math.fsum(self.weights)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        return self

    @classmethod
    def from_arrays(cls, points: Sequence[float], weights: Sequence[float], normalize: bool = True) -> "Design":
        """
        Builds a design from unsorted arrays. Points must already be distinct.
        """
        points = np.asarray(points, dtype=float).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        if points.size != weights.size:
            raise ValueError(f"{points.size} points but {weights.size} weights")
        order = np.argsort(points, kind="stable")
        points, weights = points[order], weights[order]
        if normalize:
            total = weights.sum()
            if not total > 0:
                raise ValueError("weights have no mass")
            weights = weights / total
        return cls(support=tuple(points.tolist()), weights=tuple(weights.tolist()))

    @classmethod
    def uniform(cls, points: Sequence[float]) -> "Design":
        return cls.from_arrays(points, np.ones(len(points)))

    @classmethod
    def equidistant(cls, lower: float, upper: float, count: int = 11) -> "Design":
        return cls.uniform(np.linspace(lower, upper, count))

    @classmethod
    def point_mass(cls, x: float) -> "Design":
        return cls(support=(float(x),), weights=(1.0,))

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    @property
    def masses(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def size(self) -> int:
        return len(self.support)

    def within(self, lower: float, upper: float) -> bool:
        return self.support[0] >= lower and self.support[-1] <= upper

    def rows(self) -> str:
        """Two stacked lines, points over weights, as in published design tables."""
        top = " ".join(f"{x:9.3f}" for x in self.support)
        bottom = " ".join(f"{w:9.3f}" for w in self.weights)
        return f"{top}\n{bottom}"


class PriorAtom(BaseModel):
    model_config = ConfigDict(frozen=True)

    lam: tuple[float, ...] = Field(..., min_length=1, description="Punto soporte λ_ik")
    tau: float = Field(..., gt=0, description="Masa τ_ik")


class DiscretePrior(BaseModel):
    """
    Prior discreta sobre los parámetros de un modelo fijo.
    """
    model_config = ConfigDict(frozen=True)

    atoms: tuple[PriorAtom, ...] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_mass(self) -> "DiscretePrior":
        total = math.fsum(a.tau for a in self.atoms)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"prior masses sum to {total!r}, not 1")
        dims = {len(a.lam) for a in self.atoms}
        if len(dims) != 1:
            raise ValueError(f"prior atoms have mixed dimensions {sorted(dims)}")
        return self

    @classmethod
    def normalized(cls, points: Sequence[Sequence[float]], masses: Sequence[float]) -> "DiscretePrior":
        masses = np.asarray(masses, dtype=float)
        masses = masses / masses.sum()
        return cls(atoms=tuple(
            PriorAtom(lam=tuple(float(v) for v in lam), tau=float(tau)) for lam, tau in zip(points, masses)
        ))

    @property
    def dim(self) -> int:
        return len(self.atoms[0].lam)


class FitResult(BaseModel):
    """
    Resultado de un problema interno de mínimos cuadrados ponderados.
    """
    model_config = ConfigDict(frozen=True)

    theta_hat: tuple[float, ...]
    sse: float = Field(..., ge=0)
    converged: bool
    grad_norm: float
    on_boundary: bool
    starts_used: int = Field(..., ge=1)
    near_tie: bool = False
    iterations: int = 0

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.theta_hat, dtype=float)


class CriterionEval(BaseModel):
    """
    Evaluación de T_P en un diseño, con los ajustes internos por comparación.
    """
    model_config = ConfigDict(frozen=True)

    design: Design
    value: float = Field(..., ge=0)
    fits: tuple[FitResult, ...]
    contributions: tuple[float, ...]
    degenerate_flags: tuple[str, ...] = ()


class OptimalityReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_value: float
    max_psi: float
    argmax_psi: float
    gap: float
    gap_ratio: float
    support_psi: tuple[float, ...]
    tol: float
    passed: bool
    diagnosis: str


class QPData(BaseModel):
    """
    Linealización cuadrática de g(ω) alrededor de ω̄: φ(ω) = −ωᵀQω + bᵀω.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    Q: np.ndarray
    b: np.ndarray

    @model_validator(mode="after")
    def _check_shapes(self) -> "QPData":
        n = self.b.shape[0]
        if self.Q.shape != (n, n):
            raise ValueError(f"Q has shape {self.Q.shape}, expected {(n, n)}")
        scale = max(1.0, float(np.max(np.abs(self.Q))) if self.Q.size else 1.0)
        if not np.allclose(self.Q, self.Q.T, rtol=0.0, atol=1e-12 * scale):
            raise ValueError("Q must be symmetric")
        return self

    def objective(self, omega: np.ndarray) -> float:
        omega = np.asarray(omega, dtype=float)
        return float(-omega @ self.Q @ omega + self.b @ omega)


class SolveOptions(BaseModel):
    """
    Opciones de los algoritmos externos. Ninguna viene fijada por el método;
    los valores por defecto son decisiones del repositorio.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    grid_points: int = Field(1001, ge=3)
    eff_tol: float = Field(1e-4, gt=0, lt=1)
    max_outer: int = Field(50, ge=1)
    step2_method: Literal["qp", "gradient"] = "qp"
    step2_rounds: int = Field(5, ge=1)
    gradient_iters: int = Field(200, ge=1)
    lemma_tol: float = Field(1e-3, gt=0)
    polish_rounds: int = Field(5, ge=0)
    merge_basins: bool = True
    prune_threshold: float = Field(DEFAULT_PRUNE_THRESHOLD, ge=0, lt=1)
    merge_tol: Optional[float] = Field(None, ge=0)
    refine_tol: Optional[float] = Field(None, gt=0)
    multistart: int = Field(5, ge=1)
    warm_starts: int = Field(1, ge=1)
    seed: int = 20240601
    threads: int = Field(1, ge=1)
    af_max_iter: int = Field(2000, ge=1)
    check_tol: float = Field(1e-3, gt=0)

    def resolved_merge_tol(self, width: float) -> float:
        return self.merge_tol if self.merge_tol is not None else 1e-6 * width

    def resolved_refine_tol(self, width: float) -> float:
        return self.refine_tol if self.refine_tol is not None else 1e-8 * width


class TraceRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    iter: int
    support_size: int
    t_value: float
    max_psi: float
    efficiency: float
    seconds: float
    psi_spread: float = 0.0
    # valor de T_P del diseño del paso; t_value guarda el mejor visto
    step_value: Optional[float] = None


class SolveReport(BaseModel):
    """
    Resultado de un algoritmo externo: diseño final, certificado y traza.
    """
    model_config = ConfigDict(frozen=True)

    design: Design
    value: float
    efficiency: float = Field(..., ge=0, le=1)
    iterations: int
    trace: tuple[TraceRow, ...]
    warnings: tuple[str, ...] = ()
    converged: bool
    method: str = "algorithm2"

    @field_validator("trace")
    @classmethod
    def _trace_not_empty(cls, trace: tuple[TraceRow, ...]) -> tuple[TraceRow, ...]:
        if not trace:
            raise ValueError("trace must contain at least the starting design")
        return trace
