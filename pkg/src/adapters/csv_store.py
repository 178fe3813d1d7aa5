"""
Design files: CSV with columns `x,weight` at 17 significant digits.
"""
from pathlib import Path
from typing import Optional, Tuple, Union

import pandas as pd
from pydantic import ValidationError

from src.domain.errors import InvalidArgumentError
from src.domain.model import Design

FLOAT_FORMAT = "%.17g"
DESIGN_COLUMNS = ["x", "weight"]


def write_design(path: Union[str, Path], design: Design) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"x": design.points, "weight": design.masses})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_design(path: Union[str, Path], space: Optional[Tuple[float, float]] = None) -> Design:
    """
    Lee un diseño sin renormalizar: los pesos deben sumar 1.

    Raises:
        InvalidArgumentError: fichero ilegible, columnas erróneas o diseño inválido.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=float)
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise InvalidArgumentError(f"cannot read design file {path}: {exc}") from exc
    if list(frame.columns) != DESIGN_COLUMNS:
        raise InvalidArgumentError(f"design file {path} must have columns {DESIGN_COLUMNS}, got {list(frame.columns)}")
    if frame.empty or frame.isna().any().any():
        raise InvalidArgumentError(f"design file {path} is empty or has missing values")
    frame = frame.sort_values("x", kind="stable")
    try:
        design = Design(support=tuple(frame["x"].tolist()), weights=tuple(frame["weight"].tolist()))
    except ValidationError as exc:
        reasons = "; ".join(err["msg"] for err in exc.errors())
        raise InvalidArgumentError(f"design file {path} is not a valid design: {reasons}") from exc
    if space is not None and not design.within(*space):
        raise InvalidArgumentError(f"design file {path} has points outside the design space {list(space)}")
    return design
