import os
import sys
from pathlib import Path

import pytest

# Ensure we can import src
sys.path.append(os.getcwd())
sys.path.append(str(Path(__file__).resolve().parent.parent))

from src.domain import families
from src.domain.criterion import make_problem
from src.domain.expr import parse, to_model
from src.domain.model import ParamSpace

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def square_vs_line():
    """Fixed model x² (θ̄ = 1) against straight lines on [-1, 1]."""
    square = to_model(parse("t1*x^2"), ParamSpace(lower=(0.5,), upper=(2.0,)), name="square")
    line = families.linear(ParamSpace(lower=(-10.0, -10.0), upper=(10.0, 10.0)), name="line")
    return make_problem([square, line], [(1.0,), None], [[0.0, 1.0], [0.0, 0.0]], (-1.0, 1.0))


@pytest.fixture
def x2_problem():
    return square_vs_line()


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: published design reproductions (seconds to minutes)")
