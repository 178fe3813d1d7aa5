import math

import numpy as np
import pytest

from src.adapters import config_file
from src.domain.errors import ConfigError
from src.domain.model import Design

CONFIGS = [
    ("x2_vs_linear.toml", 1),
    ("exp_local.toml", 1),
    ("exp_bayes_sigma04.toml", 25),
    ("dose_local.toml", 6),
    ("dose_bayes_sigma33.toml", 246),
]

MINIMAL = """
[design_space]
lower = -1.0
upper = 1.0

[[models]]
name = "square"
expression = "t1*x^2"
lower = [0.5]
upper = [2.0]
fixed_params = [1.0]

[[models]]
name = "line"
builtin = "linear"
lower = [-10.0, -10.0]
upper = [10.0, 10.0]

[comparisons]
table = [[0.0, 1.0], [0.0, 0.0]]
"""


@pytest.mark.parametrize("name,count", CONFIGS)
def test_bundled_configs_build(config_dir, name, count):
    cfg = config_file.load(config_dir / name)
    problem = config_file.to_problem(cfg)
    assert len(problem.comparisons) == count
    assert math.fsum(c.weight for c in problem.comparisons) > 0
    start = config_file.start_design(cfg)
    assert start.within(cfg.design_space.lower, cfg.design_space.upper)


def test_defaults_are_filled_in():
    cfg = config_file.loads(MINIMAL)
    assert cfg.solver.eff_tol == 1e-4
    assert cfg.algorithm.method == "algorithm2"
    assert config_file.start_design(cfg) == Design.equidistant(-1.0, 1.0, 11)


def test_dumps_round_trip(config_dir):
    for name, _ in CONFIGS:
        cfg = config_file.load(config_dir / name)
        assert config_file.loads(config_file.dumps(cfg)) == cfg


ATOMS = """
[design_space]
lower = 0.0
upper = 10.0

[[models]]
name = "η \\"fixed\\" exp"
builtin = "exp4"

[models.prior]
kind = "atoms"
atoms = [
    { lambda = [2.0, 1.0, 0.7, 1.4], tau = 0.25 },
    { lambda = [2.0, 1.0, 0.8, 1.5], tau = 0.5 },
    { lambda = [2.0, 1.0, 0.9, 1.6], tau = 0.25 },
]

[[models]]
name = "rival"
expression = "t1 - t2*exp(-t3*x)"
lower = [-10.0, -10.0, 0.01]
upper = [10.0, 10.0, 5.0]

[comparisons]
table = [[0.0, 1.0], [0.0, 0.0]]

[solver]
eff_tol = 1e-5
merge_basins = false

[start]
points = [0.0, 0.1, 2.5, 10.0]
weights = [0.3, 0.2, 0.3, 0.2]
"""


def test_dumps_round_trip_with_atoms_and_start():
    cfg = config_file.loads(ATOMS)
    text = config_file.dumps(cfg)
    assert config_file.loads(text) == cfg
    assert "[models.prior]" in text
    assert "lambda = [2.0, 1.0, 0.8, 1.5]" in text
    again = config_file.loads(text)
    assert again.models[0].name == 'η "fixed" exp'
    assert [a.tau for a in again.models[0].prior.atoms] == [0.25, 0.5, 0.25]
    assert again.solver.merge_basins is False


def test_toml_values_render_exactly():
    assert config_file._value(0.1) == "0.1"
    assert config_file._value(1e-300) == "1e-300"
    assert config_file._value(float("inf")) == "inf"
    assert config_file._value(float("nan")) == "nan"
    assert config_file._value(True) == "true"
    assert config_file._value([1, {"a": "b"}]) == '[1, { a = "b" }]'
    with pytest.raises(TypeError):
        config_file._value(None)


def test_toml_syntax_error_names_the_line():
    with pytest.raises(ConfigError) as excinfo:
        config_file.loads("[design_space]\nlower = = 1\n", source="bad.toml")
    message = str(excinfo.value)
    assert message.startswith("bad.toml: invalid TOML")
    assert "line 2" in message


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read config file"):
        config_file.load("/nonexistent/problem.toml")


@pytest.mark.parametrize("old,new,path", [
    ("lower = -1.0\nupper = 1.0", "lower = 1.0\nupper = -1.0", "design_space"),
    ('builtin = "linear"', 'builtin = "cubic"', "models.1"),
    ('builtin = "linear"', 'builtin = "linear"\nexpression = "t1"', "models.1"),
    ("[comparisons]", "[comparisons]\nextra = 1", "comparisons.extra"),
    ("table = [[0.0, 1.0], [0.0, 0.0]]", "table = [[0.0, 1.0]]", "<root>"),
])
def test_validation_errors_carry_the_field_path(old, new, path):
    with pytest.raises(ConfigError) as excinfo:
        config_file.loads(MINIMAL.replace(old, new))
    assert any(d.startswith(path) for d in excinfo.value.diagnostics), excinfo.value.diagnostics


def test_expression_error_points_at_the_offset():
    with pytest.raises(ConfigError) as excinfo:
        config_file.to_problem(config_file.loads(MINIMAL.replace('"t1*x^2"', '"t1 + *x"')))
    assert str(excinfo.value).startswith("models.0.expression")
    assert excinfo.value.diagnostics == ["t1 + *x", "     ^"]


def test_builtin_with_wrong_box_dimension():
    text = MINIMAL.replace("lower = [-10.0, -10.0]\nupper = [10.0, 10.0]", "lower = [-10.0]\nupper = [10.0]")
    with pytest.raises(ConfigError, match="has 2 parameters"):
        config_file.to_problem(config_file.loads(text))


@pytest.mark.parametrize("shorthand,cells", [
    ("all-pairs", [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]),
    ("lower-triangle", [(1, 0), (2, 0), (2, 1)]),
    ("upper-triangle", [(0, 1), (0, 2), (1, 2)]),
])
def test_comparison_shorthands(shorthand, cells):
    table = config_file.comparison_table(config_file.ComparisonConfig(shorthand=shorthand), 3)
    expected = np.zeros((3, 3))
    for cell in cells:
        expected[cell] = 1.0 / len(cells)
    np.testing.assert_allclose(table, expected)


def test_shorthand_with_explicit_value():
    table = config_file.comparison_table(config_file.ComparisonConfig(shorthand="lower-triangle", value=0.5), 2)
    np.testing.assert_array_equal(table, [[0.0, 0.0], [0.5, 0.0]])


def test_grid_prior_uses_one_based_coords_and_variance(config_dir):
    cfg = config_file.load(config_dir / "exp_bayes_sigma04.toml")
    model_cfg = cfg.models[0]
    prior = config_file.build_prior(model_cfg.prior, model_cfg, 4, "models.0.prior")
    assert len(prior.atoms) == 25
    moved = {k for a in prior.atoms for k in range(4) if a.lam[k] != model_cfg.fixed_params[k]}
    assert moved == {2, 3}
    spread = max(a.lam[2] for a in prior.atoms) - min(a.lam[2] for a in prior.atoms)
    assert spread == pytest.approx(2.0 * math.sqrt(0.4))


def test_explicit_prior_atoms():
    text = MINIMAL.replace(
        "fixed_params = [1.0]",
        "fixed_params = [1.0]\n\n[models.prior]\nkind = \"atoms\"\n"
        "atoms = [{ lambda = [0.8], tau = 0.25 }, { lambda = [1.2], tau = 0.75 }]",
    )
    problem = config_file.to_problem(config_file.loads(text))
    assert [c.weight for c in problem.comparisons] == pytest.approx([0.25, 0.75])


def test_generated_prior_needs_a_center():
    text = MINIMAL.replace(
        'upper = [10.0, 10.0]',
        'upper = [10.0, 10.0]\n\n[models.prior]\nkind = "factorial"\nvariance = 1.0',
    )
    with pytest.raises(ConfigError, match="needs 'center'"):
        config_file.to_problem(config_file.loads(text))


def test_explicit_start_design():
    text = MINIMAL + "\n[start]\npoints = [1.0, -1.0, 0.0]\nweights = [1.0, 1.0, 2.0]\n"
    design = config_file.start_design(config_file.loads(text))
    assert design == Design(support=(-1.0, 0.0, 1.0), weights=(0.25, 0.5, 0.25))


def test_start_design_outside_space():
    text = MINIMAL + "\n[start]\npoints = [-2.0, 0.0, 1.0]\n"
    with pytest.raises(ConfigError, match="leaves the design space"):
        config_file.start_design(config_file.loads(text))


def test_prior_masses_must_sum_to_one():
    text = MINIMAL.replace(
        "fixed_params = [1.0]",
        "fixed_params = [1.0]\n\n[models.prior]\nkind = \"atoms\"\n"
        "atoms = [{ lambda = [0.8], tau = 1.0 }, { lambda = [1.2], tau = 3.0 }]",
    )
    with pytest.raises(ConfigError, match="invalid prior"):
        config_file.to_problem(config_file.loads(text))
