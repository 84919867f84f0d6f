import numpy as np
import pytest

from tviss.config import build_system, compile_expr, load_config, parse_config, with_overrides
from tviss.errors import ConfigError
from tviss.presets import PRESETS, preset

MINIMAL = """
[system]
kind = matrix-constant
matrix = -1 0.5; 0 -2
input_matrix = 1; 0
[input]
piece0 = 0 const value=1
piece1 = 2 sine amp=0.5 freq=1
piece2 = 5 sample-grid times=5:6:7 values=0:1:0
[run]
seed = 7
"""


def test_parse_minimal():
    cfg = parse_config(MINIMAL)
    assert cfg.seed == 7
    model = build_system(cfg)
    assert np.array_equal(model.A(0.0), [[-1.0, 0.5], [0.0, -2.0]])
    u = model.make_input(1.0)
    assert u(1.0) == 1.0
    assert u(6.0) == 1.0
    assert model.linear and model.b_sup == 1.0


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_build(name):
    model = build_system(preset(name))
    assert model.A.dim >= 1


@pytest.mark.parametrize(
    "text,key",
    [
        ("[system]\nkind = spaceship\n", "system.kind"),
        ("[solver]\ndt = -1\n", "solver.dt"),
        ("[solver]\ndt = fast\n", "solver.dt"),
        ("[solver]\nwarp = 1\n", "solver.warp"),
        ("[nonsense]\na = 1\n", "nonsense"),
        ("[input]\npiece0 = 0 wobble\n", "input.piece0"),
        ("[input]\nfoo = 0 const\n", "input.foo"),
        ("[system]\nkind = matrix-constant\nmatrix = 1 2; 3\n", "system.matrix"),
        ("[system]\nkind = matrix-timevarying-expr\nexpr = __import__('os')\n", "system.expr"),
        ("[certify]\neta_fractions = 0.5 1.2\n", "certify.eta_fractions"),
        ("[ensemble]\nx0_min = 3\nx0_max = 1\n", "ensemble.x0_min"),
        ("[system]\nkind = pde-heat\n[heat]\nR = wild\n", "heat.R"),
    ],
)
def test_errors_name_the_offending_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(text)


def test_expression_sandbox():
    f = compile_expr("-1 + 0.5*sin(t)", "k")
    assert f(0.0) == -1.0
    with pytest.raises(ConfigError):
        compile_expr("open('x')", "k")


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.ini")


def test_overrides():
    cfg = with_overrides(preset("heat"), r_plus_omega=12.0, n=64, dt=0.02, seed=3)
    assert cfg.heat.r == 11.0 and cfg.heat.n == 64 and cfg.solver.dt == 0.02 and cfg.seed == 3
    with pytest.raises(ConfigError):
        with_overrides(preset("heat"), r_plus_omega=0.5)
