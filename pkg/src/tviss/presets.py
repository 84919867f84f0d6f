"""Named, pinned experiment configurations."""

from __future__ import annotations

from .config import ExperimentConfig, parse_config

DEFAULT_SEED = 20240601

PRESETS = {
    "scalar-decay": """
[system]
kind = matrix-constant
matrix = -1
[input]
piece0 = 0 sine amp=0.5 freq=0.2
[classify]
horizon = 12
[certify]
points = 20
""",
    "rotation": """
[system]
kind = matrix-constant
matrix = -0.1 1; -1 -0.1
[classify]
horizon = 12
""",
    "tv2": """
[system]
kind = matrix-timevarying-expr
expr = -1+0.5*sin(t), 1; -1, -1+0.5*cos(t)
input_matrix = 1; 0.5
[input]
piece0 = 0 sine amp=1 freq=0.3
[ensemble]
x0_min = 0.2
x0_max = 2
u_amp = 1
t0 = 0 1 2 3 4
[solver]
dt = 0.01
family_dt = 0.01
[classify]
t0_max = 6.3
t0_step = 0.7
horizon = 8
ubrs_step = 0.1
lower_envelope = true
[certify]
points = 100
t_span = 8
""",
    "appendix": """
[system]
kind = appendix
[classify]
t0_max = 10
t0_step = 0.5
lag_step = 0.05
horizon = 12
ubrs_step = 0.05
""",
    "blowup": """
[system]
kind = matrix-constant
matrix = 0
nonlinearity = square
[ensemble]
size = 1
x0_min = 1
x0_max = 1
u_amp = 0
[solver]
t_end = 2
dt = 0.001
""",
    "heat": """
[system]
kind = pde-heat
[heat]
nu = 1
ell = 1
omega = 1
r = 4
n = 128
R = dither
input_mode = uniform
[input]
piece0 = 0 sine amp=1 freq=0.5
[ensemble]
size = 4
x0_min = 0.2
x0_max = 2
u_amp = 1
t0 = 0 1 2.5 4
[solver]
stepper = implicit-euler
dt = 0.01
family_dt = 0.01
t_end = 3
h = 1e-7
[classify]
t0_max = 6.5
t0_step = 0.5
lag_step = 0.05
horizon = 3
ubrs_step = 0.25
[certify]
points = 20
trajectories = 20
epsilon = 0.1
t_span = 3
""",
    "ks": """
[system]
kind = pde-ks
[ks]
rho = 30
n = 128
mu = 0.5*(1+sin(t))
[input]
piece0 = 0 sine amp=1 freq=0.5
[ensemble]
size = 4
x0_min = 0.2
x0_max = 2
u_amp = 1
t0 = 0 0.5 1.5
[solver]
stepper = implicit-euler
dt = 0.001
t_end = 2
record_every = 20
h = 1e-8
[certify]
points = 20
trajectories = 20
t_span = 2
""",
}


def preset(name: str, seed: int | None = None) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r} (choose from {', '.join(sorted(PRESETS))})")
    cfg = parse_config(PRESETS[name], name=name)
    cfg.seed = DEFAULT_SEED if seed is None else seed
    return cfg
