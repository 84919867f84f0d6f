"""Command-line front end: ``simulate``, ``classify``, ``certify`` and ``reproduce``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import experiments
from .config import build_system, classify_config, load_config, with_overrides
from .errors import ConfigError, Escaped, NotApplicable, SolverError, TvissError
from .evolution import classify_stability
from .presets import PRESETS, preset
from .svgplot import line_chart, scatter

log = logging.getLogger("tviss")

EXIT_OK, EXIT_CHECK, EXIT_ESCAPE, EXIT_CONFIG, EXIT_SOLVER, EXIT_NA = 0, 1, 2, 3, 4, 5


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _load(args):
    if args.config and args.system:
        raise ConfigError("use either --config or --system, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.system:
        try:
            cfg = preset(args.system)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    else:
        raise ConfigError("one of --config or --system is required")
    return with_overrides(cfg, dt=args.dt, n=args.n, rho=args.rho, r_plus_omega=args.r_plus_omega, seed=args.seed)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load(args)
    res = experiments.simulate(cfg, jobs=args.jobs)
    out = _out(args)
    # single collector: files are written only after every member has finished
    for i, tr in enumerate(res.trajectories):
        tr.to_csv(out / f"trajectory_{i:03d}.csv", states=cfg.output.states)
    (out / "summary.txt").write_text(res.summary())
    print(f"{len(res.trajectories)} members, {res.escaped} escaped; outputs in {out}")
    return EXIT_ESCAPE if (args.fail_on_escape and res.escaped) else EXIT_OK


def cmd_classify(args) -> int:
    cfg = _load(args)
    model = build_system(cfg)
    rep = classify_stability(model.family(cfg.solver.family_dt), classify_config(cfg))
    out = _out(args)
    text = f"system: {model.name}\n{rep.summary()}"
    (out / "stability_report.txt").write_text(text + "\n")
    rows = [[t0, lag, rep.norm_table[i, j]] for i, t0 in enumerate(rep.t0_grid) for j, lag in enumerate(rep.lags)]
    _write_csv(out / "norm_table.csv", ["t0", "lag", "norm_W"], rows)
    print(text)
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = _load(args)
    res = experiments.certify(cfg)
    out = _out(args)
    (out / "certification.txt").write_text(res.text())
    for key, rep in res.dissipation.items():
        name = "dissipation.csv" if len(res.dissipation) == 1 else f"dissipation_{key:g}.csv"
        rep.to_csv(out / name)
    if cfg.output.plots:
        if res.envelope_series:
            line_chart(out / "envelope.svg", res.envelope_series, title=f"{res.system}: trajectory and estimate",
                       xlabel="t - t0", ylabel="norm")
        if res.scatter is not None:
            scatter(out / "vdot_scatter.svg", res.scatter[0], res.scatter[1], title="Lie derivative vs bound",
                    xlabel="bound", ylabel="dV/dt")
    print(res.text(), end="")
    return EXIT_OK if res.passed else EXIT_CHECK


def cmd_reproduce(args) -> int:
    names = list(experiments.REPRODUCTIONS) if args.example == "all" else [args.example]
    seed = preset("heat").seed if args.seed is None else args.seed
    out = _out(args)
    status = EXIT_OK
    for name in names:
        rep = experiments.REPRODUCTIONS[name](seed)
        _write_csv(out / f"reproduce_{name}.csv", rep.header, rep.rows)
        lines = [f"example: {name}", f"seed: {seed}"] + [c.line() for c in rep.checks]
        (out / f"acceptance_{name}.txt").write_text("\n".join(lines) + "\n")
        print("\n".join(lines))
        if not rep.passed:
            status = EXIT_CHECK
    return status


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to an experiment config file")
    common.add_argument("--system", help=f"named preset ({', '.join(sorted(PRESETS))})")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="ensemble seed (numpy PCG64)")
    common.add_argument("--fail-on-escape", action="store_true", help="exit 2 if any trajectory escapes")
    common.add_argument("--dt", type=float, help="override the solver step")
    common.add_argument("--n", type=int, help="override the PDE grid size")
    common.add_argument("--rho", type=float, help="override the KS anti-diffusion parameter")
    common.add_argument("--r-plus-omega", type=float, dest="r_plus_omega", help="override r + |omega| for heat")
    common.add_argument("--jobs", type=int, default=1, help="concurrent ensemble members")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tviss", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate an ensemble").set_defaults(func=cmd_simulate)
    sub.add_parser("classify", parents=[common], help="classify evolution-family stability").set_defaults(
        func=cmd_classify)
    sub.add_parser("certify", parents=[common], help="build and check Lyapunov certificates").set_defaults(
        func=cmd_certify)
    rp = sub.add_parser("reproduce", parents=[common], help="run the pinned reference examples")
    rp.add_argument("example", choices=[*experiments.REPRODUCTIONS, "all"])
    rp.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotApplicable as exc:
        print(f"not applicable: {exc}", file=sys.stderr)
        return EXIT_NA
    except Escaped as exc:
        print(f"escape: {exc}", file=sys.stderr)
        return EXIT_ESCAPE
    except (SolverError, TvissError, FloatingPointError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
