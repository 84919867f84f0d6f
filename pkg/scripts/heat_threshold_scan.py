"""Scan r + |omega| for the reaction-diffusion example: threshold arithmetic vs classified decay."""

import argparse
import math

import numpy as np

from tviss.config import build_system, classify_config, with_overrides
from tviss.evolution import classify_stability
from tviss.pde import heat_decay_rate
from tviss.presets import preset


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--values", type=float, nargs="+", default=list(np.arange(2.0, 14.0, 1.0)))
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--R", default="dither", choices=["dither", "cos", "const"])
    args = p.parse_args(argv)

    print(f"# continuum threshold nu pi^2 / ell^2 = {math.pi ** 2:.4f}")
    print("r_plus_omega,threshold_coefficient,certified,UES,k,w")
    for total in args.values:
        cfg = preset("heat")
        cfg.heat.R = args.R
        cfg = with_overrides(cfg, r_plus_omega=total)
        model = build_system(cfg)
        rep = classify_stability(model.family(cfg.solver.family_dt), classify_config(cfg))
        rate = heat_decay_rate(model.heat, args.epsilon)
        print(f"{total:g},{rate:.6g},{int(rate < 0)},{int(rep.uniformly_exponentially_stable)},{rep.k:.5g},{rep.w:.5g}")


if __name__ == "__main__":
    main()
