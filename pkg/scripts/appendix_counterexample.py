"""Print the propagator values and the stability classification of the attractive-but-unstable example."""

import argparse

import numpy as np

from tviss.evolution import ClassifyConfig, EvolutionFamily, appendix_operator, classify_stability
from tviss.svgplot import line_chart


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--svg", help="optional plot of |W(t, t0)| for a few initial times")
    args = p.parse_args(argv)

    W = EvolutionFamily(appendix_operator(), "exact", 0.05)
    print("k,W(k+1,k),1/(2(k+1)),|W(k+1,k+1/2)|")
    for k in range(args.k_max):
        print(f"{k},{W.matrix(k, k + 1)[0, 0]:.17g},{1 / (2 * (k + 1)):.17g},{W.operator_norm(k + 0.5, k + 1):.17g}")
    rep = classify_stability(W, ClassifyConfig(t0_grid=tuple(np.arange(0, args.k_max, 0.5))))
    print(rep.summary())
    if args.svg:
        lags = np.linspace(0, 4, 401)
        series = [(f"t0={t0:g}", lags, [W.operator_norm(t0, t0 + s) for s in lags]) for t0 in (0.5, 2.5, 5.5, 8.5)]
        line_chart(args.svg, series, title="|W(t0 + s, t0)|", xlabel="s", ylabel="norm", logy=True)


if __name__ == "__main__":
    main()
