#!/usr/bin/env python3
"""Correlation-decay portrait of one map across observable classes.

Pairs a fixed probe against a trig polynomial, a Hoelder bump and a
log-singular observable, prints the fitted decay rate of each series next
to the class envelope, and flags pairs where no rate can be claimed.

    python3 scripts/mixing_portrait.py --map -1 0 1 --n-max 10
"""

import argparse
import math

from greenlab.measure import sample_equilibrium
from greenlab.observables import holder_dist_pow, log_singular, re_power
from greenlab.sphere import SpherePoint, make_rational_map
from greenlab.stochastic import correlation_series


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--map", nargs="+", type=float, default=[0.0, 0.0, 1.0],
                    help="numerator coefficients, low degree first (denominator 1)")
    ap.add_argument("--n-samples", type=int, default=100_000)
    ap.add_argument("--n-orbits", type=int, default=50_000)
    ap.add_argument("--n-max", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    fmap = make_rational_map(tuple(args.map), (1.0,))
    cloud = sample_equilibrium(fmap, args.n_samples, seed=args.seed)
    probe = re_power(1)
    partners = [
        re_power(2),
        holder_dist_pow(0.5, SpherePoint(complex(0.3, 0.4))),
        log_singular(1.0, SpherePoint(0.0)),
    ]

    print(f"map degree {fmap.degree}, log d = {math.log(fmap.degree):.4f}")
    print(f"{'partner':>16}  {'fitted rate':>12}  {'class envelope':>14}  verdict")
    for psi in partners:
        rep = correlation_series(fmap, cloud, probe, psi, n_max=args.n_max,
                                 n_orbits=args.n_orbits, seed=args.seed + 1)
        if rep.no_claim:
            rate, verdict = "no claim", f"{rep.n_points_in_fit} significant points"
        else:
            rate = f"{rep.fitted_rate:+.4f}"
            verdict = "conforms" if rep.rate_conforms else "SLOWER THAN CLASS"
        print(f"{psi.label:>16}  {rate:>12}  {rep.class_expected_rate:>+14.4f}  {verdict}")


if __name__ == "__main__":
    main()
