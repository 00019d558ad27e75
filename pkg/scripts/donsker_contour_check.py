"""Random-walk contour estimates of the single-point continuum moment.

Sweeps the number of walk steps per excursion and compares each estimate
with the deterministic shape integral of the same root-distance
indicator.  Truncating excursion lengths at l_max biases the walk
estimate low by about 2 u^2 / sqrt(2 pi l_max), u = R sigma / 2, so the
gate is a relative error rather than a z-score.  Coarse step counts are
diagnostic; only the finest level is gated.

Example:
    python scripts/donsker_contour_check.py --R 1.0 --steps 1000 10000 \
        --n-excursions 10000 --l-max 300 --seed 7
"""

import argparse
import math
import sys

from branchlab.limits import LimitQuery, crt_moment, donsker_crt_check


def parse_args(argv):
    ap = argparse.ArgumentParser(
        description="walk-excursion contour against the shape integral"
    )
    ap.add_argument("--R", type=float, default=1.0, help="indicator radius")
    ap.add_argument("--sigma-sq", type=float, default=1.0)
    ap.add_argument("--n-excursions", type=int, default=10_000)
    ap.add_argument("--steps", type=int, nargs="+", default=[1_000, 10_000])
    ap.add_argument("--l-max", type=float, default=300.0)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--rel-gate", type=float, default=0.10)
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    want, _ = crt_moment(
        LimitQuery(
            k=1,
            phi=lambda D, m: float(D[0, 1] <= args.R),
            sigma_sq=args.sigma_sq,
            R=args.R,
        ),
        method="grid",
        grid_step=1e-4,
    )
    u = args.R * math.sqrt(args.sigma_sq) / 2.0
    bias = 2.0 * u**2 / math.sqrt(2.0 * math.pi * args.l_max)
    print(f"# reference={want:.6g} predicted truncation bias ~{bias:.4g}")
    print(f"{'steps':>8} {'estimate':>12} {'stderr':>10} {'rel_error':>10}")
    final = None
    for j, n_steps in enumerate(sorted(args.steps)):
        est, err = donsker_crt_check(
            R=args.R,
            sigma_sq=args.sigma_sq,
            n_excursions=args.n_excursions,
            n_steps=n_steps,
            l_max=args.l_max,
            rng=args.seed + j,
        )
        final = abs(est - want) / want
        print(f"{n_steps:>8} {est:>12.6g} {err:>10.4g} {final:>10.4g}")
    if final > args.rel_gate:
        print(f"FAIL: finest-level rel error {final:.4g} > {args.rel_gate}", file=sys.stderr)
        return 3
    print(f"# finest-level rel error {final:.4g} within gate {args.rel_gate}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
