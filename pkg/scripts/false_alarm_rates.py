"""Empirical false-alarm rates of two fixed-tolerance checks under the null.

The SL(n)-image check compares two independent estimates of the same constant
at a 2-SE tolerance; the 1-symmetry check takes the max of many shared-stream
deviations at 3 SE.  Both fire at a nonzero rate even when the code is right;
this script measures that rate over independent replications.

    python scripts/false_alarm_rates.py [--reps 200] [--sym-reps 40]
"""
import argparse

import numpy as np

from isonorm import multinorm as mn
from isonorm.bodies import Cube, PBall
from isonorm.isotropy import sl_invariance_check
from isonorm.positioning import sl_matrix
from isonorm.rng import RngStream


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--sym-reps", type=int, default=40)
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args()
    root = RngStream(args.seed)

    z = []
    for r in range(args.reps):
        T = sl_matrix(0.5 * root.child(0, r).generator().standard_normal(3), 2)
        z.append(sl_invariance_check(Cube(2), T, root.child(1, r), 50_000).value)
    z = np.asarray(z)
    print(f"SL image: rms z {np.sqrt(np.mean(z ** 2)):.3f}, "
          f"P(z > 2) {np.mean(z > 2):.3f}  (normal: 0.046)")

    ctx = mn.MultiNormContext.build(Cube(2), PBall(2, 1), root.child(2))
    worst = np.array([mn.symmetry_check(ctx, 8, 50, root.child(3, r), 20_000).value
                      for r in range(args.sym_reps)])
    print(f"1-symmetry: P(max of 50 > 3) {np.mean(worst > 3):.3f} over {args.sym_reps} reps")


if __name__ == "__main__":
    main()
