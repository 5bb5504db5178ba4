"""Weak rotation drift across a pendulum x rotator family.

For each member, solve the discrete weak KAM problem at c = (c_st, v/C~), follow a
calibrated curve and print the deviation of the weak rotation number from the
linear prediction B^T A^-1 rho_st + C~ c_wk.

Usage: python3 scripts/rotation_vectors.py [--mus 5 11 23] [--cst 0.3]
"""
import argparse

import numpy as np

from rkit.averaging import TrigPolynomial
from rkit.experiments import pendulum_potential
from rkit.lattice import OrderedBasis
from rkit.slowsys import ConvexModel, block_decomposition, slow_system_from_potentials
from rkit.weakkam import DiscreteActionConfig, calibrated_curve, rotation_number, solve_weak_kam


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mus", type=int, nargs="+", default=[5, 11, 23])
    ap.add_argument("--cst", type=float, default=0.3)
    ap.add_argument("--eps", type=float, default=0.25)
    ap.add_argument("--N", type=int, default=48)
    ap.add_argument("--h", type=float, default=0.2)
    ap.add_argument("--steps", type=int, default=3000)
    args = ap.parse_args()
    cfg = DiscreteActionConfig(h=args.h, N=args.N)
    # weak chord velocity on the discrete velocity lattice 1/(N h)
    v = 3 / (args.N * args.h)
    print(f"{'mu':>4} {'iters':>6} {'alpha':>12} {'rho_st':>10} {'rho_wk':>10} {'deviation':>10}")
    for mu in args.mus:
        B = OrderedBasis(((1, 0, 0), (0, mu, 1)), 1)
        uwk = TrigPolynomial.cosine([1, 1], 0.5 * mu**-3.0)
        sys = slow_system_from_potentials(ConvexModel(np.eye(2), 10.0), np.zeros(2), B,
                                          pendulum_potential(args.eps), [uwk])
        dec = block_decomposition(sys)
        c = np.array([args.cst, v / dec.Ctilde[0, 0]])
        u = solve_weak_kam(sys.lagrangian(), c, cfg)
        cur = calibrated_curve(u, sys.lagrangian(), c, [0.25, 0.25], args.steps, cfg)
        rho = rotation_number(cur, discard=args.steps // 3)
        dev = rho[1] - dec.BtAinv[0, 0] * rho[0] - dec.Ctilde[0, 0] * c[1]
        print(f"{mu:4d} {u.iterations:6d} {u.alpha:12.6f} {rho[0]:10.5f} {rho[1]:10.5f} {dev:10.5f}")


if __name__ == "__main__":
    main()
