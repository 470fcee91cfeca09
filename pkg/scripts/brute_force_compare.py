"""Optimizer against exhaustive search over slab levels and treatment times."""
import argparse

import numpy as np

from chtumor.control import Control, CostSpec
from chtumor.grid import Grid
from chtumor.model import ModelSpec
from chtumor.optimize import OptimizeOptions, brute_force, optimize
from chtumor.solver import SchemeParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--slabs", type=int, default=4)
    ap.add_argument("--levels", type=int, default=5)
    ap.add_argument("--beta-T", type=float, nargs="+", default=[0.05, 0.2])
    args = ap.parse_args()

    g = Grid((8,), (2 * np.pi,))
    params = SchemeParams(0.05, 1.0)
    u0 = Control.constant(g, 1.0, 0.0, args.slabs, -2.0, 2.0)
    phi0, sig0 = 0.3 * np.cos(g.centers(0)), np.full(8, -0.5)
    levels = np.linspace(-2.0, 2.0, args.levels)
    for beta_T in args.beta_T:
        cost = CostSpec(1.0, beta_S=1.0, beta_T=beta_T)
        J_bf, combo, tau_bf = brute_force(g, ModelSpec(), cost, phi0, sig0, u0, params, levels)
        res = optimize(g, ModelSpec(), cost, phi0, sig0, u0, params,
                       OptimizeOptions(control_basis="uniform", tau0=0.5, tol_u=1e-10))
        slabs = res.u_star.values.mean(axis=1)
        print(f"beta_T={beta_T}: brute force J={J_bf:.12g} levels={combo} tau={tau_bf:g}")
        print(f"           optimizer   J={res.J:.12g} levels={np.round(slabs, 6)} tau={res.tau_star:g} "
              f"fonc={res.fonc_residual_u:.1e} tau-condition {res.fonc_tau_classification} "
              f"({'holds' if res.fonc_tau_satisfied else 'violated'})")


if __name__ == "__main__":
    main()
