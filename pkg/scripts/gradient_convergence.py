"""Adjoint gradient against central differences of the discrete cost, for a
sequence of time steps and both adjoint discretizations."""
import argparse

import numpy as np

from chtumor.adjoint import reduced_gradient, solve_adjoint
from chtumor.control import Control, CostSpec, cost_profile
from chtumor.grid import Grid
from chtumor.model import ModelSpec
from chtumor.solver import SchemeParams, run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", type=int, default=32)
    ap.add_argument("--T", type=float, default=0.5)
    ap.add_argument("--dts", type=float, nargs="+", default=[4e-3, 2e-3, 1e-3, 5e-4])
    ap.add_argument("--directions", type=int, default=5)
    ap.add_argument("--eps", type=float, default=1e-4)
    args = ap.parse_args()

    L, T = 2 * np.pi, args.T
    g = Grid((args.cells,), (L,))
    x = g.centers(0)
    model = ModelSpec(proliferation="rational")
    phi0 = 0.8 + 0.1 * np.cos(np.pi * x / L)
    sigma0 = 0.3 + 0.1 * np.cos(2 * np.pi * x / L)
    u = Control(g, T, (0.5 + 0.2 * np.cos(np.pi * x / L)) * np.ones((10, 1)))
    cost = CostSpec(T, beta_Q=1.0, beta_Omega=1.0, alpha_Q=0.5, beta_S=0.3, beta_u=0.1, beta_T=0.1,
                    phi_Q=0.9, phi_Omega=0.7, sigma_Q=0.2)

    print("dt,mode,max_rel_error")
    for dt in args.dts:
        params = SchemeParams(dt, T)
        base = run(g, model, phi0, sigma0, u, params)
        dirs = [np.random.default_rng(d).normal(size=u.values.shape) for d in range(args.directions)]
        fds = []
        for h in dirs:
            Jp = cost_profile(run(g, model, phi0, sigma0, u.with_values(u.values + args.eps * h), params), cost)[-1]
            Jm = cost_profile(run(g, model, phi0, sigma0, u.with_values(u.values - args.eps * h), params), cost)[-1]
            fds.append((Jp - Jm) / (2 * args.eps))
        for mode in ("continuous", "discrete"):
            grad = reduced_gradient(base, solve_adjoint(base, cost, T, mode), cost, T).grad_u
            err = max(abs(u.inner(grad, h) - fd) / abs(fd) for h, fd in zip(dirs, fds))
            print(f"{dt:g},{mode},{err:.3e}")


if __name__ == "__main__":
    main()
