"""Command line entry point: ``chtumor <command> --config FILE --out DIR [--seed N]``.

Exit codes: 0 success (including reports with converged=false), 2 invalid
configuration or input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .control import Control, CostSpec
from .grid import h1, l2
from .io import config_hash, read_csv, write_columns, write_csv, write_report, write_snapshot
from .solver import DIAG_COLUMNS, NumericalError, run

log = logging.getLogger("chtumor")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class Context:
    def __init__(self, cfg: RunConfig, out: Path, seed: int):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.hash = config_hash(cfg.effective(), seed)
        self.rng = np.random.default_rng(seed)

    def report(self, name: str, fields: dict):
        write_report(self.out / name, fields, self.hash)

    def initial(self):
        return self.cfg.initial_field("phi", self.rng), self.cfg.initial_field("sigma", self.rng)


def _snapshots(ctx: Context, grid, traj, every: int):
    d = ctx.out / "snapshots"
    d.mkdir(exist_ok=True)
    for i, step in enumerate(traj.steps):
        if every and step % every and i != len(traj.steps) - 1:
            continue
        for name in ("phi", "mu", "sigma"):
            write_snapshot(d / f"{name}_{int(step):08d}.pfc", grid, traj.times[i], getattr(traj, name)[i])


def cmd_simulate(ctx: Context):
    cfg = ctx.cfg
    grid, model, params = cfg.grid(), cfg.model(), cfg.scheme()
    phi0, sigma0 = ctx.initial()
    every = cfg["output.snapshot_every"]
    traj = run(grid, model, phi0, sigma0, cfg.control(), params, store_every=every or 10**12)
    d = traj.diag
    write_columns(ctx.out / "diagnostics.csv", {k: d[k] for k in DIAG_COLUMNS})
    _snapshots(ctx, grid, traj, every)
    m0 = abs(d["mass_phi"][0] + d["mass_sigma"][0])
    ledger = np.abs(d["mass_phi"] + d["mass_sigma"] - d["mass_total_predicted"]) / max(1.0, m0)
    ctx.report("report.txt", {
        "command": "simulate",
        "n_steps": traj.n_steps,
        "t_final": float(traj.times[-1]),
        "halvings": traj.halvings,
        "kappa": traj.kappa,
        "E_initial": d["E"][0],
        "E_final": d["E"][-1],
        "max_energy_increase": float(np.max(np.diff(d["E"]), initial=0.0)),
        "max_mass_ledger_error": float(np.max(ledger)),
        "sum_abs_energy_identity_residual": float(np.sum(np.abs(d["energy_identity_residual"]))),
    })


def _equilibrate(ctx: Context):
    from .longtime import run_to_equilibrium

    cfg = ctx.cfg
    grid, model, params = cfg.grid(), cfg.model(), cfg.scheme()
    phi0, sigma0 = ctx.initial()
    source = cfg.control()
    if isinstance(source, Control):
        raise ConfigError("equilibrate needs control.kind = zero or decay", cfg.lines.get("control.kind"), cfg.source)
    traj, rep = run_to_equilibrium(
        grid, model, phi0, sigma0, source, params,
        tol=cfg["equilibrate.tol"], residual_tol=cfg["equilibrate.residual_tol"],
        store_every=cfg["output.store_every"],
    )
    fin = traj.final
    dist_phi = np.array([h1(grid, p - fin.phi) for p in traj.phi])
    dist_sigma = np.array([l2(grid, s - fin.sigma) for s in traj.sigma])
    return grid, traj, rep, dist_phi, dist_sigma


def cmd_equilibrate(ctx: Context):
    grid, traj, rep, dist_phi, dist_sigma = _equilibrate(ctx)
    d = traj.diag
    rate = np.concatenate([[np.nan], traj.extra["rate"]])
    write_columns(ctx.out / "series.csv", {"step": d["step"], "t": d["t"], "E": d["E"], "A": d["A"], "rate": rate})
    write_columns(ctx.out / "distance.csv", {
        "step": traj.steps, "t": traj.times, "phi_h1": dist_phi, "sigma_l2": dist_sigma,
    })
    write_snapshot(ctx.out / "phi_inf.pfc", grid, traj.final.t, rep.phi_inf)
    write_snapshot(ctx.out / "sigma_inf.pfc", grid, traj.final.t, traj.final.sigma)
    fields = {k: v for k, v in vars(rep).items() if k != "phi_inf"}
    fields["m_limit"] = "none" if rep.m_limit is None else rep.m_limit
    ctx.report("report.txt", {"command": "equilibrate", **fields})


def cmd_decay_fit(ctx: Context):
    from .longtime import fit_decay_rate

    cfg = ctx.cfg
    src = cfg["decay_fit.source"]
    if src == "synthetic":
        t = np.linspace(0.0, cfg["decay_fit.t_max"], cfg["decay_fit.n"])
        y = cfg["decay_fit.C"] * (1.0 + t) ** (-cfg["decay_fit.lambda"])
    elif src == "file":
        try:
            _, data = read_csv(cfg._path(cfg["decay_fit.path"]))
        except (OSError, ValueError, IndexError) as exc:
            raise cfg.error("decay_fit.path", f"cannot read series: {exc}") from None
        t, y = data[:, 0], data[:, 1]
    elif src == "equilibrate":
        _, traj, _, dist_phi, _ = _equilibrate(ctx)
        keep = dist_phi > 0
        t, y = traj.times[keep], dist_phi[keep]
    else:
        raise cfg.error("decay_fit.source", f"unknown series source {src!r}")
    window = cfg["decay_fit.window"] or None
    if window is not None and len(window) != 2:
        raise cfg.error("decay_fit.window", "need two numbers t_a,t_b")
    fit = fit_decay_rate(t, y, window)
    write_columns(ctx.out / "series.csv", {"t": t, "value": y})
    ctx.report("report.txt", {"command": "decay-fit", "source": src, **vars(fit)})


def cmd_stability(ctx: Context):
    from .longtime import lyapunov_probe

    cfg = ctx.cfg
    grid, model = cfg.grid(), cfg.model()
    rep = lyapunov_probe(
        grid, model,
        np.full(grid.shape, cfg["stability.phi_star"]),
        np.full(grid.shape, cfg["stability.sigma_star"]),
        cfg["stability.eta"], cfg["stability.epsilon"], cfg["stability.horizon"],
        cfg["stability.n_probes"], ctx.seed, cfg["stability.dt"], cfg["stability.n_modes"],
    )
    write_csv(ctx.out / "probes.csv", ["probe", "sup_deviation"], list(enumerate(rep.per_probe)))
    fields = {k: v for k, v in vars(rep).items() if k != "per_probe"}
    ctx.report("report.txt", {"command": "stability", "n_probes": len(rep.per_probe), **fields})


def cmd_steady(ctx: Context):
    from .longtime import solve_nonlocal_elliptic
    from .model import upsilon

    cfg = ctx.cfg
    grid, model = cfg.grid(), cfg.model()
    m = cfg["steady.m"]
    phi_init = cfg.initial_field("phi", ctx.rng)
    res = solve_nonlocal_elliptic(grid, model, m, phi_init, cfg["steady.tol"], cfg["steady.max_iter"])
    write_snapshot(ctx.out / "phi.pfc", grid, 0.0, res.phi)
    write_columns(ctx.out / "upsilon.csv", {
        "iteration": np.arange(len(res.upsilon_history)), "upsilon": res.upsilon_history,
    })
    ctx.report("report.txt", {
        "command": "steady",
        "m": m,
        "residual": res.residual,
        "iterations": res.iterations,
        "converged": res.converged,
        "upsilon": upsilon(grid, model, res.phi, m),
        "phi_min": float(np.min(res.phi)),
        "phi_max": float(np.max(res.phi)),
        "phi_mean": float(np.mean(res.phi)),
        "constant_branch": float(np.cbrt(m)),
    })


def _control_problem(ctx: Context):
    cfg = ctx.cfg
    grid, model, params = cfg.grid(), cfg.model(), cfg.scheme()
    phi0, sigma0 = ctx.initial()
    u0 = cfg.control()
    if not isinstance(u0, Control):
        raise ConfigError("this command needs control.kind = slabs or file", cfg.lines.get("control.kind"), cfg.source)
    ref = {}

    def reference(key):
        if "traj" not in ref:
            ref["traj"] = run(grid, model, phi0, sigma0, u0, params)
        tr = ref["traj"]
        return {"cost.phi_Q": tr.phi, "cost.phi_Omega": tr.phi[-1], "cost.sigma_Q": tr.sigma}[key]

    return grid, model, params, phi0, sigma0, u0, reference


def cmd_optimize(ctx: Context):
    from .optimize import OptimizeOptions, optimize

    cfg = ctx.cfg
    grid, model, params, phi0, sigma0, u0, reference = _control_problem(ctx)
    cost = cfg.cost(reference)
    opts = cfg._build(
        ["optimize.gradient_mode", "optimize.control_basis"],
        lambda: OptimizeOptions(
            tol_u=cfg["optimize.tol_u"], max_iter=cfg["optimize.max_iter"],
            gradient_mode=cfg["optimize.gradient_mode"], control_basis=cfg["optimize.control_basis"],
            tol_tau=cfg["optimize.tol_tau"], tau0=cfg["optimize.tau0"], radius=cfg["control.radius"],
        ),
    )
    res = optimize(grid, model, cost, phi0, sigma0, u0, params, opts)
    write_columns(ctx.out / "J_history.csv", {
        "iteration": np.arange(len(res.J_history)), "J": res.J_history, "fonc_residual": res.fonc_history,
    })
    d = ctx.out / "u_star"
    d.mkdir(exist_ok=True)
    u = res.u_star
    for s in range(u.n_slabs):
        write_snapshot(d / f"u_{s:04d}.pfc", grid, s * u.slab_len, u.values[s])
    k = int(round(res.tau_star / res.trajectory.dt))
    write_snapshot(ctx.out / "phi_tau.pfc", grid, res.tau_star, res.trajectory.phi[k])
    ctx.report("report.txt", {
        "command": "optimize",
        "J": res.J,
        "tau_star": res.tau_star,
        "fonc_residual_u": res.fonc_residual_u,
        "dJ_dtau": res.dJ_dtau,
        "fonc_tau_classification": res.fonc_tau_classification,
        "fonc_tau_satisfied": res.fonc_tau_satisfied,
        "iterations": res.iterations,
        "converged": res.converged,
        "u_min": float(np.min(u.values)),
        "u_max": float(np.max(u.values)),
        "u_norm": u.norm(),
    })


def cmd_gradcheck(ctx: Context):
    from .adjoint import reduced_gradient, solve_adjoint
    from .control import evaluate_cost
    from .sensitivity import frechet_check

    cfg = ctx.cfg
    grid, model, params, phi0, sigma0, u0, reference = _control_problem(ctx)
    if any(cfg[f"cost.{w}"] for w in ("beta_Q", "beta_Omega", "alpha_Q", "beta_S", "beta_u", "beta_T")):
        cost = cfg.cost(reference)
    else:
        cost = CostSpec(params.t_end, beta_Q=1.0, beta_Omega=1.0, alpha_Q=1.0, beta_u=1.0)
    n_eps = cfg["gradcheck.n_eps"]
    if n_eps < 3 or not cfg["gradcheck.eps_max"] > cfg["gradcheck.eps_min"] > 0:
        raise cfg.error("gradcheck.n_eps", "need n_eps >= 3 and eps_max > eps_min > 0")
    eps = np.geomspace(cfg["gradcheck.eps_max"], cfg["gradcheck.eps_min"], n_eps)

    h = u0.with_values(ctx.rng.normal(size=u0.values.shape))
    h = h.with_values(h.values / h.norm())
    fr = frechet_check(grid, model, phi0, sigma0, u0, h, eps, params)
    write_columns(ctx.out / "frechet.csv", {"eps": fr.eps, "err": fr.err, "err_phi": fr.err_phi, "err_sigma": fr.err_sigma})

    tau = cfg["cost.tau"] if cfg["cost.tau"] is not None else params.t_end
    base = run(grid, model, phi0, sigma0, u0, params)
    grads = {
        mode: reduced_gradient(base, solve_adjoint(base, cost, tau, mode), cost, tau).grad_u
        for mode in ("continuous", "discrete")
    }
    rows = []
    fd_eps = 1e-5
    for i in range(cfg["gradcheck.n_directions"]):
        d = ctx.rng.normal(size=u0.values.shape)
        d /= u0.norm(d)
        jp = evaluate_cost(run(grid, model, phi0, sigma0, u0.with_values(u0.values + fd_eps * d), params), cost, tau)
        jm = evaluate_cost(run(grid, model, phi0, sigma0, u0.with_values(u0.values - fd_eps * d), params), cost, tau)
        fd = (jp - jm) / (2 * fd_eps)
        row = [i, fd_eps, fd]
        for g in grads.values():
            ad = u0.inner(g, d)
            row += [ad, abs(ad - fd) / max(abs(fd), 1e-300)]
        rows.append(row)
    write_csv(ctx.out / "adjoint.csv", [
        "direction", "eps", "fd", "adjoint_continuous", "rel_err_continuous", "adjoint_discrete", "rel_err_discrete",
    ], rows)
    ctx.report("report.txt", {
        "command": "gradcheck",
        "frechet_slope": fr.slope,
        "frechet_points_above_floor": fr.n_above_floor,
        "frechet_floor_eps": "none" if fr.floor_eps is None else fr.floor_eps,
        "tau": tau,
        "adjoint_max_rel_err_continuous": max((r[4] for r in rows), default=0.0),
        "adjoint_max_rel_err_discrete": max((r[6] for r in rows), default=0.0),
    })


COMMANDS = {
    "simulate": cmd_simulate,
    "equilibrate": cmd_equilibrate,
    "stability": cmd_stability,
    "steady": cmd_steady,
    "decay-fit": cmd_decay_fit,
    "optimize": cmd_optimize,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chtumor", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="key=value configuration file")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        seed = args.seed if args.seed is not None else cfg["seed"]
        if seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {seed}")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](Context(cfg, out, seed))
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
