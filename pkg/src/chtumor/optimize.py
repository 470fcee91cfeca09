"""Block-coordinate descent on the reduced cost J(u, tau).

Each iteration takes one projected-gradient step in u with Armijo
backtracking at fixed tau, then moves tau to the best time node for the new
control. Both half-steps can only lower J, so the recorded history is
nonincreasing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .adjoint import MODES, dJ_dtau, reduced_gradient, solve_adjoint
from .control import Control, CostSpec, cost_profile, fonc_residual, project_box, tau_index
from .grid import Grid
from .model import ModelSpec
from .solver import SchemeParams, Trajectory, run

log = logging.getLogger(__name__)

TAU_LABELS = {"start": ">=0 at 0", "interior": "~0 interior", "end": "<=0 at T"}


@dataclass(frozen=True)
class OptimizeOptions:
    tol_u: float = 1e-8
    max_iter: int = 200
    gradient_mode: str = "discrete"
    control_basis: str = "field"  # "field" | "uniform" (spatially constant per slab)
    tol_tau: float = 1e-6
    armijo_c: float = 1e-4
    step0: float = 1.0
    shrink: float = 0.5
    max_backtracks: int = 50
    radius: float | None = None  # optional sanity bound on ‖u‖_{L2(Q)}
    tau0: float | None = None  # treatment time for the first u-step; None: best node

    def __post_init__(self):
        if self.gradient_mode not in MODES:
            raise ValueError(f"gradient_mode must be one of {MODES}")
        if self.control_basis not in ("field", "uniform"):
            raise ValueError("control_basis must be 'field' or 'uniform'")
        if not (0 < self.shrink < 1 and self.armijo_c > 0 and self.step0 > 0):
            raise ValueError("invalid Armijo parameters")


@dataclass
class OptimizeResult:
    u_star: Control
    tau_star: float
    J: float
    J_history: np.ndarray
    fonc_history: np.ndarray
    fonc_residual_u: float
    dJ_dtau: float
    fonc_tau_classification: str
    fonc_tau_satisfied: bool
    iterations: int
    converged: bool
    trajectory: Trajectory = field(repr=False)


def _basis_projection(grad: np.ndarray, basis: str) -> np.ndarray:
    if basis == "field":
        return grad
    axes = tuple(range(1, grad.ndim))
    return np.broadcast_to(grad.mean(axis=axes, keepdims=True), grad.shape).copy()


def classify_tau(k: int, n_steps: int, d: float, tol: float) -> tuple[str, bool]:
    """Sign condition on dJ/dtau: >= 0 at tau=0, ~0 inside, <= 0 at tau=T."""
    if k == 0:
        return TAU_LABELS["start"], d >= -tol
    if k == n_steps:
        return TAU_LABELS["end"], d <= tol
    return TAU_LABELS["interior"], abs(d) <= tol


def optimize(
    grid: Grid,
    model: ModelSpec,
    cost: CostSpec,
    phi0,
    sigma0,
    control0: Control,
    params: SchemeParams,
    opts: OptimizeOptions = OptimizeOptions(),
) -> OptimizeResult:
    """Projected gradient in u with Armijo backtracking, exact node search in tau.

    ``control0`` carries the slab layout and box bounds; its values are the
    starting iterate after projection. At tau = 0 the u-gradient carries no
    state information, so a start there can stall at a trivial stationary
    point; ``opts.tau0`` fixes the treatment time for the first step. Stops when the FONC residual is at most
    ``tol_u`` and the last tau search left tau unchanged.
    """
    if abs(params.t_end - cost.T) > 1e-12 * cost.T or abs(control0.T - cost.T) > 1e-12 * cost.T:
        raise ValueError("scheme t_end, control horizon and cost T must agree")
    if control0.grid != grid:
        raise ValueError("control lives on a different grid")
    u = project_box(control0)
    if opts.control_basis == "uniform":
        u = u.with_values(_basis_projection(u.values, "uniform"))
        u = project_box(u)
    if opts.radius is not None and u.norm() > opts.radius:
        raise ValueError(f"initial control exceeds the L2(Q) radius {opts.radius}")

    def forward(ctrl):
        tr = run(grid, model, phi0, sigma0, ctrl, params)
        return tr, cost_profile(tr, cost)

    traj, prof = forward(u)
    dt = traj.dt
    if opts.tau0 is None:
        k = int(np.argmin(prof))
    else:
        k = tau_index(opts.tau0, dt, traj.n_steps)
    J = float(prof[k])
    J_hist = [J]
    fonc_hist = []
    tau_moved = opts.tau0 is not None
    converged = False
    it = 0
    res = np.inf
    while True:
        tau = k * dt
        adj = solve_adjoint(traj, cost, tau, opts.gradient_mode)
        grad = _basis_projection(reduced_gradient(traj, adj, cost, tau).grad_u, opts.control_basis)
        res = fonc_residual(u, grad)
        fonc_hist.append(res)
        if res <= opts.tol_u and not tau_moved:
            converged = True
            break
        if it >= opts.max_iter:
            break
        it += 1
        alpha = opts.step0
        accepted = False
        for _ in range(opts.max_backtracks):
            trial = project_box(u.with_values(u.values - alpha * grad))
            diff = trial.values - u.values
            dist2 = u.inner(diff, diff)
            if dist2 == 0.0:
                break
            tr, pr = forward(trial)
            if pr[k] <= J - opts.armijo_c / alpha * dist2:
                accepted = True
                break
            alpha *= opts.shrink
        if not accepted:
            # no representable descent step left at this tau
            log.info("line search stalled at iteration %d (fonc %.3e)", it, res)
            converged = res <= opts.tol_u
            break
        u, traj, prof = trial, tr, pr
        k_new = int(np.argmin(prof))
        tau_moved = k_new != k
        k = k_new
        J = float(prof[k])
        J_hist.append(J)
        log.debug("iter %d: J=%.12g tau=%g fonc=%.3e alpha=%g", it, J, k * dt, res, alpha)

    d = dJ_dtau(traj, cost, k * dt)
    label, ok = classify_tau(k, traj.n_steps, d, opts.tol_tau)
    return OptimizeResult(
        u_star=u,
        tau_star=k * dt,
        J=J,
        J_history=np.asarray(J_hist),
        fonc_history=np.asarray(fonc_hist),
        fonc_residual_u=float(res),
        dJ_dtau=float(d),
        fonc_tau_classification=label,
        fonc_tau_satisfied=bool(ok),
        iterations=it,
        converged=converged,
        trajectory=traj,
    )


def brute_force(
    grid: Grid,
    model: ModelSpec,
    cost: CostSpec,
    phi0,
    sigma0,
    control0: Control,
    params: SchemeParams,
    levels,
) -> tuple[float, np.ndarray, float]:
    """Exhaustive minimum of J over spatially constant slab controls drawn from
    ``levels`` and all tau nodes. Returns (J, slab levels, tau)."""
    import itertools

    levels = np.asarray(levels, dtype=float)
    best = (np.inf, None, 0.0)
    shape = (1,) * grid.dim
    for combo in itertools.product(levels, repeat=control0.n_slabs):
        vals = np.broadcast_to(np.asarray(combo).reshape(-1, *shape), control0.values.shape)
        ctrl = control0.with_values(vals)
        tr = run(grid, model, phi0, sigma0, ctrl, params)
        prof = cost_profile(tr, cost)
        k = int(np.argmin(prof))
        if prof[k] < best[0]:
            best = (float(prof[k]), np.asarray(combo), k * tr.dt)
    return best
