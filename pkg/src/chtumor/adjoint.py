"""Backward adjoint solve and the reduced gradient in (u, tau).

Two time discretizations of the adjoint system are available.

``"continuous"`` discretizes the adjoint equations directly: each backward
step treats Δ²p and -Δr implicitly and evaluates every coupling at the
already-computed level n+1,
with coefficients and tracking data from the stored state at level n. The
control on step n is paired with r at level n+1, where the forward scheme
injects it. The gradient differs from that of the discrete cost by O(dt).

``"discrete"`` swaps the order inside a step (implicit solve first, then the
explicit couplings). That ordering is exactly the transpose of the forward
scheme, so the gradient matches finite differences of the discrete cost to
rounding. The optimizer uses it by default.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import Control, CostSpec, target_at, tau_index
from .grid import integrate, laplacian, spectral_solve
from .solver import Trajectory

MODES = ("continuous", "discrete")


@dataclass
class AdjointSeries:
    """p, q, r at levels 0..k_tau plus the r used for each step's gradient."""

    tau: float
    k_tau: int
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray
    r_step: np.ndarray  # shape (k_tau, *grid.shape)
    mode: str


@dataclass
class ReducedGradient:
    grad_u: np.ndarray  # slab-shaped L2(Q) gradient
    per_step: np.ndarray  # beta_u u^n + r 1_[0,tau], one field per solver step
    dJ_dtau: float


def solve_adjoint(base: Trajectory, cost: CostSpec, tau: float, mode: str = "continuous") -> AdjointSeries:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not base.complete:
        raise ValueError("base trajectory must store every step (run with store_every=1)")
    grid, model = base.grid, base.model
    dt = base.dt
    k = tau_index(tau, dt, base.n_steps)
    dim = grid.dim
    nu = grid.eigenvalues
    kappa = base.kappa
    if mode == "discrete":
        # transpose of the forward step, including its kappa split
        sym_p = 1.0 + dt * (nu * nu + kappa * nu)
    else:
        sym_p = 1.0 + dt * nu * nu
        kappa = 0.0
    sym_r = 1.0 + dt * nu

    p = np.zeros((k + 1, *grid.shape))
    r = np.zeros_like(p)
    q = np.zeros_like(p)
    r_step = np.zeros((k, *grid.shape))
    p[k] = cost.beta_Omega * (base.phi[k] - cost.phi_Omega) + 0.5 * cost.beta_S

    for n in range(k - 1, -1, -1):
        phi_b, sig_b, mu_b = base.phi[n], base.sigma[n], base.mu[n]
        P = model.P(phi_b)
        src_p = cost.beta_Q * (phi_b - target_at(cost.phi_Q, n, dim)) if cost.beta_Q else 0.0
        src_r = cost.alpha_Q * (sig_b - target_at(cost.sigma_Q, n, dim)) if cost.alpha_Q else 0.0
        if mode == "discrete":
            pp = spectral_solve(grid, p[n + 1], sym_p)
            rr = spectral_solve(grid, r[n + 1], sym_r)
        else:
            pp, rr = p[n + 1], r[n + 1]
        diff = pp - rr
        qq = laplacian(grid, pp) - P * diff
        coupling_p = (
            src_p
            + model.d2F(phi_b) * qq
            + model.dP(phi_b) * (sig_b - mu_b) * diff
            + laplacian(grid, P * diff)
            - kappa * laplacian(grid, pp)
        )
        coupling_r = src_r + P * diff
        if mode == "discrete":
            p[n] = pp + dt * coupling_p
            r[n] = rr + dt * coupling_r
            r_step[n] = rr
        else:
            p[n] = spectral_solve(grid, pp + dt * coupling_p, sym_p)
            r[n] = spectral_solve(grid, rr + dt * coupling_r, sym_r)
            # u^n enters the sigma equation at level n+1, so it pairs with r^{n+1}
            r_step[n] = r[n + 1]
    for n in range(k + 1):
        q[n] = laplacian(grid, p[n]) - model.P(base.phi[n]) * (p[n] - r[n])
    return AdjointSeries(float(tau), k, p, q, r, r_step, mode)


def dJ_dtau(base: Trajectory, cost: CostSpec, tau: float) -> float:
    """Derivative of the reduced cost in the treatment time, with a discrete phi_t."""
    grid = base.grid
    dt = base.dt
    k = tau_index(tau, dt, base.n_steps)
    dim = grid.dim
    if k > 0:
        phi_t = (base.phi[k] - base.phi[k - 1]) / dt
    elif base.n_steps > 0:
        phi_t = (base.phi[1] - base.phi[0]) / dt
    else:
        phi_t = np.zeros(grid.shape)
    phi, sigma = base.phi[k], base.sigma[k]
    val = cost.beta_T
    if cost.beta_Q:
        val += 0.5 * cost.beta_Q * integrate(grid, (phi - target_at(cost.phi_Q, k, dim)) ** 2)
    if cost.beta_Omega:
        val += cost.beta_Omega * integrate(grid, (phi - cost.phi_Omega) * phi_t)
    if cost.alpha_Q:
        val += 0.5 * cost.alpha_Q * integrate(grid, (sigma - target_at(cost.sigma_Q, k, dim)) ** 2)
    if cost.beta_S:
        val += 0.5 * cost.beta_S * integrate(grid, phi_t)
    return float(val)


def reduced_gradient(base: Trajectory, adj: AdjointSeries, cost: CostSpec, tau: float) -> ReducedGradient:
    """Gradient beta_u u + r 1_[0,tau] per step, averaged onto the control slabs."""
    u: Control = base.control
    if not isinstance(u, Control):
        raise TypeError("reduced_gradient needs the trajectory to carry a Control")
    dt = base.dt
    N = base.n_steps
    grid = base.grid
    per_step = np.zeros((N, *grid.shape))
    slab_of = np.array([u.slab_index(n * dt) for n in range(N)])
    per_step[: adj.k_tau] = adj.r_step
    slab_r = np.zeros_like(u.values)
    np.add.at(slab_r, slab_of, per_step * dt)
    slab_r /= u.slab_len
    per_step += cost.beta_u * u.values[slab_of]
    grad = cost.beta_u * u.values + slab_r
    return ReducedGradient(grad, per_step, dJ_dtau(base, cost, tau))
