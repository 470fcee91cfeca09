"""Linearized state equations and the Fréchet check of the control-to-state map."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import laplacian, spectral_solve
from .solver import SchemeParams, Trajectory, run


@dataclass
class LinearizedSeries:
    """(xi, eta, rho) at every node of the base trajectory."""

    times: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    rho: np.ndarray


def _require_complete(base: Trajectory):
    if not base.complete:
        raise ValueError("base trajectory must store every step (run with store_every=1)")
    return base.dt


def solve_linearized(base: Trajectory, h) -> LinearizedSeries:
    """Tangent of the discrete forward scheme in the direction ``h``.

    Coefficients are frozen at the stored base states; the scheme is the
    forward step with F'(phi) replaced by F''(phi_bar) xi and the reaction
    replaced by its linearization, so it is linear in (xi, rho, h).
    """
    grid, model = base.grid, base.model
    dt = _require_complete(base)
    if h is not None and hasattr(h, "grid") and h.grid != grid:
        raise ValueError("direction and trajectory live on different grids")
    nu = grid.eigenvalues
    kappa = base.kappa
    sym_phi = 1.0 / dt + nu * nu + kappa * nu
    sym_sigma = 1.0 / dt + nu
    N = base.n_steps
    xi = np.zeros((N + 1, *grid.shape))
    eta = np.zeros_like(xi)
    rho = np.zeros_like(xi)
    for n in range(N + 1):
        phi_b = base.phi[n]
        d2F = model.d2F(phi_b)
        eta[n] = -laplacian(grid, xi[n]) + d2F * xi[n]
        if n == N:
            break
        Rp = model.dP(phi_b) * (base.sigma[n] - base.mu[n]) * xi[n] + model.P(phi_b) * (
            rho[n] - eta[n]
        )
        rhs = xi[n] / dt + Rp + laplacian(grid, d2F * xi[n] - kappa * xi[n])
        xi[n + 1] = spectral_solve(grid, rhs, sym_phi)
        rhs = rho[n] / dt - Rp
        if h is not None:
            rhs = rhs + h.sample(n * dt)
        rho[n + 1] = spectral_solve(grid, rhs, sym_sigma)
    return LinearizedSeries(dt * np.arange(N + 1), xi, eta, rho)


def l2_space_time(grid, series: np.ndarray, dt: float) -> float:
    """Discrete L2(Q) norm over nodes 1..N (right rectangle rule)."""
    return float(np.sqrt(np.sum(series[1:] ** 2) * grid.cell_volume * dt))


@dataclass
class FrechetReport:
    eps: np.ndarray
    err: np.ndarray
    err_phi: np.ndarray
    err_sigma: np.ndarray
    slope: float  # log-log slope over the points above the floor
    n_above_floor: int
    floor_eps: float | None  # first epsilon at which the error stops shrinking


def fit_slope(eps: np.ndarray, err: np.ndarray, min_local: float = 0.5):
    """Slope of log(err) against log(eps) over the leading run above the floor.

    The run starts at the largest epsilon and stops at the first pair whose
    local slope drops below ``min_local``.
    """
    eps = np.asarray(eps, dtype=float)
    err = np.asarray(err, dtype=float)
    if np.all(err == 0):
        return 0.0, len(eps), None
    k = 1
    while k < len(eps):
        if err[k] <= 0 or err[k - 1] <= 0:
            break
        local = np.log(err[k - 1] / err[k]) / np.log(eps[k - 1] / eps[k])
        if local < min_local:
            break
        k += 1
    floor = float(eps[k]) if k < len(eps) else None
    if k < 2:
        return float("nan"), k, floor
    slope = np.polyfit(np.log(eps[:k]), np.log(err[:k]), 1)[0]
    return float(slope), k, floor


def frechet_check(grid, model, phi0, sigma0, u, h, epsilons, params: SchemeParams) -> FrechetReport:
    """Compare finite-difference state responses with the linearized solution."""
    eps = np.asarray(epsilons, dtype=float)
    if np.any(np.diff(eps) >= 0):
        raise ValueError("epsilons must be strictly decreasing")
    base = run(grid, model, phi0, sigma0, u, params)
    lin = solve_linearized(base, h)
    dt = base.dt
    ep, es = [], []
    for e in eps:
        pert = u.with_values(u.values + e * h.values)
        tr = run(grid, model, phi0, sigma0, pert, params)
        ep.append(l2_space_time(grid, (tr.phi - base.phi) / e - lin.xi, dt))
        es.append(l2_space_time(grid, (tr.sigma - base.sigma) / e - lin.rho, dt))
    ep, es = np.asarray(ep), np.asarray(es)
    err = ep + es
    slope, k, floor = fit_slope(eps, err)
    return FrechetReport(eps, err, ep, es, slope, k, floor)
