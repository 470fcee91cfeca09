"""Stabilized linearly implicit time stepping for the tumor growth system.

One step from (phi^n, sigma^n) with source u^n, writing nu for the eigenvalues
of -Δ_h, R = P(phi^n)(sigma^n - mu^n) and g = F'(phi^n):

    phi^{n+1}   = [phi^n/dt + R + Δ_h g - kappa Δ_h phi^n] / (1/dt + nu^2 + kappa nu)
    sigma^{n+1} = [sigma^n/dt - R + u^n] / (1/dt + nu)

and mu^{n+1} = -Δ_h phi^{n+1} + F'(phi^{n+1}). The zero mode of both updates
adds dt * ∫u to ∫(phi + sigma) and nothing else, so the total-mass ledger
holds to rounding.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid, grad_sq, integrate, laplacian, spectral_solve
from .model import ModelSpec, energy_total

log = logging.getLogger(__name__)

DIAG_COLUMNS = (
    "step",
    "t",
    "E",
    "mass_phi",
    "mass_sigma",
    "mass_total_predicted",
    "A",
    "energy_identity_residual",
    "source_work",
)


class NumericalError(RuntimeError):
    """A time step produced non-finite values."""


@dataclass(frozen=True)
class SchemeParams:
    dt: float
    t_end: float
    kappa: float | None = None  # None: max F'' on [-1.5, 1.5]
    adapt: str = "off"  # "off" | "halve"
    max_steps: int = 10**7
    max_halvings: int = 20

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.kappa is not None and self.kappa < 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if self.adapt not in ("off", "halve"):
            raise ValueError(f"adapt must be 'off' or 'halve', got {self.adapt!r}")

    def kappa_for(self, model: ModelSpec) -> float:
        return model.max_d2F() if self.kappa is None else float(self.kappa)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class State:
    phi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    t: float = 0.0
    # running means of phi and sigma as (hi, lo) pairs; None: read from the fields
    means: tuple | None = None


@dataclass
class Trajectory:
    """Strided state snapshots plus per-step diagnostics of one run."""

    grid: Grid
    model: ModelSpec
    params: SchemeParams
    kappa: float
    control: object
    steps: np.ndarray  # step index of every stored snapshot
    times: np.ndarray
    phi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    diag: dict[str, np.ndarray]
    dts: np.ndarray
    stopped_early: bool = False
    halvings: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.dts)

    @property
    def complete(self) -> bool:
        """Every step stored, so coefficients are available at every level."""
        return len(self.steps) == self.n_steps + 1

    @property
    def dt(self) -> float:
        if self.n_steps == 0:
            return self.params.dt
        if not np.allclose(self.dts, self.dts[0], rtol=1e-12, atol=0):
            raise ValueError("trajectory has a variable time step")
        return float(self.dts[0])

    def state(self, i: int) -> State:
        return State(self.phi[i], self.mu[i], self.sigma[i], float(self.times[i]))

    @property
    def final(self) -> State:
        return self.state(-1)


def compute_mu(grid: Grid, model: ModelSpec, phi: np.ndarray) -> np.ndarray:
    return -laplacian(grid, phi) + model.dF(phi)


def reaction(model: ModelSpec, phi, sigma, mu) -> np.ndarray:
    return model.P(phi) * (sigma - mu)


def make_state(grid: Grid, model: ModelSpec, phi, sigma, t: float = 0.0) -> State:
    phi = grid.check(phi, "phi")
    sigma = grid.check(sigma, "sigma")
    return State(phi, compute_mu(grid, model, phi), sigma, t)


def dissipation(grid: Grid, model: ModelSpec, state: State) -> float:
    """‖∇μ‖² + ‖∇σ‖² + ∫P(φ)(μ-σ)²."""
    d = state.mu - state.sigma
    return (
        grad_sq(grid, state.mu)
        + grad_sq(grid, state.sigma)
        + integrate(grid, model.P(state.phi) * d * d)
    )


def _two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _carry(mean_pair: tuple[float, float], incr: float) -> tuple[float, float]:
    hi, lo = _two_sum(mean_pair[0], incr)
    return _two_sum(hi, lo + mean_pair[1])


def _pin_mean(x: np.ndarray, target: tuple[float, float]) -> np.ndarray:
    x = x + target[0]
    return x + ((target[0] - np.mean(x)) + target[1])


def _zero_mean_solve(grid: Grid, rhs: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    c = grid.forward(rhs)
    c.flat[0] = 0.0
    x = grid.inverse(c / symbol)
    return x - np.mean(x)


def step(
    grid: Grid, model: ModelSpec, state: State, u: np.ndarray | None, dt: float, kappa: float
) -> State:
    """Advance one step of size ``dt``; raises NumericalError on blow-up."""
    phi, sigma = state.phi, state.sigma
    nu = grid.eigenvalues
    R = reaction(model, phi, sigma, state.mu)
    g = model.dF(phi)
    rhs_phi = phi / dt + R + laplacian(grid, g - kappa * phi)
    rhs_sigma = sigma / dt - R
    if u is not None:
        rhs_sigma = rhs_sigma + u
    # zero modes updated in physical space; the means are carried in double-double
    # so rounding does not accumulate in the mass ledger
    m_phi, m_sigma = state.means or ((float(np.mean(phi)), 0.0), (float(np.mean(sigma)), 0.0))
    mR = float(np.mean(R))
    m_phi = _carry(m_phi, dt * mR)
    m_sigma = _carry(m_sigma, -dt * mR)
    if u is not None:
        m_sigma = _carry(m_sigma, dt * float(np.mean(u)))
    phi_new = _pin_mean(_zero_mean_solve(grid, rhs_phi, 1.0 / dt + nu * nu + kappa * nu), m_phi)
    sigma_new = _pin_mean(_zero_mean_solve(grid, rhs_sigma, 1.0 / dt + nu), m_sigma)
    if not (np.all(np.isfinite(phi_new)) and np.all(np.isfinite(sigma_new))):
        raise NumericalError(
            f"non-finite update at t={state.t:.6g} (dt={dt:.3g}, "
            f"max|phi|={np.max(np.abs(phi)):.3g}, max|sigma|={np.max(np.abs(sigma)):.3g})"
        )
    return State(phi_new, compute_mu(grid, model, phi_new), sigma_new, state.t + dt, (m_phi, m_sigma))


def _sample(source, t: float, grid: Grid) -> np.ndarray | None:
    if source is None:
        return None
    u = np.asarray(source.sample(t), dtype=float)
    if u.shape != grid.shape:
        u = np.broadcast_to(u, grid.shape)
    return u


def run(
    grid: Grid,
    model: ModelSpec,
    phi0: np.ndarray,
    sigma0: np.ndarray,
    source,
    params: SchemeParams,
    store_every: int = 1,
    until: Callable[[State, State, float], bool] | None = None,
) -> Trajectory:
    """March from the initial data to ``params.t_end``.

    ``source`` is ``None`` (u = 0) or any object with ``sample(t) -> field``.
    ``until(old, new, dt)`` may stop the run early after an accepted step.
    Diagnostics are recorded at every step; states every ``store_every``
    steps and at the final step.
    """
    if store_every < 1:
        raise ValueError("store_every must be >= 1")
    kappa = params.kappa_for(model)
    state = make_state(grid, model, phi0, sigma0, 0.0)

    rows = {k: [] for k in DIAG_COLUMNS}
    snaps = {"steps": [], "times": [], "phi": [], "mu": [], "sigma": []}
    dts: list[float] = []

    def record_state(n, s):
        snaps["steps"].append(n)
        snaps["times"].append(s.t)
        snaps["phi"].append(s.phi)
        snaps["mu"].append(s.mu)
        snaps["sigma"].append(s.sigma)

    E = energy_total(grid, model, state.phi, state.sigma)
    A = dissipation(grid, model, state)
    mass_pred = integrate(grid, state.phi) + integrate(grid, state.sigma)
    mass_pair = (mass_pred, 0.0)
    u = _sample(source, 0.0, grid)
    work = integrate(grid, u * state.sigma) if u is not None else 0.0

    def record_diag(n, s, E, A, resid, work):
        rows["step"].append(n)
        rows["t"].append(s.t)
        rows["E"].append(E)
        rows["mass_phi"].append(integrate(grid, s.phi))
        rows["mass_sigma"].append(integrate(grid, s.sigma))
        rows["mass_total_predicted"].append(mass_pred)
        rows["A"].append(A)
        rows["energy_identity_residual"].append(resid)
        rows["source_work"].append(work)

    record_diag(0, state, E, A, 0.0, work)
    record_state(0, state)

    dt = params.dt
    n = 0
    halvings = 0
    stopped = False
    t_end = params.t_end
    while n < params.max_steps and state.t < t_end * (1 - 1e-12):
        h = min(dt, t_end - state.t)
        if h < 1e-9 * dt:
            # the remaining sliver is rounding noise from accumulated times
            break
        new = step(grid, model, state, u, h, kappa)
        if halvings == 0 and h == params.dt:
            # fixed-step runs keep node times exact multiples of dt
            new = State(new.phi, new.mu, new.sigma, (n + 1) * params.dt, new.means)
        E_new = energy_total(grid, model, new.phi, new.sigma)
        zero_source = u is None or not np.any(u)
        if params.adapt == "halve" and zero_source and E_new > E + 1e-10:
            if halvings < params.max_halvings:
                halvings += 1
                dt = 0.5 * dt
                log.debug("energy rose by %.3e at t=%.6g; dt -> %.3g", E_new - E, state.t, dt)
                continue
            log.warning("energy rise persists after %d halvings at t=%.6g", halvings, state.t)
        if u is not None:
            mass_pair = _carry(mass_pair, h * integrate(grid, u))
            mass_pred = mass_pair[0] + mass_pair[1]
        A_new = dissipation(grid, model, new)
        resid = (E_new - E) + h * A - h * work
        n += 1
        dts.append(h)
        u_next = _sample(source, new.t, grid)
        work_new = integrate(grid, u_next * new.sigma) if u_next is not None else 0.0
        record_diag(n, new, E_new, A_new, resid, work_new)
        old = state
        state, E, A, u, work = new, E_new, A_new, u_next, work_new
        done = until is not None and until(old, new, h)
        last = done or n >= params.max_steps or state.t >= t_end * (1 - 1e-12)
        if n % store_every == 0 or last:
            record_state(n, state)
        if done:
            stopped = True
            break

    diag = {k: np.asarray(v, dtype=float) for k, v in rows.items()}
    diag["step"] = diag["step"].astype(np.int64)
    return Trajectory(
        grid=grid,
        model=model,
        params=params,
        kappa=kappa,
        control=source,
        steps=np.asarray(snaps["steps"]),
        times=np.asarray(snaps["times"]),
        phi=np.stack(snaps["phi"]),
        mu=np.stack(snaps["mu"]),
        sigma=np.stack(snaps["sigma"]),
        diag=diag,
        dts=np.asarray(dts),
        stopped_early=stopped,
        halvings=halvings,
    )
