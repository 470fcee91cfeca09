"""Space-time controls, external sources, the cost functional and box projection."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import Grid, integrate


def _slab_index(t: float, slab_len: float, n_slabs: int) -> int:
    k = int(np.floor(t / slab_len + 1e-9))
    return min(max(k, 0), n_slabs - 1)


@dataclass(frozen=True)
class Control:
    """Box-constrained control, piecewise constant on ``n_slabs`` equal time slabs of [0, T].

    ``values`` has shape ``(n_slabs, *grid.shape)``. Bounds are scalars or
    arrays broadcastable to ``values``.
    """

    grid: Grid
    T: float
    values: np.ndarray
    u_min: float | np.ndarray = -np.inf
    u_max: float | np.ndarray = np.inf

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != self.grid.dim + 1 or v.shape[1:] != self.grid.shape:
            raise ValueError(
                f"control values need shape (n_slabs, *{self.grid.shape}), got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("control values must be finite")
        if not self.T > 0:
            raise ValueError(f"control horizon must be positive, got {self.T}")
        lo = np.broadcast_to(np.asarray(self.u_min, dtype=float), v.shape)
        hi = np.broadcast_to(np.asarray(self.u_max, dtype=float), v.shape)
        if np.any(lo > hi):
            raise ValueError("u_min must not exceed u_max anywhere")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid, T, value=0.0, n_slabs=1, u_min=-np.inf, u_max=np.inf):
        return cls(grid, T, np.full((n_slabs, *grid.shape), float(value)), u_min, u_max)

    @property
    def n_slabs(self) -> int:
        return self.values.shape[0]

    @property
    def slab_len(self) -> float:
        return self.T / self.n_slabs

    def slab_index(self, t: float) -> int:
        return _slab_index(t, self.slab_len, self.n_slabs)

    def sample(self, t: float) -> np.ndarray:
        return self.values[self.slab_index(t)]

    def with_values(self, values) -> "Control":
        return replace(self, values=np.asarray(values, dtype=float))

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """L2(Q) inner product of two slab-shaped arrays."""
        return float(np.sum(a * b) * self.grid.cell_volume * self.slab_len)

    def norm(self, a: np.ndarray | None = None) -> float:
        a = self.values if a is None else a
        return float(np.sqrt(self.inner(a, a)))

    def lower(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.u_min, dtype=float), self.values.shape)

    def upper(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.u_max, dtype=float), self.values.shape)

    def initial_guess(self) -> "Control":
        """Zero when feasible, else the box midpoint (unbounded sides clamp to zero)."""
        lo, hi = self.lower(), self.upper()
        if np.all(lo <= 0) and np.all(hi >= 0):
            return self.with_values(np.zeros_like(self.values))
        mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), np.clip(0.0, lo, hi))
        return self.with_values(mid)


@dataclass(frozen=True)
class DecaySource:
    """Source ``g(x) (1 + t)^-(3 + rho)`` with polynomial decay in time."""

    g: np.ndarray
    rho: float = 0.5

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"decay exponent offset rho must be positive, got {self.rho}")

    def sample(self, t: float) -> np.ndarray:
        return self.g * (1.0 + t) ** (-(3.0 + self.rho))

    def total_integral(self, grid: Grid, t0: float = 0.0) -> float:
        """Exact ∫_{t0}^∞ ∫_Ω u."""
        return integrate(grid, self.g) * (1.0 + t0) ** (-(2.0 + self.rho)) / (2.0 + self.rho)


def project_box(u: Control) -> Control:
    """Pointwise clamp of the control values onto [u_min, u_max]."""
    return u.with_values(np.clip(u.values, u.lower(), u.upper()))


def fonc_residual(u: Control, grad: np.ndarray) -> float:
    """‖u - Proj(u - grad)‖ in L2(Q); zero exactly at discrete stationary points."""
    proj = np.clip(u.values - grad, u.lower(), u.upper())
    return u.norm(u.values - proj)


WEIGHTS = ("beta_Q", "beta_Omega", "alpha_Q", "beta_S", "beta_u", "beta_T")


@dataclass(frozen=True)
class CostSpec:
    """Weights and targets of the tracking / treatment-time cost.

    Targets are scalars, fields, or node-sampled space-time arrays of shape
    ``(n_steps + 1, *grid.shape)``.
    """

    T: float
    beta_Q: float = 0.0
    beta_Omega: float = 0.0
    alpha_Q: float = 0.0
    beta_S: float = 0.0
    beta_u: float = 0.0
    beta_T: float = 0.0
    phi_Q: float | np.ndarray = 0.0
    phi_Omega: float | np.ndarray = 0.0
    sigma_Q: float | np.ndarray = 0.0

    def __post_init__(self):
        w = [getattr(self, k) for k in WEIGHTS]
        if any((not np.isfinite(x)) or x < 0 for x in w):
            raise ValueError(f"cost weights must be finite and nonnegative, got {w}")
        if not any(x > 0 for x in w):
            raise ValueError("at least one cost weight must be positive")
        if not self.T > 0:
            raise ValueError(f"final time T must be positive, got {self.T}")
        for name in ("phi_Q", "phi_Omega", "sigma_Q"):
            if not np.all(np.isfinite(np.asarray(getattr(self, name), dtype=float))):
                raise ValueError(f"target {name} must be finite")

    def scaled(self, c: float) -> "CostSpec":
        return replace(self, **{k: c * getattr(self, k) for k in WEIGHTS})


def target_at(target, n: int, dim: int) -> np.ndarray | float:
    a = np.asarray(target, dtype=float)
    if a.ndim == dim + 1:
        return a[n]
    return a


def tau_index(tau: float, dt: float, n_steps: int) -> int:
    k = int(round(tau / dt))
    if abs(k * dt - tau) > 1e-9 * max(1.0, abs(tau)) or not 0 <= k <= n_steps:
        raise ValueError(f"tau={tau} is not a node of the time grid (dt={dt}, {n_steps} steps)")
    return k


def cost_profile(traj, cost: CostSpec) -> np.ndarray:
    """J(u, s) for every time node s, from one stored trajectory.

    Time integrals use the left rectangle rule on the solver steps; the
    control term is exact for the slab-wise constant control.
    """
    grid = traj.grid
    dt = traj.dt
    N = traj.n_steps
    dim = grid.dim
    running = np.zeros(N + 1)
    terminal = np.zeros(N + 1)
    for n in range(N + 1):
        phi, sigma = traj.phi[n], traj.sigma[n]
        if n < N:
            r = 0.0
            if cost.beta_Q:
                r += 0.5 * cost.beta_Q * integrate(grid, (phi - target_at(cost.phi_Q, n, dim)) ** 2)
            if cost.alpha_Q:
                r += 0.5 * cost.alpha_Q * integrate(grid, (sigma - target_at(cost.sigma_Q, n, dim)) ** 2)
            running[n + 1] = r * dt
        t_val = 0.0
        if cost.beta_Omega:
            t_val += 0.5 * cost.beta_Omega * integrate(grid, (phi - cost.phi_Omega) ** 2)
        if cost.beta_S:
            t_val += 0.5 * cost.beta_S * integrate(grid, 1.0 + phi)
        terminal[n] = t_val
    u_term = 0.0
    if cost.beta_u:
        u_term = 0.5 * cost.beta_u * traj.control.inner(traj.control.values, traj.control.values)
    taus = dt * np.arange(N + 1)
    return np.cumsum(running) + terminal + u_term + cost.beta_T * taus


def evaluate_cost(traj, cost: CostSpec, tau: float) -> float:
    k = tau_index(tau, traj.dt, traj.n_steps)
    return float(cost_profile(traj, cost)[k])
