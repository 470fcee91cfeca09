"""Equilibria, decay rates, Łojasiewicz regression, the nonlocal steady problem
and Lyapunov stability probes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, h1, h1_dual, inner, l2, laplacian, mean, spectral_solve
from .model import ModelSpec, upsilon, upsilon_change
from .solver import SchemeParams, State, Trajectory, compute_mu, run


# ---------------------------------------------------------------------------
# convergence to equilibrium


@dataclass
class EquilibriumReport:
    phi_inf: np.ndarray
    sigma_inf_mean: float
    sigma_inf_std: float
    mu_inf_mean: float
    residual_stationary: float  # ‖-Δφ + F'(φ) - μ̄‖
    relation_gap: float  # |σ̄ - μ̄|
    stamu_gap: float  # |μ̄ - mean F'(φ)|
    reaction_residual: float  # ‖P(φ)(σ - μ)‖
    m_inf: float  # measured mean of φ + σ at the stopping time
    m_ledger: float  # mean total mass predicted by the source ledger
    m_limit: float | None  # ledger value plus the exact source tail to t = ∞
    rate: float  # last value of the stopping metric
    t_stop: float
    stopped: bool
    converged: bool


def equilibrium_report(
    grid: Grid,
    model: ModelSpec,
    state: State,
    m_ledger: float,
    m_limit: float | None = None,
    rate: float = float("nan"),
    stopped: bool = True,
    residual_tol: float = 1e-6,
) -> EquilibriumReport:
    phi, sigma = state.phi, state.sigma
    mu = compute_mu(grid, model, phi)
    mu_bar = mean(grid, mu)
    sig_bar = mean(grid, sigma)
    rep = EquilibriumReport(
        phi_inf=phi,
        sigma_inf_mean=sig_bar,
        sigma_inf_std=float(np.sqrt(mean(grid, (sigma - sig_bar) ** 2))),
        mu_inf_mean=mu_bar,
        residual_stationary=l2(grid, -laplacian(grid, phi) + model.dF(phi) - mu_bar),
        relation_gap=abs(sig_bar - mu_bar),
        stamu_gap=abs(mu_bar - mean(grid, model.dF(phi))),
        reaction_residual=l2(grid, model.P(phi) * (sigma - mu)),
        m_inf=mean(grid, phi + sigma),
        m_ledger=m_ledger,
        m_limit=m_limit,
        rate=rate,
        t_stop=state.t,
        stopped=stopped,
        converged=False,
    )
    rep.converged = stopped and max(
        rep.residual_stationary, rep.relation_gap, rep.stamu_gap, rep.reaction_residual
    ) <= residual_tol
    return rep


def rate_metric(grid: Grid, old: State, new: State, dt: float) -> float:
    return h1_dual(grid, new.phi - old.phi) / dt + l2(grid, new.sigma - old.sigma) / dt


def run_to_equilibrium(
    grid: Grid,
    model: ModelSpec,
    phi0,
    sigma0,
    source,
    params: SchemeParams,
    tol: float = 1e-9,
    residual_tol: float = 1e-6,
    store_every: int = 100,
) -> tuple[Trajectory, EquilibriumReport]:
    """Integrate until the time-derivative metric drops below ``tol``.

    Running out of steps or time is not an error: the report then carries
    ``converged=False``.
    """
    rates: list[float] = []

    def until(old, new, dt):
        rates.append(rate_metric(grid, old, new, dt))
        return rates[-1] <= tol

    traj = run(grid, model, phi0, sigma0, source, params, store_every=store_every, until=until)
    traj.extra["rate"] = np.asarray(rates)
    m_ledger = traj.diag["mass_total_predicted"][-1] / grid.measure
    m_limit = None
    if source is None:
        m_limit = m_ledger
    elif hasattr(source, "total_integral"):
        m_limit = m_ledger + source.total_integral(grid, traj.final.t) / grid.measure
    report = equilibrium_report(
        grid,
        model,
        traj.final,
        m_ledger,
        m_limit,
        rates[-1] if rates else 0.0,
        stopped=traj.stopped_early or (bool(rates) and rates[-1] <= tol) or not rates,
        residual_tol=residual_tol,
    )
    return traj, report


# ---------------------------------------------------------------------------
# decay rates


@dataclass
class DecayFit:
    exponent: float
    prefactor: float
    window: tuple[float, float]
    r2: float
    n_samples: int
    superpolynomial: bool


def _r2(y, yhat):
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def fit_decay_rate(t, values, window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares fit of ``values ≈ C (1 + t)^-λ`` on ``window``.

    ``superpolynomial`` is set when an exponential model ``C e^{-a t}``
    explains the window strictly better than the power law.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is None:
        window = (float(t[0]), float(t[-1]))
    sel = (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(sel) < 10:
        raise ValueError(f"decay fit needs at least 10 samples in the window, got {np.count_nonzero(sel)}")
    tt, vv = t[sel], v[sel]
    if np.any(vv <= 0) or not np.all(np.isfinite(vv)):
        raise ValueError("decay fit needs positive finite values on the window")
    X = np.log1p(tt)
    Y = np.log(vv)
    slope, icept = np.polyfit(X, Y, 1)
    r2 = _r2(Y, slope * X + icept)
    a_exp, b_exp = np.polyfit(tt, Y, 1)
    r2_exp = _r2(Y, a_exp * tt + b_exp)
    return DecayFit(
        exponent=float(-slope),
        prefactor=float(np.exp(icept)),
        window=(float(window[0]), float(window[1])),
        r2=float(r2),
        n_samples=int(len(tt)),
        superpolynomial=bool(r2_exp > r2 + 1e-9 and a_exp < 0),
    )


# ---------------------------------------------------------------------------
# Łojasiewicz exponent


@dataclass
class LojasiewiczEstimate:
    theta_hat: float
    slope: float
    window: tuple[float, float]
    residual: float
    n_samples: int
    reliable: bool


def regress_lojasiewicz(
    t,
    energy,
    dissipation,
    energy_inf: float | None = None,
    window: tuple[float, float] | None = None,
    gap_floor: float = 1e-13,
) -> LojasiewiczEstimate:
    """Regress log(E - E_inf) on log sqrt(A); the slope estimates 1/(1 - θ).

    Heuristic only: the analysis guarantees some θ in (0, 1/2) exists, not its
    value. Windows with fewer than 10 usable samples (gap above ``gap_floor``
    and positive dissipation) are flagged unreliable.
    """
    t = np.asarray(t, dtype=float)
    E = np.asarray(energy, dtype=float)
    A = np.asarray(dissipation, dtype=float)
    if energy_inf is None:
        energy_inf = float(E[-1])
    gap = E - energy_inf
    sel = (gap > gap_floor) & (A > 0)
    if window is not None:
        sel &= (t >= window[0]) & (t <= window[1])
    win = (float(t[sel][0]), float(t[sel][-1])) if np.any(sel) else (float("nan"),) * 2
    if np.count_nonzero(sel) < 10:
        return LojasiewiczEstimate(float("nan"), float("nan"), win, float("nan"), int(np.count_nonzero(sel)), False)
    X = 0.5 * np.log(A[sel])
    Y = np.log(gap[sel])
    slope, icept = np.polyfit(X, Y, 1)
    resid = float(np.sqrt(np.mean((Y - slope * X - icept) ** 2)))
    reliable = bool(slope > 1.0)
    theta = 1.0 - 1.0 / slope if slope > 0 else float("nan")
    if reliable:
        theta = float(min(max(theta, np.finfo(float).tiny), 0.5))
    return LojasiewiczEstimate(float(theta), float(slope), win, resid, int(np.count_nonzero(sel)), reliable)


def estimate_lojasiewicz(
    traj: Trajectory, energy_inf: float | None = None, window=None, gap_floor: float = 1e-13
) -> LojasiewiczEstimate:
    """Łojasiewicz regression on the diagnostics of a source-free run."""
    if traj.control is not None:
        raise ValueError("the Łojasiewicz regression assumes a run without source")
    d = traj.diag
    return regress_lojasiewicz(d["t"], d["E"], d["A"], energy_inf, window, gap_floor)


# ---------------------------------------------------------------------------
# nonlocal steady problem


@dataclass
class EllipticResult:
    phi: np.ndarray
    residual: float
    iterations: int
    converged: bool
    upsilon_history: np.ndarray = field(repr=False)


def nonlocal_residual(grid: Grid, model: ModelSpec, phi: np.ndarray, m: float) -> np.ndarray:
    return -laplacian(grid, phi) + model.dF(phi) - (m - mean(grid, phi))


def solve_nonlocal_elliptic(
    grid: Grid,
    model: ModelSpec,
    m: float,
    phi_init,
    tol: float = 1e-10,
    max_iter: int = 20_000,
    c_armijo: float = 1e-4,
) -> EllipticResult:
    """Descent on Υ with backtracking until the residual is below ``tol``.

    The search direction is the residual g preconditioned by (I - Δ)^{-1},
    i.e. the gradient of Υ in the H1 inner product. Each accepted step
    satisfies Υ(φ - τ d) <= Υ(φ) - c τ <g, d>; the step grows by 1.5 after
    an acceptance and halves on rejection. Decreases are computed as exact
    differences so the test stays meaningful below the rounding of Υ itself;
    ``upsilon_history`` accumulates them from Υ(phi_init). Hitting ``max_iter`` returns the
    last iterate with ``converged=False``.
    """
    phi = grid.check(phi_init, "phi_init").copy()
    val = upsilon(grid, model, phi, m)
    history = [val]
    g = nonlocal_residual(grid, model, phi, m)
    res = l2(grid, g)
    precond = 1.0 + grid.eigenvalues
    step = 1.0
    it = 0
    while res > tol and it < max_iter:
        it += 1
        d = spectral_solve(grid, g, precond)
        slope = inner(grid, g, d)
        while True:
            change = upsilon_change(grid, model, phi, -step * d, m)
            if change <= -c_armijo * step * slope:
                break
            step *= 0.5
            if step < 1e-14:
                break
        if step < 1e-14:
            break
        phi = phi - step * d
        val += change
        history.append(val)
        g = nonlocal_residual(grid, model, phi, m)
        res = l2(grid, g)
        step = min(1.5 * step, 1e6)
    return EllipticResult(phi, res, it, res <= tol, np.asarray(history))


# ---------------------------------------------------------------------------
# Lyapunov stability


@dataclass
class StabilityReport:
    eta: float
    epsilon: float
    sup_deviation: float
    per_probe: np.ndarray
    stayed_within: bool
    horizon: float


def band_limited_perturbation(grid: Grid, rng: np.random.Generator, eta: float, n_modes: int = 8):
    """Random low-mode pair (dphi, dsigma) with ∫(dphi + dsigma) = 0 and
    ‖dphi‖_H1 + ‖dsigma‖_L2 = eta."""
    def draw():
        c = np.zeros(grid.shape)
        sl = tuple(slice(0, min(n_modes, n)) for n in grid.shape)
        c[sl] = rng.normal(size=c[sl].shape)
        return grid.inverse(c)

    dphi, dsig = draw(), draw()
    shift = 0.5 * np.mean(dphi + dsig)
    dphi -= shift
    dsig -= shift
    size = h1(grid, dphi) + l2(grid, dsig)
    if eta == 0 or size == 0:
        return np.zeros(grid.shape), np.zeros(grid.shape)
    return dphi * (eta / size), dsig * (eta / size)


def lyapunov_probe(
    grid: Grid,
    model: ModelSpec,
    phi_star,
    sigma_star,
    eta: float,
    epsilon: float,
    horizon: float,
    n_perturbations: int = 8,
    seed: int = 0,
    dt: float = 0.05,
    n_modes: int = 8,
    equilibrium_tol: float = 1e-6,
) -> StabilityReport:
    """Run seeded perturbations of an equilibrium and record the largest
    H1 x L2 deviation over [0, horizon]."""
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    phi_star = grid.check(phi_star, "phi_star")
    sigma_star = grid.check(np.broadcast_to(sigma_star, grid.shape), "sigma_star")
    star = State(phi_star, compute_mu(grid, model, phi_star), sigma_star)
    chk = equilibrium_report(grid, model, star, mean(grid, phi_star + sigma_star))
    worst = max(chk.residual_stationary, chk.relation_gap, chk.reaction_residual, chk.sigma_inf_std)
    if worst > equilibrium_tol:
        raise ValueError(f"(phi*, sigma*) is not an equilibrium (residual {worst:.3e})")

    rng = np.random.default_rng(seed)
    params = SchemeParams(dt=dt, t_end=horizon)
    sups = []
    for _ in range(n_perturbations):
        dphi, dsig = band_limited_perturbation(grid, rng, eta, n_modes)
        sup = h1(grid, dphi) + l2(grid, dsig)

        def until(old, new, h):
            nonlocal sup
            sup = max(sup, h1(grid, new.phi - phi_star) + l2(grid, new.sigma - sigma_star))
            return False

        run(grid, model, phi_star + dphi, sigma_star + dsig, None, params, store_every=10**9, until=until)
        sups.append(sup)
    sups = np.asarray(sups)
    sup_all = float(np.max(sups)) if len(sups) else 0.0
    return StabilityReport(eta, epsilon, sup_all, sups, bool(sup_all <= epsilon), horizon)
