import numpy as np
import pytest

from chtumor.adjoint import dJ_dtau, reduced_gradient, solve_adjoint
from chtumor.control import Control, CostSpec, cost_profile
from chtumor.grid import Grid, laplacian
from chtumor.model import ModelSpec
from chtumor.solver import SchemeParams, run
from oracles import adjoint_at_one

T = 0.5


def problem(dt=0.005, n=16):
    g = Grid((n,), (2 * np.pi,))
    x = g.centers(0)
    model = ModelSpec(proliferation="rational")
    phi0 = 0.8 + 0.1 * np.cos(x / 2)
    sigma0 = 0.3 + 0.1 * np.cos(x)
    u = Control(g, T, np.outer(np.ones(5), 0.5 + 0.2 * np.cos(x / 2)))
    cost = CostSpec(T, beta_Q=1.0, beta_Omega=1.0, alpha_Q=0.5, beta_S=0.3, beta_u=0.1, beta_T=0.1,
                    phi_Q=0.9, phi_Omega=0.7, sigma_Q=0.2)
    return g, model, phi0, sigma0, u, cost, SchemeParams(dt, T)


def J(g, model, phi0, sigma0, u, cost, params, tau):
    tr = run(g, model, phi0, sigma0, u, params)
    return cost_profile(tr, cost)[int(round(tau / params.dt))]


def directional_fd(prob, d, tau, eps=1e-5):
    g, model, phi0, sigma0, u, cost, params = prob
    plus = J(g, model, phi0, sigma0, u.with_values(u.values + eps * d), cost, params, tau)
    minus = J(g, model, phi0, sigma0, u.with_values(u.values - eps * d), cost, params, tau)
    return (plus - minus) / (2 * eps)


def test_discrete_gradient_matches_finite_differences():
    prob = problem()
    g, model, phi0, sigma0, u, cost, params = prob
    base = run(g, model, phi0, sigma0, u, params)
    tau = 0.35
    grad = reduced_gradient(base, solve_adjoint(base, cost, tau, "discrete"), cost, tau).grad_u
    rng = np.random.default_rng(0)
    for _ in range(3):
        d = rng.normal(size=u.values.shape)
        fd = directional_fd(prob, d, tau)
        assert u.inner(grad, d) == pytest.approx(fd, rel=1e-7, abs=1e-10)


def test_continuous_gradient_converges_to_discrete():
    errs = []
    for dt in (0.005, 0.0025):
        g, model, phi0, sigma0, u, cost, params = problem(dt)
        base = run(g, model, phi0, sigma0, u, params)
        gc = reduced_gradient(base, solve_adjoint(base, cost, T, "continuous"), cost, T).grad_u
        gd = reduced_gradient(base, solve_adjoint(base, cost, T, "discrete"), cost, T).grad_u
        errs.append(u.norm(gc - gd) / u.norm(gd))
    assert errs[1] < 0.7 * errs[0]


@pytest.mark.parametrize("mode", ["continuous", "discrete"])
def test_adjoint_invariants(mode):
    g, model, phi0, sigma0, u, cost, params = problem()
    base = run(g, model, phi0, sigma0, u, params)
    tau = 0.3
    adj = solve_adjoint(base, cost, tau, mode)
    k = adj.k_tau
    assert k == 60
    np.testing.assert_allclose(adj.p[k], cost.beta_Omega * (base.phi[k] - cost.phi_Omega) + 0.5 * cost.beta_S)
    assert np.all(adj.r[k] == 0)
    for n in (0, 25, k):
        np.testing.assert_allclose(adj.q[n], laplacian(g, adj.p[n]) - model.P(base.phi[n]) * (adj.p[n] - adj.r[n]),
                                   atol=1e-12)
    rg = reduced_gradient(base, adj, cost, tau)
    # no r-contribution after tau: only beta_u u remains on those steps
    np.testing.assert_allclose(rg.per_step[k:], cost.beta_u * u.values[[u.slab_index(n * params.dt) for n in range(k, 100)]])


def test_adjoint_rejects_bad_input():
    g, model, phi0, sigma0, u, cost, params = problem()
    base = run(g, model, phi0, sigma0, u, params)
    with pytest.raises(ValueError):
        solve_adjoint(base, cost, 0.3, "exact")
    with pytest.raises(ValueError):
        solve_adjoint(base, cost, 0.3033, "discrete")
    sparse = run(g, model, phi0, sigma0, u, params, store_every=3)
    with pytest.raises(ValueError):
        solve_adjoint(sparse, cost, 0.3)
    with pytest.raises(TypeError):
        noctl = run(g, model, phi0, sigma0, None, params)
        reduced_gradient(noctl, solve_adjoint(noctl, cost, 0.3), cost, 0.3)


def test_adjoint_at_fixed_point_matches_ode():
    g = Grid((4,), (1.0,))
    Tl, dt = 2.0, 1e-3
    base = run(g, ModelSpec(), np.ones(4), np.zeros(4), Control.constant(g, Tl), SchemeParams(dt, Tl))
    cost = CostSpec(Tl, beta_S=1.0)
    adj = solve_adjoint(base, cost, Tl, "continuous")
    s = Tl - dt * np.arange(adj.k_tau + 1)
    ref = adjoint_at_one(1.0, 0.5, s)
    assert np.max(np.abs(adj.p[:, 0] - ref[:, 0])) <= 2e-3
    assert np.max(np.abs(adj.r[:, 0] - ref[:, 1])) <= 2e-3


def test_dJ_dtau_matches_profile_difference():
    g, model, phi0, sigma0, u, cost, params = problem(dt=0.001)
    base = run(g, model, phi0, sigma0, u, params)
    prof = cost_profile(base, cost)
    k = 300
    fd = (prof[k + 1] - prof[k - 1]) / (2 * params.dt)
    assert dJ_dtau(base, cost, k * params.dt) == pytest.approx(fd, rel=2e-2)
    only_T = CostSpec(T, beta_T=0.25)
    assert dJ_dtau(base, only_T, 0.2) == 0.25
