import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chtumor.control import Control, CostSpec, cost_profile, evaluate_cost, fonc_residual, project_box, tau_index
from chtumor.grid import Grid
from chtumor.model import ModelSpec
from chtumor.solver import SchemeParams, run

G = Grid((8,), (2.0,))


def test_control_validation():
    with pytest.raises(ValueError):
        Control(G, 1.0, np.zeros((2, 7)))
    with pytest.raises(ValueError):
        Control(G, 0.0, np.zeros((2, 8)))
    with pytest.raises(ValueError):
        Control(G, 1.0, np.zeros((2, 8)), u_min=1.0, u_max=0.0)
    with pytest.raises(ValueError):
        Control(G, 1.0, np.full((2, 8), np.nan))


def test_slab_sampling():
    u = Control(G, 1.0, np.arange(4)[:, None] * np.ones((4, 8)))
    assert u.slab_len == 0.25
    assert [u.slab_index(t) for t in (0.0, 0.2499, 0.25, 0.7, 1.0, 5.0)] == [0, 0, 1, 2, 3, 3]
    assert np.all(u.sample(0.5) == 2.0)
    assert u.norm() == pytest.approx(np.sqrt(2.0 * 0.25 * (0 + 1 + 4 + 9)))


def test_initial_guess():
    assert np.all(Control.constant(G, 1.0, 3.0, u_min=-1, u_max=1).initial_guess().values == 0)
    assert np.all(Control.constant(G, 1.0, 3.0, u_min=0.5, u_max=1).initial_guess().values == 0.75)
    assert np.all(Control.constant(G, 1.0, 3.0, u_min=0.5).initial_guess().values == 0.5)


def test_fonc_residual_examples(rng):
    u = Control(G, 1.0, rng.uniform(-0.5, 0.5, (3, 8)), -1.0, 1.0)
    assert fonc_residual(u, np.zeros((3, 8))) == 0.0
    low = Control.constant(G, 1.0, -1.0, 3, -1.0, 1.0)
    assert fonc_residual(low, np.full((3, 8), 2.0)) == 0.0
    g = 0.1 * rng.normal(size=(3, 8))
    assert fonc_residual(u, g) == pytest.approx(u.norm(g), rel=1e-14)


@given(st.integers(0, 10_000))
def test_projection_is_feasible_and_idempotent(seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-2, 0, (1, 8))
    hi = lo + rng.uniform(0, 2, (1, 8))
    u = Control(G, 1.0, 3 * rng.normal(size=(4, 8)), lo, hi)
    p = project_box(u)
    assert np.all(p.values >= u.lower()) and np.all(p.values <= u.upper())
    assert np.array_equal(project_box(p).values, p.values)
    assert fonc_residual(p, np.zeros_like(p.values)) == 0.0


def test_cost_validation():
    with pytest.raises(ValueError):
        CostSpec(1.0)
    with pytest.raises(ValueError):
        CostSpec(1.0, beta_Q=-1.0)
    with pytest.raises(ValueError):
        CostSpec(0.0, beta_Q=1.0)
    with pytest.raises(ValueError):
        CostSpec(1.0, beta_Q=1.0, phi_Q=np.inf)
    assert CostSpec(1.0, beta_Q=1.0, beta_T=0.5).scaled(2.0).beta_T == 1.0


def test_tau_index():
    assert tau_index(0.3, 0.1, 10) == 3
    with pytest.raises(ValueError):
        tau_index(0.35, 0.1, 10)
    with pytest.raises(ValueError):
        tau_index(1.1, 0.1, 10)


def test_cost_of_resting_state_is_closed_form():
    T, dt = 1.0, 0.1
    u = Control.constant(G, T, 0.5, u_min=-1, u_max=1)
    tr = run(G, ModelSpec(), np.ones(8), np.zeros(8), None, SchemeParams(dt, T))
    tr.control = u  # fixed point unaffected for the purposes of the cost arithmetic
    c = CostSpec(T, beta_Q=2.0, beta_Omega=1.0, alpha_Q=4.0, beta_S=1.0, beta_u=3.0, beta_T=0.7,
                 phi_Q=0.0, phi_Omega=0.5, sigma_Q=1.0)
    prof = cost_profile(tr, c)
    tau = dt * np.arange(11)
    # running: ½·2·|Ω|·1 + ½·4·|Ω|·1 per unit time; terminal: ½·|Ω|·¼ + ½·|Ω|·2
    expect = (1.0 * 2 + 2.0 * 2) * tau + 0.5 * 2 * 0.25 + 0.5 * 2 * 2 + 0.5 * 3 * 0.25 * 2 + 0.7 * tau
    np.testing.assert_allclose(prof, expect, rtol=1e-13)
    assert evaluate_cost(tr, c, 0.4) == pytest.approx(expect[4])


def test_cost_only_beta_T():
    tr = run(G, ModelSpec(), np.ones(8), np.zeros(8), Control.constant(G, 1.0), SchemeParams(0.25, 1.0))
    np.testing.assert_allclose(cost_profile(tr, CostSpec(1.0, beta_T=2.0)), [0, 0.5, 1, 1.5, 2])
