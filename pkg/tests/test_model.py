import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chtumor.grid import Grid
from chtumor.model import AssumptionWarning, ModelSpec, energy_total, upsilon, upsilon_change


def test_quartic_values():
    m = ModelSpec()
    assert m.potential_eval(1.0) == {"F": 0.0, "dF": 0.0, "d2F": 2.0}
    assert m.potential_eval(0.0) == {"F": 0.25, "dF": 0.0, "d2F": -1.0}
    assert m.F(-1.0) == 0.0
    assert m.potential_eval(2.0) == {"F": 2.25, "dF": 6.0, "d2F": 11.0}
    assert m.max_d2F() == pytest.approx(5.75)


def test_polynomial_matches_quartic():
    q = ModelSpec()
    p = ModelSpec(potential="polynomial", poly_coeffs=(0.25, 0.0, -0.5, 0.0, 0.25))
    s = np.linspace(-2, 2, 41)
    np.testing.assert_allclose(p.F(s), q.F(s), atol=1e-14)
    np.testing.assert_allclose(p.dF(s), q.dF(s), atol=1e-13)
    np.testing.assert_allclose(p.d2F(s), q.d2F(s), atol=1e-13)


def test_polynomial_outside_class_warns():
    with pytest.warns(AssumptionWarning):
        ModelSpec(potential="polynomial", poly_coeffs=(0, 0, 0, 0, 0, 0, 1.0))
    with pytest.warns(AssumptionWarning):
        ModelSpec(potential="polynomial", poly_coeffs=(0, 0, 0, 0, -1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ModelSpec(potential="polynomial", poly_coeffs=(0, 0, 1.0))


@pytest.mark.parametrize("kw", [
    {"potential": "sextic"}, {"proliferation": "hill"}, {"P0": 0.0}, {"P0": -1.0},
    {"proliferation": "rational", "P1": 0.0}, {"proliferation": "rational", "gamma": -1.0},
    {"potential": "polynomial", "poly_coeffs": ()},
])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        ModelSpec(**kw)


def test_proliferation_values():
    c = ModelSpec(P0=2.0)
    assert c.proliferation_eval(0.3) == {"P": 2.0, "dP": 0.0}
    assert c.P_floor == 2.0
    r = ModelSpec(proliferation="rational", P0=1.0, gamma=1.0, P1=0.1)
    assert r.proliferation_eval(1.0) == pytest.approx({"P": 0.6, "dP": -0.5})
    assert r.proliferation_eval(0.0) == pytest.approx({"P": 1.1, "dP": 0.0})
    assert r.P_floor == 0.1


@given(st.floats(-3, 3), st.floats(0.1, 3), st.floats(0, 5), st.floats(0.01, 1))
def test_rational_bounds_and_derivative(s, P0, gamma, P1):
    m = ModelSpec(proliferation="rational", P0=P0, gamma=gamma, P1=P1)
    assert P1 <= m.P(s) <= P0 + P1
    h = 1e-6
    fd = (m.P(s + h) - m.P(s - h)) / (2 * h)
    assert m.dP(s) == pytest.approx(fd, rel=1e-5, abs=1e-7)


@given(st.floats(-3, 3))
def test_quartic_derivatives_by_fd(s):
    m = ModelSpec()
    h = 1e-5
    assert m.dF(s) == pytest.approx((m.F(s + h) - m.F(s - h)) / (2 * h), rel=1e-6, abs=1e-8)
    assert m.d2F(s) == pytest.approx((m.dF(s + h) - m.dF(s - h)) / (2 * h), rel=1e-6, abs=1e-8)


def test_energy_examples():
    g = Grid((8,), (2.0,))
    m = ModelSpec()
    assert energy_total(g, m, np.ones(8), np.zeros(8)) == 0.0
    assert energy_total(g, m, np.zeros(8), np.ones(8)) == pytest.approx(0.25 * 2 + 0.5 * 2)
    with pytest.raises(ValueError):
        energy_total(g, m, np.ones(7), np.zeros(8))


def test_upsilon_examples():
    g = Grid((8,), (2.0,))
    m = ModelSpec()
    assert upsilon(g, m, np.ones(8), 1.0) == 0.0
    assert upsilon(g, m, np.zeros(8), 1.0) == pytest.approx(0.5 + 1.0)


@given(st.integers(0, 10_000), st.floats(-2, 2), st.floats(1e-6, 1.0))
def test_upsilon_change_is_exact(seed, m, scale):
    rng = np.random.default_rng(seed)
    g = Grid((16,), (3.0,))
    model = ModelSpec()
    phi = rng.normal(size=16)
    delta = scale * rng.normal(size=16)
    direct = upsilon(g, model, phi + delta, m) - upsilon(g, model, phi, m)
    tol = 1e-11 * max(1.0, abs(upsilon(g, model, phi, m)))
    assert upsilon_change(g, model, phi, delta, m) == pytest.approx(direct, abs=tol)
