import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dislocscale.core import make_sinusoidal_potential, stress_from_spec
from dislocscale.errors import ArgumentError, ExtractionError, StabilityError
from dislocscale.nonlocal_ops import LevyOperator, LineField
from dislocscale.pn import (
    PNState,
    build_a3_initial,
    extract_fronts,
    layer_tail_check,
    pn_evolve,
    pn_stability_bound,
    solve_corrector,
)


def test_layer_matches_arctan(layer):
    m = np.abs(layer.x) <= 50
    err = np.max(np.abs(layer.phi.values[m] - 0.5 - np.arctan(layer.x[m]) / math.pi))
    assert err <= 5e-3
    assert layer.phi.values[layer.x.size // 2] == pytest.approx(0.5, abs=1e-9)
    assert np.all(np.diff(layer.phi.values) > 0)


def test_layer_constants(layer):
    assert layer.gamma == pytest.approx(4 * math.pi, rel=1e-2)
    assert layer.eta == pytest.approx(1 / (2 * math.pi), rel=1e-2)


def test_layer_tail(layer):
    rep = layer_tail_check(layer, (10.0, 40.0))
    assert rep.max_deviation <= 0.15
    left = layer_tail_check(layer, (10.0, 40.0), side="left")
    assert left.max_deviation <= 0.15


def test_layer_profile_extends_with_tail(layer):
    assert float(layer.profile(500.0)) == pytest.approx(1 - 1 / (500 * math.pi))
    assert float(layer.profile(-500.0)) == pytest.approx(1 / (500 * math.pi))


def test_corrector(pot, layer):
    c = solve_corrector(layer, pot)
    assert c.residual <= 1e-8
    assert c.eta == pytest.approx(1 / (2 * math.pi), rel=1e-2)
    # psi is normalised against the near-kernel direction
    assert abs(np.dot(c.psi.values, c.kernel)) <= 1e-8 * np.linalg.norm(c.psi.values) * np.linalg.norm(c.kernel)


def test_pn_rate_on_constant_quarter(pot):
    x = np.linspace(-5, 5, 101)
    st0 = PNState(LineField(x, np.full(x.size, 0.25), far_field=(0.25, 0.25)), 0.0, 1.0, 0)
    dt = 1e-4
    out = pn_evolve(st0, pot, None, dt, dt)
    rate = (out.v.values - 0.25) / dt
    np.testing.assert_allclose(rate, -1 / (2 * math.pi), rtol=1e-10)


def test_pn_stability_error(pot):
    x = np.linspace(-5, 5, 101)
    st0 = PNState(LineField(x, np.zeros(x.size), far_field=(0, 0)), 0.0, 1.0, 0)
    bound = pn_stability_bound(LevyOperator(x.size, 0.1), pot, 1.0)
    with pytest.raises(StabilityError):
        pn_evolve(st0, pot, None, 1.01 * bound, 1.0)


def test_pn_layer_is_stationary(pot, layer):
    st0 = PNState(layer.phi, 0.0, 1.0, 1)
    out = pn_evolve(st0, pot, None, None, 0.5)
    assert np.max(np.abs(out.v.values - layer.phi.values)) <= 1e-8


def test_pn_sample_times_hit_exactly(pot):
    x = np.linspace(-5, 5, 101)
    st0 = PNState(LineField(x, 0.5 + np.arctan(x) / math.pi, far_field=(0, 1)), 0.0, 1.0, 1)
    seen = []
    pn_evolve(st0, pot, None, None, 0.3, sample_times=[0.1, 0.2], on_sample=lambda s: seen.append(s.t))
    assert seen == [0.1, 0.2]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_pn_comparison(seed):
    pot_ = make_sinusoidal_potential()
    rng = np.random.default_rng(seed)
    x = np.linspace(-4, 4, 81)
    v1 = 0.5 + np.arctan(x + rng.normal()) / math.pi
    v2 = v1 + np.abs(rng.normal(size=x.size)) * 0.1
    sig = stress_from_spec("expr:0.3*sin(x)")
    a = pn_evolve(PNState(LineField(x, v1, far_field=(0, 1)), 0, 0.5, 1), pot_, sig, None, 0.1)
    b = pn_evolve(PNState(LineField(x, v2, far_field=(0, 1)), 0, 0.5, 1), pot_, sig, None, 0.1)
    assert np.all(b.v.values >= a.v.values - 1e-12)


def test_a3_initial_and_fronts(layer):
    x = np.linspace(-8, 8, 1601)
    st0 = build_a3_initial([-1.0, 1.0], layer, None, 0.1, x)
    assert st0.v.far_field == (0.0, 2.0)
    np.testing.assert_allclose(extract_fronts(st0, 2), [-1.0, 1.0], atol=5e-3)
    with pytest.raises(ArgumentError):
        build_a3_initial([1.0, -1.0], layer, None, 0.1, x)


def test_a3_initial_stress_shift(layer):
    x = np.linspace(-8, 8, 161)
    sig = stress_from_spec("constant:0.1")
    st0 = build_a3_initial([0.0], layer, sig, 0.1, x)
    assert st0.v.far_field == pytest.approx((0.02, 1.02))


def test_extract_fronts_failure():
    x = np.linspace(-1, 1, 11)
    st0 = PNState(LineField(x, np.zeros(11), far_field=(0, 0)), 0.0, 1.0, 1)
    with pytest.raises(ExtractionError):
        extract_fronts(st0, 1)
