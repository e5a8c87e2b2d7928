import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dislocscale.core import sine_stress, zero_stress
from dislocscale.ddd import DDDConfig, ParticleSet, ddd_evolve
from dislocscale.dd import (
    CellProblemSpec,
    EffectiveFluxTable,
    UpwindStats,
    cell_problem_batch,
    cell_problem_g,
    dd_energy,
    dd_evolve,
    dd_stability_bound,
    delta_robustness,
    isotonic_clamp,
    macro_state,
    rational_density,
    rescale_ddd,
    threshold_width,
)
from dislocscale.errors import ArgumentError, ExtrapolationError, RangeError, StabilityError
from dislocscale.nonlocal_ops import PeriodicLevyOperator

GAMMA = 4 * math.pi


def orowan_table(rho=(0.5, 1.0, 1.5, 2.0), l=np.linspace(-2, 2, 9)):
    R, Lg = np.meshgrid(rho, l, indexing="ij")
    g = GAMMA * R * Lg / 2
    return EffectiveFluxTable(rho, l, g, g.copy(), GAMMA, "zero")


def test_rational_density():
    assert rational_density(1.5) == (3, 2, True)
    n, m, exact = rational_density(math.sqrt(2))
    assert not exact and m <= 16
    with pytest.raises(ArgumentError):
        rational_density(0.0)


def test_cell_spec_defaults():
    s = CellProblemSpec(2, 1, 0.5)
    assert s.rho == 2.0
    assert s.t_average == pytest.approx(20 * s.t_transient)
    with pytest.raises(ArgumentError):
        CellProblemSpec(1, 1, t_transient=1.0, t_average=2.0)
    assert CellProblemSpec.from_rho(0.75).n == 3


def test_cell_zero_stress_is_orowan():
    res = cell_problem_batch(2, 1, [-0.5, 0.1, 0.5], zero_stress())
    np.testing.assert_allclose(res.g, GAMMA * 2 * np.array([-0.5, 0.1, 0.5]) / 2, rtol=1e-6)


def test_cell_pinning_and_depinned_law():
    ls = [-3.0, -1.0, 0.0, 1.0, 3.0]
    res = cell_problem_batch(1, 1, ls, sine_stress(0.8))
    assert res.g[2] == 0.0 and res.g[1] == 0.0 and res.g[3] == 0.0
    expect = GAMMA * math.sqrt(3.0**2 / 4 - 0.8**2)
    assert res.g[4] == pytest.approx(expect, rel=1e-4)
    assert res.g[0] == pytest.approx(-res.g[4], rel=1e-6)


def test_cell_drift_independent_of_phase():
    a = cell_problem_batch(2, 1, [2.5], sine_stress(0.8), phase=0.0)
    b = cell_problem_batch(2, 1, [2.5], sine_stress(0.8), phase=0.37)
    assert b.g[0] == pytest.approx(a.g[0], rel=2e-2)


def test_cell_requires_periodic_stress():
    from dislocscale.core import stress_from_spec

    with pytest.raises(ArgumentError):
        cell_problem_batch(1, 1, [0.0], stress_from_spec("expr:sin(x)"))


def test_cell_problem_g_single():
    g = cell_problem_g(CellProblemSpec(1, 1, 0.5), zero_stress())
    assert g == pytest.approx(GAMMA * 0.25, rel=1e-6)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30))
def test_isotonic_clamp_properties(row):
    out = isotonic_clamp(row)
    assert np.all(np.diff(out) >= -1e-12)
    assert out.sum() == pytest.approx(float(np.sum(row)), abs=1e-9)
    np.testing.assert_allclose(isotonic_clamp(out), out, atol=1e-12)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30))
def test_isotonic_clamp_keeps_monotone_rows(row):
    r = np.sort(row)
    np.testing.assert_array_equal(isotonic_clamp(r), r)


def test_isotonic_clamp_small_example():
    np.testing.assert_allclose(isotonic_clamp([0.0, 2.0, 1.0, 3.0]), [0.0, 1.5, 1.5, 3.0])


def test_table_bilinear_exact_and_hull():
    tab = orowan_table()
    assert tab(1.2, 0.3) == pytest.approx(GAMMA * 1.2 * 0.3 / 2)
    assert tab.monotone and tab.max_clamp == 0.0
    assert tab.lip_l == pytest.approx(GAMMA)
    assert tab.lip_rho == pytest.approx(GAMMA)
    with pytest.raises(ExtrapolationError):
        tab(3.0, 0.0)
    with pytest.raises(ExtrapolationError):
        tab(1.0, 5.0)


def test_threshold_width():
    rho = [1.0]
    l = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    g = np.array([[-1.0, 0.0, 0.0, 0.0, 1.0]])
    tab = EffectiveFluxTable(rho, l, g, g)
    assert threshold_width(tab) == (-1.0, 1.0)


def test_delta_robustness_trivial_without_interaction():
    rep = delta_robustness(CellProblemSpec(1, 1, 0.5), zero_stress(), [0.1, 0.05, 0.025])
    np.testing.assert_allclose(rep.g, GAMMA * 0.25, rtol=1e-6)
    assert len(rep.lines()) == 6
    with pytest.raises(ArgumentError):
        delta_robustness(CellProblemSpec(1, 1, 0.5), zero_stress(), [0.05, 0.1])


def test_macro_state_closure():
    st0 = macro_state(lambda x: 2 * x + 0.1 * np.sin(2 * math.pi * x), 2.0, 32)
    assert st0.w.gradient_period == (1.0, 2.0)
    assert st0.w.values[-1] - st0.w.values[0] == pytest.approx(2.0)


def test_dd_affine_is_stationary():
    st0 = macro_state(lambda x: 1.0 * x, 1.0, 32)
    out = dd_evolve(st0, orowan_table(), None, 0.1)
    np.testing.assert_allclose(out.w.values, st0.w.values, atol=1e-13)


def test_dd_fourier_mode_decay_rate():
    a = 1e-3
    st0 = macro_state(lambda x: x + a * np.cos(2 * math.pi * x), 1.0, 128)
    T = 0.02
    out = dd_evolve(st0, orowan_table(), None, T)
    p = out.w.periodic_part()[:-1]
    amp = 2 * np.abs(np.fft.rfft(p)[1]) / p.size
    rate = math.log(amp / a) / T
    assert rate == pytest.approx(-GAMMA * math.pi, rel=2e-2)


def test_dd_cfl_error():
    st0 = macro_state(lambda x: 1.0 * x, 1.0, 32)
    tab = orowan_table()
    bound = dd_stability_bound(tab, PeriodicLevyOperator(32, 1.0))
    with pytest.raises(StabilityError):
        dd_evolve(st0, tab, 1.1 * bound, 0.1)


def test_dd_energy_of_cosine():
    a = 0.1
    st0 = macro_state(lambda x: x + a * np.cos(2 * math.pi * x), 1.0, 256)
    assert dd_energy(st0) == pytest.approx(math.pi * a**2 / 4, rel=1e-3)
    assert dd_energy(macro_state(lambda x: 1.0 * x, 1.0, 64)) == pytest.approx(0.0, abs=1e-14)


def _random_profile(rng, amp=0.3):
    c = rng.normal(size=4) * amp
    return lambda x: x + sum(c[k] * np.sin(2 * math.pi * (k + 1) * x + k) / (8 * math.pi * (k + 1)) for k in range(4))


def test_dd_energy_decay_with_obstacles(sine_table):
    rng = np.random.default_rng(3)
    st0 = macro_state(_random_profile(rng), 1.0, 64)
    dt = dd_stability_bound(sine_table, PeriodicLevyOperator(64, 1.0))
    ts = [dt * k for k in range(1, 101)]
    E = [dd_energy(st0)]
    stats = UpwindStats()
    dd_evolve(st0, sine_table, dt, ts[-1], sample_times=ts, on_sample=lambda s: E.append(dd_energy(s)), stats=stats)
    assert np.all(np.diff(E) <= 1e-10)
    assert stats.forward + stats.backward + stats.interior == 100 * 64


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_dd_comparison(sine_table, seed):
    tab = sine_table
    rng = np.random.default_rng(seed)
    f = _random_profile(rng)
    shift = abs(rng.normal()) * 0.05
    a = macro_state(f, 1.0, 48)
    b = macro_state(lambda x: f(x) + shift + 0.02 * np.sin(2 * math.pi * x) ** 2, 1.0, 48)
    ea = dd_evolve(a, tab, None, 0.05)
    eb = dd_evolve(b, tab, None, 0.05)
    assert np.all(eb.w.values >= ea.w.values - 1e-12)


def test_rescale_ddd_line():
    traj = ddd_evolve(ParticleSet([1.0, 2.0, 3.0]), DDDConfig(), 0.0)
    x = np.linspace(-1, 2, 301)
    (w,) = rescale_ddd(traj, 0.5, [0.0], x)
    np.testing.assert_allclose(np.interp([-0.9, 0.6, 1.2], x, w.values), [0.0, 0.5, 1.0])
    assert w.far_field == (0.0, 1.5)
    with pytest.raises(RangeError):
        rescale_ddd(traj, 0.5, [1.0], x)


def test_rescale_ddd_periodic_counts_images():
    ps = ParticleSet([0.5, 1.5, 2.5, 3.5], box=4.0, base_count=0)
    cfg = DDDConfig(interaction="periodic", box=4.0)
    traj = ddd_evolve(ps, cfg, 0.0)
    x = np.linspace(0.0, 1.0, 257)
    (w,) = rescale_ddd(traj, 0.25, [0.0], x)
    assert w.gradient_period == (1.0, 1.0)
    vals = w.values
    # eps * number of particles at or left of x / eps
    assert vals[0] == 0.0 and vals[-1] == pytest.approx(1.0)
    assert np.interp(0.5, x, vals) == pytest.approx(0.5)
