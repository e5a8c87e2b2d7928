import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dislocscale.core import RegularizedLogPotential
from dislocscale.errors import ArgumentError, ClosureError, ConventionError, DomainError
from dislocscale.nonlocal_ops import (
    LevyOperator,
    LineField,
    PeriodicLevyOperator,
    levy_khintchine_apply,
    mdelta_apply,
    odd_integer_part,
    periodic_interaction_force,
    periodized_L,
)


def arctan_field(half=60.0, h=0.05):
    x = np.linspace(-half, half, int(round(2 * half / h)) + 1)
    return LineField(x, 0.5 + np.arctan(x) / math.pi, far_field=(0.0, 1.0))


def exact_L_arctan(x):
    return -x / (math.pi * (1 + x**2))


def test_linefield_validation():
    x = np.linspace(0, 1, 5)
    with pytest.raises(ClosureError):
        LineField(x, x)
    with pytest.raises(ClosureError):
        LineField(x, x, far_field=(0, 1), gradient_period=(1, 1))
    with pytest.raises(ArgumentError):
        LineField(np.array([0, 1, 3.0]), np.zeros(3), far_field=(0, 0))
    with pytest.raises(ArgumentError):
        LineField(x, np.zeros(5), gradient_period=(1.0, 1.0))


def test_linefield_gradient_periodic_eval():
    x = np.linspace(0, 1, 65)
    w = LineField(x, x + 0.1 * np.sin(2 * math.pi * x), gradient_period=(1.0, 1.0))
    assert w.slope == 1.0
    assert float(w(2.3)) == pytest.approx(2.3 + 0.1 * math.sin(2 * math.pi * 2.3), abs=1e-6)


def test_pointwise_example_at_one():
    w = arctan_field()
    assert levy_khintchine_apply(w, 1.0) == pytest.approx(-1 / (2 * math.pi), abs=2e-4)


def test_pointwise_needs_far_field():
    x = np.linspace(0, 1, 9)
    with pytest.raises(ClosureError):
        levy_khintchine_apply(LineField(x, x, gradient_period=(1.0, 1.0)), 0.5)


def test_grid_operator_on_arctan():
    w = arctan_field()
    op = LevyOperator(w.x.size, w.h)
    Lw = op(w)
    m = np.abs(w.x) <= 10
    assert np.max(np.abs(Lw[m] - exact_L_arctan(w.x[m]))) <= 1e-4


def test_grid_operator_annihilates_constants():
    x = np.linspace(-5, 5, 201)
    op = LevyOperator(x.size, x[1] - x[0])
    assert np.max(np.abs(op.apply(np.full(x.size, 3.0), (3.0, 3.0)))) <= 1e-10


def test_grid_operator_symmetric_and_negative():
    op = LevyOperator(40, 0.1)
    D = op.dense()
    np.testing.assert_allclose(D, D.T)
    assert np.max(np.linalg.eigvalsh(D)) < 0
    assert np.max(np.abs(np.linalg.eigvalsh(D))) <= op.spectral_radius_bound


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_grid_operator_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    op = LevyOperator(50, 0.2)
    u, v = rng.normal(size=(2, 50))
    lhs = op.interior(a * u + b * v)
    rhs = a * op.interior(u) + b * op.interior(v)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * (1 + np.max(np.abs(rhs)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_grid_operator_comparison(seed):
    rng = np.random.default_rng(seed)
    op = LevyOperator(60, 0.1)
    u = rng.normal(size=60)
    v = u + np.abs(rng.normal(size=60))
    i = int(rng.integers(60))
    v[i] = u[i]
    assert op.apply(u, (0, 1))[i] <= op.apply(v, (0, 1))[i] + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(-20, 20))
def test_pointwise_odd_symmetry(x0):
    w = arctan_field()
    assert levy_khintchine_apply(w, x0) == pytest.approx(-levy_khintchine_apply(w, -x0), abs=1e-10)


def test_periodized_cosine_eigenvalue():
    m = 128
    x = np.linspace(0, 1, m + 1)
    w = LineField(x, np.cos(2 * math.pi * x), gradient_period=(1.0, 0.0))
    for x0 in (0.0, 0.1, 0.37):
        val = periodized_L(w, x0)
        assert val == pytest.approx(-2 * math.pi * math.cos(2 * math.pi * x0), abs=1e-3 * 2 * math.pi)


def test_periodic_operator_symbol():
    op = PeriodicLevyOperator(128, 1.0)
    x = np.arange(128) / 128
    Lc = op.apply_periodic(np.cos(2 * math.pi * x))
    np.testing.assert_allclose(Lc, -2 * math.pi * np.cos(2 * math.pi * x), atol=2e-3 * 2 * math.pi)
    assert np.allclose(op.apply_periodic(np.ones(128)), 0.0, atol=1e-10)
    # affine part of a gradient-periodic field is annihilated
    w = LineField(np.linspace(0, 1, 129), 2 * np.linspace(0, 1, 129), gradient_period=(1.0, 2.0))
    assert np.max(np.abs(op(w))) <= 1e-10


def test_periodized_needs_gradient_period():
    with pytest.raises(ClosureError):
        periodized_L(arctan_field(5, 0.1), 0.0)


def test_odd_integer_part():
    np.testing.assert_array_equal(odd_integer_part(np.array([0.0, 0.5, 1.0, -0.2])), [0.5, 0.5, 1.5, -0.5])


def pair_sum(jumps, i, pot):
    return sum(float(pot.force(jumps[i] - jumps[j])) for j in range(len(jumps)) if j != i)


def test_mdelta_two_jumps_example():
    pot = RegularizedLogPotential(0.1)
    assert mdelta_apply([0.0, 1.0], 0.0, pot) == pytest.approx(1 / (2 * math.pi))
    assert mdelta_apply([0.0, 1.0], 1.0, pot) == pytest.approx(-1 / (2 * math.pi))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=2, max_size=6, unique=True).filter(
        lambda v: np.min(np.diff(np.sort(v))) > 1e-6
    ),
    st.floats(0.01, 1.0),
    st.data(),
)
def test_mdelta_matches_pair_sum(jumps, delta, data):
    jumps = sorted(jumps)
    pot = RegularizedLogPotential(delta)
    i = data.draw(st.integers(0, len(jumps) - 1))
    assert mdelta_apply(jumps, jumps[i], pot) == pytest.approx(pair_sum(jumps, i, pot), abs=1e-6)


def test_mdelta_off_jump_raises():
    with pytest.raises(ConventionError):
        mdelta_apply([0.0, 1.0], 0.5, RegularizedLogPotential(0.1))


def test_periodic_force_matches_image_sum():
    box = 5.0
    x = np.array([0.3, 1.7, -2.2])
    k = np.arange(-200000, 200001)
    # symmetric partial sums of the image series converge to the cotangent
    brute = np.array([np.sum(-1 / (2 * math.pi * (xi + k * box))) for xi in x])
    np.testing.assert_allclose(periodic_interaction_force(x, box), brute, atol=1e-6)


def test_periodic_force_odd_and_zero_at_half_box():
    assert periodic_interaction_force(2.5, 5.0) == pytest.approx(0.0, abs=1e-15)
    assert periodic_interaction_force(1.2, 5.0) == pytest.approx(-periodic_interaction_force(-1.2, 5.0))
    with pytest.raises(DomainError):
        periodic_interaction_force(5.0, 5.0)


def test_periodic_force_regularized_inside_delta():
    pot = RegularizedLogPotential(0.5)
    box = 10.0
    f = periodic_interaction_force(0.1, box, pot)
    images = periodic_interaction_force(0.1, box) + 1 / (2 * math.pi * 0.1)
    assert f == pytest.approx(images + float(pot.force(0.1)))
