import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dislocscale.core import make_sinusoidal_potential, sine_stress
from dislocscale.errors import ArgumentError, DivergenceError, DomainError, StabilityError
from dislocscale.fk import (
    AffineStrain,
    LatticeDomain,
    affine_energy_density,
    bulk_residual,
    continuum_displacement_u0,
    fk_boundary_trace,
    fk_energy,
    fk_evolve,
    fk_stability_bound,
    fk_step,
    make_lattice_state,
    single_dislocation_stress,
    step_extension,
)
from dislocscale.transitions import arctan_lattice_data


def test_affine_strain_energy():
    s = AffineStrain(0.3, 0.4)
    assert s.e12 == s.e21 == 0.2
    assert affine_energy_density(s) == pytest.approx(0.125)
    np.testing.assert_allclose(s.hooke_stress(), [[0.3, 0.4], [0.4, 0.0]])


def test_u0_trace_and_antisymmetry():
    assert continuum_displacement_u0(-1.0, 0.0) == 0.0
    assert continuum_displacement_u0(1.0, 0.0) == 0.5
    x1, x2 = 0.7, 1.3
    assert continuum_displacement_u0(x1, -x2) == pytest.approx(-continuum_displacement_u0(x1, x2))
    with pytest.raises(DomainError):
        continuum_displacement_u0(0.0, 0.0)


def test_u0_is_harmonic():
    h = 1e-3
    x1, x2 = 0.4, 0.9
    f = continuum_displacement_u0
    lap = (f(x1 + h, x2) + f(x1 - h, x2) + f(x1, x2 + h) + f(x1, x2 - h) - 4 * f(x1, x2)) / h**2
    assert abs(lap) < 1e-5


def test_single_dislocation_stress():
    assert single_dislocation_stress(1.0) == pytest.approx(-1 / (2 * math.pi))
    with pytest.raises(DomainError):
        single_dislocation_stress(0.0)


def test_step_extension_limits():
    v = step_extension(np.array([-100.0, 100.0]), np.array([1.0, 1.0]), [0.0, 1.0], base=2.0)
    np.testing.assert_allclose(v, [2.0, 4.0], atol=1e-2)


def test_domain_validation():
    with pytest.raises(ArgumentError):
        LatticeDomain(0.3, 1.0, 2.0)
    with pytest.raises(ArgumentError):
        LatticeDomain(1.0, 2.0, 7.0)  # too few rows above the slip line
    with pytest.raises(ArgumentError):
        LatticeDomain(1.0, 2.0, 8.0, truncation="bogus")
    assert LatticeDomain(1.0, 2.0, 0.0).chain


def _laplace_oracle(u):
    """Dense solve of the 5-point Laplace problem with u's outer ring as Dirichlet data."""
    ny, nx = u.shape
    idx = {}
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            idx[j, i] = len(idx)
    A = np.zeros((len(idx), len(idx)))
    b = np.zeros(len(idx))
    for (j, i), k in idx.items():
        A[k, k] = -4
        for jj, ii in ((j + 1, i), (j - 1, i), (j, i + 1), (j, i - 1)):
            if (jj, ii) in idx:
                A[k, idx[jj, ii]] = 1
            else:
                b[k] -= u[jj, ii]
    sol = np.linalg.solve(A, b)
    out = u.copy()
    for (j, i), k in idx.items():
        out[j, i] = sol[k]
    return out


def test_hand_rolled_frozen_step_5x9():
    pot = make_sinusoidal_potential()
    dom = LatticeDomain(1.0, 2.0, 8.0, truncation="frozen")
    assert (dom.ny, dom.nx) == (9, 5)
    s = make_lattice_state(dom, lambda X1, X2: np.where(X1 >= 0, 1.0, 0.0) + 0 * X2, 1)
    np.testing.assert_array_equal(s.u[0], [0, 0, 1, 1, 1])
    dt = 0.1
    b = s.u[0]
    left = np.concatenate([[s.ghost[0]], b[:-1]])
    right = np.concatenate([b[1:], [s.ghost[1]]])
    expect_row = b + dt * (-pot.dW(b) + (left + right + s.u[1] - 3 * b))
    new = fk_step(s, dom, pot, None, 1.0, dt)
    np.testing.assert_allclose(new.u[0], expect_row, atol=1e-14)
    # Dirichlet ring untouched, interior harmonic
    np.testing.assert_array_equal(new.u[-1], s.u[-1])
    np.testing.assert_array_equal(new.u[1:, 0], s.u[1:, 0])
    np.testing.assert_allclose(new.u, _laplace_oracle(new.u), atol=1e-12)
    assert bulk_residual(new) <= 1e-10


def test_stability_error():
    pot = make_sinusoidal_potential()
    dom = LatticeDomain(1.0, 2.0, 8.0)
    s = make_lattice_state(dom, arctan_lattice_data(2.0), 1)
    with pytest.raises(StabilityError):
        fk_step(s, dom, pot, None, 1.0, 1.01 * fk_stability_bound(dom, pot))


def test_divergence_detected():
    pot = make_sinusoidal_potential()
    dom = LatticeDomain(1.0, 2.0, 0.0)
    s = make_lattice_state(dom, lambda X1, X2: np.where(X1 > 0, 1.0, 0.0) + 0 * X2, 1)
    s.u[0, 2] = 3.0
    with pytest.raises(DivergenceError):
        fk_step(s, dom, pot, None, 1.0, 0.1)


def test_energy_decreases_frozen():
    pot = make_sinusoidal_potential()
    dom = LatticeDomain(0.5, 4.0, 5.0, truncation="frozen")
    s = make_lattice_state(dom, arctan_lattice_data(1.0), 1)
    E = [fk_energy(s, dom, pot)]
    fk_evolve(s, dom, pot, None, 1.0, 2.0, sample_times=list(np.linspace(0.1, 2.0, 20)), on_sample=lambda st_: E.append(fk_energy(st_, dom, pot)))
    assert np.all(np.diff(E) <= 1e-12)


def test_chain_evolution_and_trace():
    pot = make_sinusoidal_potential()
    dom = LatticeDomain(0.25, 3.0, 0.0)
    s = make_lattice_state(dom, lambda X1, X2: 0.5 + np.arctan(X1) / math.pi + 0 * X2, 1)
    E0 = fk_energy(s, dom, pot)
    s = fk_evolve(s, dom, pot, sine_stress(0.1), 1.0, 1.0)
    tr = fk_boundary_trace(s)
    assert tr.far_field == (0.0, 1.0)
    assert tr.x.size == dom.nx
    assert np.all(np.diff(tr.values) > 0)
    assert np.isfinite(fk_energy(s, dom, pot)) and E0 > 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["frozen", "poisson"]))
def test_lattice_comparison(seed, truncation):
    pot = make_sinusoidal_potential()
    rng = np.random.default_rng(seed)
    dom = LatticeDomain(0.5, 3.0, 5.0, truncation=truncation)
    a = make_lattice_state(dom, arctan_lattice_data(2.0), 1)
    b = a.copy()
    b.u[0] += np.abs(rng.normal(size=dom.nx)) * 0.05
    a = fk_evolve(a, dom, pot, None, 1.0, 0.5)
    b = fk_evolve(b, dom, pot, None, 1.0, 0.5)
    assert np.all(b.u >= a.u - 1e-12)


def test_poisson_truncation_is_exact_for_harmonic_data():
    dom = LatticeDomain(0.25, 4.0, 4.0, truncation="poisson")
    s = make_lattice_state(dom, arctan_lattice_data(2.0), 1)
    Xg, Yg = dom.mesh()
    exact = arctan_lattice_data(2.0)(Xg, Yg)
    top = s.u[-1]
    # away from the truncation corners the Poisson data reproduce the harmonic extension
    m = np.abs(dom.X1) <= 2.0
    assert np.max(np.abs(top[m] - exact[-1][m])) < 2e-2
