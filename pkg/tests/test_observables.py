import numpy as np
import pytest

from qet.grid import gaussian_event, make_grid, plane_wave
from qet.observables import (FD, IDENTITY, POSITION, SPECTRAL, TIME,
                             HamiltonianSpec, OperatorSpec, Potential, apply,
                             continuity_residual, current_density, energy_op,
                             hamiltonian_op, marginal_density,
                             masked_expectation, momentum_op,
                             operator_density, uncertainty)


def small_grid():
    return make_grid(0.0, 8.0, 128, -8.0, 8.0, 128, 1.0)


def test_plane_wave_is_energy_momentum_eigenfunction():
    g = small_grid()
    E, p = g.energies[70], g.momenta[40]
    pw = plane_wave(g, E, p)
    # plane waves on the dual grid are periodic, so spectral schemes are exact
    e_psi = apply(energy_op(SPECTRAL), g, pw.values)
    np.testing.assert_allclose(e_psi, E * pw.values, atol=1e-8 * abs(E))
    p_psi = apply(momentum_op(SPECTRAL), g, pw.values)
    np.testing.assert_allclose(p_psi, p * pw.values, atol=1e-8 * abs(p))


def test_multiplicative_operators():
    g = small_grid()
    ev = gaussian_event(g, 4.0, 0.5, 0.0, 1.0)
    t_psi = apply(TIME, g, ev.values)
    np.testing.assert_allclose(t_psi, g.times[:, None] * ev.values)
    x_psi = apply(POSITION, g, ev.values)
    np.testing.assert_allclose(x_psi, g.xs[None, :] * ev.values)


def test_identity_density_is_particle_density():
    g = small_grid()
    ev = gaussian_event(g, 4.0, 0.5, 0.0, 1.0, 1.0, 2.0)
    dens = operator_density(IDENTITY, g, ev.values)
    np.testing.assert_allclose(dens, np.abs(ev.values) ** 2, atol=1e-15)
    assert np.all(dens >= 0)


def test_position_density():
    g = small_grid()
    ev = gaussian_event(g, 4.0, 0.5, 1.0, 1.0)
    dens = operator_density(POSITION, g, ev.values)
    np.testing.assert_allclose(dens, g.xs[None, :] * np.abs(ev.values) ** 2,
                               atol=1e-15)


def test_momentum_density_on_plane_wave_is_uniform():
    g = small_grid()
    p = g.momenta[40]
    pw = plane_wave(g, g.energies[70], p)
    dens = operator_density(momentum_op(), g, pw.values)
    np.testing.assert_allclose(dens, p / (2 * np.pi) ** 2, atol=1e-10)


def test_marginal_density_indexing():
    g = small_grid()
    ev = gaussian_event(g, 4.0, 0.5, 0.0, 1.0)
    marg = marginal_density(IDENTITY, g, ev.values)
    assert marg.shape == (g.n_t,)
    assert marginal_density(IDENTITY, g, ev.values, 64) == pytest.approx(marg[64])
    assert np.sum(marg) * g.dt == pytest.approx(1.0, abs=1e-12)


def test_current_density_real_field_vanishes():
    g = small_grid()
    psi = np.exp(-(g.times[:, None] - 4) ** 2 - g.xs[None, :] ** 2).astype(complex)
    j = current_density(g, psi, 1.0)
    assert np.max(np.abs(j)) < 1e-12


def test_current_density_plane_wave():
    g = small_grid()
    p, m = g.momenta[40], 1.3
    pw = plane_wave(g, g.energies[70], p)
    j = current_density(g, pw.values, m)
    np.testing.assert_allclose(j, (p / m) / (2 * np.pi) ** 2, atol=1e-10)


def test_current_density_carrier_momentum():
    # integral of j over x ~ (p0/m) * rho for a wavepacket with carrier p0
    g = small_grid()
    p0, m = 1.5, 1.0
    ev = gaussian_event(g, 4.0, 0.5, 0.0, 1.0, 0.0, p0)
    j_marg = np.sum(current_density(g, ev.values, m), axis=1) * g.dx
    rho = marginal_density(IDENTITY, g, ev.values)
    np.testing.assert_allclose(j_marg, (p0 / m) * rho, atol=1e-6)


def test_continuity_on_exact_free_solution():
    # a single plane wave solves the free equations exactly; only the FD
    # truncation of the smooth phase remains
    g = small_grid()
    p = g.momenta[68]
    omega = p ** 2 / 2
    psi = np.exp(1j * (p * g.xs[None, :] - omega * g.times[:, None]))
    res = continuity_residual(g, psi, HamiltonianSpec(1.0, Potential.zero()))
    assert np.max(np.abs(res)) < 1e-10


def test_hamiltonian_matrix_matches_apply():
    g = make_grid(0.0, 2.0, 8, -6.0, 6.0, 48, 1.0)
    ham = HamiltonianSpec(1.0, Potential.harmonic(0.7))
    h = ham.matrix(g)
    np.testing.assert_allclose(h, h.conj().T, atol=1e-13)
    rng = np.random.default_rng(1)
    f = rng.standard_normal((g.n_t, g.n_x)) + 1j * rng.standard_normal((g.n_t, g.n_x))
    np.testing.assert_allclose(ham.apply(g, f, FD), f @ h.T, atol=1e-10)


def test_potential_from_field_interpolates():
    g = make_grid(0.0, 4.0, 16, -2.0, 2.0, 8, 1.0)
    field = np.outer(g.times, np.ones(g.n_x))
    v = Potential.from_field(g, field)
    np.testing.assert_allclose(v.at(1.125, g.xs), 1.125, atol=1e-12)


def test_commutator_energy_time():
    # (E t - t E) f = i hbar f up to a second-order FD remainder
    g = small_grid()
    ev = gaussian_event(g, 4.0, 0.7, 0.0, 1.5)
    f = ev.values
    e = energy_op(FD)
    comm = apply(e, g, apply(TIME, g, f)) - apply(TIME, g, apply(e, g, f))
    err = np.max(np.abs(comm - 1j * g.hbar * f))
    assert err < 1e-3


def test_commutator_momentum_position():
    g = small_grid()
    ev = gaussian_event(g, 4.0, 0.7, 0.0, 1.5)
    f = ev.values
    p = momentum_op(FD)
    comm = apply(p, g, apply(POSITION, g, f)) - apply(POSITION, g, apply(p, g, f))
    # x jumps by the box length across the periodic wrap, so the identity
    # only holds away from the boundary columns
    err = np.max(np.abs(comm + 1j * g.hbar * f)[:, 1:-1])
    assert err < 1e-3


def test_uncertainty_gaussian_width():
    g = small_grid()
    sigma_x = 1.2
    ev = gaussian_event(g, 4.0, 0.5, 0.0, sigma_x)
    assert uncertainty(POSITION, g, ev.values) == pytest.approx(sigma_x, rel=1e-3)
    assert uncertainty(TIME, g, ev.values) == pytest.approx(0.5, rel=1e-3)


def test_uncertainty_clamps_tiny_negative_variance():
    # identity operator: variance is exactly zero up to round-off
    g = small_grid()
    ev = gaussian_event(g, 4.0, 0.5, 0.0, 1.0)
    assert uncertainty(IDENTITY, g, ev.values) == 0.0


def test_masked_expectation_identity_is_one():
    g = small_grid()
    ev = gaussian_event(g, 4.0, 0.5, 0.0, 1.0)
    mask = np.zeros(g.shape(), dtype=bool)
    mask[50:70] = True
    assert masked_expectation(IDENTITY, g, ev.values, mask) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        masked_expectation(IDENTITY, g, ev.values, np.zeros(g.shape(), dtype=bool))


def test_operator_spec_validation():
    with pytest.raises(ValueError):
        OperatorSpec("nonsense")
    with pytest.raises(ValueError):
        OperatorSpec("multiplicative")
    with pytest.raises(ValueError):
        OperatorSpec("hamiltonian")
    with pytest.raises(ValueError):
        HamiltonianSpec(-1.0)


def test_hamiltonian_op_on_eigenstate():
    g = make_grid(0.0, 2.0, 8, -8.0, 8.0, 64, 1.0)
    ham = HamiltonianSpec(1.0, Potential.harmonic(1.0))
    evals, vecs = np.linalg.eigh(ham.matrix(g))
    phi = vecs[:, 0] / np.sqrt(g.dx)
    field = np.tile(phi, (g.n_t, 1)).astype(complex)
    h_psi = apply(hamiltonian_op(ham, FD), g, field)
    np.testing.assert_allclose(h_psi, evals[0] * field, atol=1e-10)
