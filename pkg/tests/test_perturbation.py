import numpy as np
import pytest

from qet.grid import gaussian_event, inner_product, make_grid, sharp_time_event
from qet.evolution import RETARDED, EvolutionKernel, orbit
from qet.observables import HamiltonianSpec, Potential
from qet.perturbation import (DiscreteContinuumModel, ScatteringSetup,
                              born_smatrix, dyson_orbit,
                              dyson_recursion_residual, exact_smatrix,
                              finite_horizon_delta, fit_decay_rate,
                              golden_rule_rate, survival_probability,
                              transition_amplitude)


def pert_setup(g_coupling=0.3, n_t=256, n_x=64):
    grid = make_grid(0.0, 4.0, n_t, -8.0, 8.0, n_x, 1.0)
    free = HamiltonianSpec(1.0, Potential.zero())
    bump = Potential.gaussian_barrier(g_coupling, 1.0)
    full = HamiltonianSpec(1.0, bump)
    return grid, free, full, bump


def test_dyson_order_zero_is_free_retarded_orbit():
    grid, free, _, bump = pert_setup()
    k0 = EvolutionKernel(grid, free)
    ev = gaussian_event(grid, 1.2, 0.2, -2.0, 1.0, 0.0, 1.5)
    series = dyson_orbit(k0, bump, ev, order=0)
    free_orbit = orbit(k0, ev, RETARDED)
    np.testing.assert_allclose(series.values, free_orbit.values, atol=1e-14)


def test_dyson_zero_potential_collapses_to_free():
    grid, free, _, _ = pert_setup()
    k0 = EvolutionKernel(grid, free)
    ev = gaussian_event(grid, 1.2, 0.2, -2.0, 1.0, 0.0, 1.5)
    series = dyson_orbit(k0, Potential.zero(), ev, order=3)
    free_orbit = orbit(k0, ev, RETARDED)
    np.testing.assert_allclose(series.values, free_orbit.values, atol=1e-14)


def test_dyson_series_truncation_scaling():
    # norm of the order-(n+1) correction scales as g^{n+1}
    diffs = {}
    for g_val in (0.2, 0.1):
        grid, free, _, bump = pert_setup(g_val)
        k0 = EvolutionKernel(grid, free)
        ev = gaussian_event(grid, 1.2, 0.2, -2.0, 1.0, 0.0, 1.5)
        o1 = dyson_orbit(k0, bump, ev, order=1)
        o2 = dyson_orbit(k0, bump, ev, order=2)
        diffs[g_val] = np.linalg.norm(o2.values - o1.values)
    ratio = diffs[0.2] / diffs[0.1]
    assert 2.0 < ratio < 8.0          # g^2 scaling of the second-order term


def test_dyson_converges_to_exact_evolution():
    grid, free, full, bump = pert_setup(0.1)
    k0 = EvolutionKernel(grid, free)
    k_full = EvolutionKernel(grid, full)
    ev = gaussian_event(grid, 1.2, 0.2, -2.0, 1.0, 0.0, 1.5)
    exact = orbit(k_full, ev, RETARDED)
    errs = [np.max(np.abs(dyson_orbit(k0, bump, ev, order=n).values
                          - exact.values)) for n in (0, 1, 2)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 3e-3 * np.max(np.abs(exact.values))


def test_transition_amplitude_orthogonal_zeroth_order():
    # between two different eigenstates of the unperturbed Hamiltonian the
    # zeroth-order amplitude vanishes (free evolution preserves orthogonality)
    grid = make_grid(0.0, 4.0, 64, -8.0, 8.0, 48, 1.0)
    ham0 = HamiltonianSpec(1.0, Potential.harmonic(1.0))
    k0 = EvolutionKernel(grid, ham0)
    _, vecs = np.linalg.eigh(ham0.matrix(grid))
    phi0 = (vecs[:, 0] / np.sqrt(grid.dx)).astype(complex)
    phi1 = (vecs[:, 1] / np.sqrt(grid.dx)).astype(complex)
    initial = sharp_time_event(grid, 0.5, phi0)
    final = sharp_time_event(grid, 3.0, phi1)
    amp0 = transition_amplitude(k0, Potential.zero(), initial, final, order=0)
    assert abs(amp0) < 1e-10


def test_transition_amplitude_first_order_oracle():
    # direct time-ordered double quadrature of the first-order kernel
    grid, free, _, bump = pert_setup(n_t=64, n_x=32)
    k0 = EvolutionKernel(grid, free)
    initial = gaussian_event(grid, 0.8, 0.15, -2.0, 1.0, 0.0, 1.0,
                             mass_tol=1e-4)
    final = gaussian_event(grid, 3.2, 0.15, 0.0, 1.0, 0.0, 1.0, mass_tol=1e-4)
    amp = transition_amplitude(k0, bump, initial, final, order=1)
    # oracle: A0 + (1/i hbar) sum_{i >= j} <f_i|U(i,k)V_k U(k,j)|s_j> dt^2 ...
    # assembled as <final | G0 V G0 initial> with explicit double loops
    free_orb = orbit(k0, initial, RETARDED).values
    v = bump.sample(grid)
    driven = v * free_orb / 1j
    second = np.zeros_like(free_orb)
    for i in range(grid.n_t):
        acc = np.zeros(grid.n_x, dtype=complex)
        for j in range(i + 1):
            acc += k0.evolve(driven[j], grid.times[j], grid.times[i]) * grid.dt
        second[i] = acc
    direct = np.sum(np.conj(final.values) * (free_orb + second)) \
        * grid.dt * grid.dx
    assert amp == pytest.approx(direct, abs=1e-12)


def test_first_order_kernel_is_time_ordered():
    # the first-order correction must vanish before the source acts
    grid, free, _, bump = pert_setup()
    k0 = EvolutionKernel(grid, free)
    psi0 = np.exp(-grid.xs ** 2 / 4).astype(complex)
    psi0 /= np.sqrt(np.sum(np.abs(psi0) ** 2) * grid.dx)
    t0 = 2.0
    ev = sharp_time_event(grid, t0, psi0)
    o0 = dyson_orbit(k0, bump, ev, order=0)
    o1 = dyson_orbit(k0, bump, ev, order=1)
    i0 = grid.time_index(t0)
    correction = o1.values - o0.values
    # theta(0) = 1: the coincident slice t = t0 already feels the potential,
    # everything strictly earlier must not
    assert np.max(np.abs(correction[:i0])) < 1e-14
    assert np.max(np.abs(correction[i0:])) > 1e-6


def test_dyson_recursion_identity():
    grid, free, full, bump = pert_setup()
    kf = EvolutionKernel(grid, full)
    k0 = EvolutionKernel(grid, free)
    ev = gaussian_event(grid, 1.2, 0.2, -2.0, 1.0, 0.0, 1.5)
    assert dyson_recursion_residual(kf, k0, bump, ev) < 1e-10


def test_golden_rule_formula():
    model = DiscreteContinuumModel.flat(0.0, 0.1, -1.0, 1.0, 201)
    rate = golden_rule_rate(model)
    assert rate.rate == pytest.approx(2 * np.pi * 0.01, rel=1e-12)
    # the resolved hat integrates back to the rate
    total = np.sum(rate.resolved * model.density * model.d_omega)
    assert total == pytest.approx(rate.rate, rel=1e-12)


def test_golden_rule_outside_support():
    model = DiscreteContinuumModel.flat(3.0, 0.1, -1.0, 1.0, 201)
    assert golden_rule_rate(model).rate == 0.0


def test_golden_rule_against_diagonalization():
    model = DiscreteContinuumModel.flat(0.0, 0.05, -2.0, 2.0, 800)
    rate = golden_rule_rate(model).rate
    times = np.linspace(0.1 / rate, 1.0 / rate, 120)
    surv = survival_probability(model, 0, times)
    fitted = fit_decay_rate(times, surv)
    assert fitted == pytest.approx(rate, rel=0.05)


def test_finite_horizon_delta():
    T = 30.0
    assert finite_horizon_delta(0.0, T) == pytest.approx(T / (2 * np.pi))
    # integrates to one over frequency
    w = np.linspace(-200, 200, 400001)
    vals = finite_horizon_delta(w, T)
    assert np.trapezoid(vals, w) == pytest.approx(1.0, abs=1e-3)
    # first zero at d_omega = 2 pi / T
    assert finite_horizon_delta(2 * np.pi / T, T) == pytest.approx(0.0, abs=1e-15)


def scattering(g_val=0.1):
    return ScatteringSetup(1.0, Potential.gaussian_barrier(g_val, 1.0),
                           -20.0, 20.0, 128, horizon=20.0)


def test_born_free_theory_is_diagonal():
    setup = ScatteringSetup(1.0, Potential.zero(), -20.0, 20.0, 128,
                            horizon=20.0)
    p = setup.momenta[70]
    q = setup.momenta[72]
    s_diag = born_smatrix(setup, p, p)
    assert abs(s_diag) == pytest.approx(1 / setup.d_momentum, rel=1e-12)
    assert born_smatrix(setup, q, p) == 0.0


def test_born_gaussian_matrix_element():
    # closed-form Fourier transform of the Gaussian barrier
    g_val, width = 0.1, 1.0
    setup = scattering(g_val)
    p, q = setup.momenta[70], setup.momenta[60]
    dp = p - q
    expected = g_val * width * np.sqrt(2 * np.pi) \
        * np.exp(-(dp * width) ** 2 / 2) / (2 * np.pi)
    assert setup.potential_matrix_element(p, q) == pytest.approx(expected,
                                                                 rel=1e-10)


def test_born_rejects_off_grid_momentum():
    setup = scattering()
    with pytest.raises(ValueError):
        born_smatrix(setup, 1.0, setup.momenta[70])


def test_born_matches_exact_at_weak_coupling():
    diffs = {}
    for g_val in (0.1, 0.05):
        setup = scattering(g_val)
        p = setup.momenta[71]
        diffs[g_val] = abs(born_smatrix(setup, p, p)
                           - exact_smatrix(setup, p, p, n_t=2000))
    assert diffs[0.1] / diffs[0.05] == pytest.approx(4.0, abs=2.0)
