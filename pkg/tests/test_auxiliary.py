"""Unperturbed/auxiliary eigenproblems, free-motion energies, support restriction."""

import numpy as np
import pytest

from conftest import make_well

from epsolver import (FixedEnergy, channel_offset, free_motion_energy,
                      restricted_ground_state, solve_q_block, solve_unperturbed)
from epsolver.auxiliary import apply_kinetic, assemble_q_block, harmonic_overlaps
from epsolver.effective_potential import build_operator, pole_table
from epsolver.errors import NotNormalized, SupportTooSmall, WrongMode
from epsolver.model import Grid, sample_cos, sample_gaussian


def test_hard_wall_box_energies(well):
    basis = solve_unperturbed(well)
    for n, exact in ((1, 0.5), (2, 2.0)):
        assert basis.energies[n - 1] == pytest.approx(exact, rel=1e-3)


def test_periodic_free_spectrum_merges_pairs():
    problem = make_well(boundary="periodic", length=2.0 * np.pi, harmonics={},
                        lam=0.0, n_basis=2, n_aux=5)
    basis = solve_unperturbed(problem)
    merged = basis.merged(problem.config.merge_tol)
    values = [v for v, _ in merged]
    mults = [m for _, m in merged]
    assert values[0] == pytest.approx(0.0, abs=1e-10)
    assert mults[:3] == [1, 2, 2]
    assert values[1] == pytest.approx(0.5, rel=1e-3)
    assert values[2] == pytest.approx(2.0, rel=1e-3)


def test_orthonormality(well):
    basis = solve_unperturbed(well)
    assert basis.gram_deviation() < 1e-10
    periodic = make_well(boundary="periodic", length=2.0 * np.pi, harmonics={}, lam=0.0)
    assert solve_unperturbed(periodic).gram_deviation() < 1e-10


def _bump_eigenvalues(points, n_states=3):
    grid = Grid(length=np.pi, points=points)
    problem = make_well(points=points, lam=0.0, harmonics={}, aux="diagonal",
                        v0_value=0.0, n_basis=1, n_aux=n_states)
    v0 = 0.2 * np.cos(grid.x) ** 2
    from dataclasses import replace
    from epsolver import build_system
    rebuilt = build_system(replace(problem.spec, v0=v0), problem.config)
    return solve_unperturbed(rebuilt).energies[:n_states]


def test_grid_self_convergence_ratio_and_richardson():
    # spacing halves exactly for 257 -> 513 -> 1025 points
    e_c = _bump_eigenvalues(257)
    e_m = _bump_eigenvalues(513)
    e_f = _bump_eigenvalues(1025)
    for n in range(3):
        ratio = (e_c[n] - e_m[n]) / (e_m[n] - e_f[n])
        assert 3.5 <= ratio <= 4.5
    rich_cm = (4.0 * e_m - e_c) / 3.0
    rich_mf = (4.0 * e_f - e_m) / 3.0
    assert np.max(np.abs(rich_cm - rich_mf)) < 1e-6


def test_q_block_decoupled_limit():
    problem = make_well(lam=0.0)
    basis = solve_unperturbed(problem)
    sol = solve_q_block(problem, basis)
    expected = sorted(basis.energies[n] + channel_offset(problem, g)
                      for g in (-1, 1) for n in range(2))
    assert np.allclose(sol.q_energies, expected, atol=1e-12)
    assert np.max(np.abs(sol.q_couplings)) == 0.0


def test_q_block_dimensions(well):
    basis = solve_unperturbed(well)
    sol = solve_q_block(well, basis)
    assert sol.q_energies.shape == (4,)
    assert sol.q_couplings.shape == (4, 2)
    assert np.all(np.diff(sol.q_energies) >= 0)


def _dense_q_oracle(problem, basis):
    """Channel-block assembly straight from quadrature sums, kept independent
    of the production Q-block code path."""
    nb = problem.config.n_basis
    h = problem.grid.spacing
    states = basis.states[:nb]
    channels = problem.config.channels
    dim = nb * len(channels)
    dense = np.zeros((dim, dim), dtype=complex)
    for i, gi in enumerate(channels):
        si = slice(i * nb, (i + 1) * nb)
        dense[si, si] = np.diag(basis.energies[:nb] + channel_offset(problem, gi))
        for j, gj in enumerate(channels):
            if i == j:
                continue
            vg = problem.scaled_harmonic(gi - gj)
            dense[si, j * nb:(j + 1) * nb] = h * (states.conj() * vg) @ states.T
    return dense


def test_q_block_matches_dense_assembly(well):
    basis = solve_unperturbed(well)
    sol = solve_q_block(well, basis)
    dense = _dense_q_oracle(well, basis)
    assert dense.shape == (4, 4)
    assert np.allclose(np.linalg.eigvalsh(dense), sol.q_energies, atol=1e-12)


def test_q_block_matches_dense_assembly_with_cross_coupling():
    from conftest import make_two_harmonic_well
    problem = make_two_harmonic_well()
    basis = solve_unperturbed(problem)
    sol = solve_q_block(problem, basis)
    dense = _dense_q_oracle(problem, basis)
    # channels +-1, +-2 really couple through the g=1 and g=2 harmonics here
    off = dense - np.diag(np.diag(dense))
    assert np.max(np.abs(off)) > 1e-4
    assert np.allclose(np.linalg.eigvalsh(dense), sol.q_energies, atol=1e-12)


def test_q_block_wrong_modes(well):
    basis = solve_unperturbed(well)
    diag = make_well(aux="diagonal")
    with pytest.raises(WrongMode):
        solve_q_block(diag, solve_unperturbed(diag))
    energy_mode = make_well(mode=FixedEnergy(energy=6.0), aux="diagonal")
    with pytest.raises(WrongMode):
        solve_q_block(energy_mode, basis)


def test_exact_block_poles_degenerate_to_diagonal_at_lambda_zero():
    exact = make_well(lam=0.0, aux="exactblock")
    diag = make_well(lam=0.0, aux="diagonal", n_aux=2)
    table_exact = pole_table(build_operator(exact))
    table_diag = pole_table(build_operator(diag))
    assert np.allclose(sorted(e.value for e in table_exact.entries),
                       sorted(e.value for e in table_diag.entries), atol=1e-12)


def test_free_motion_energy_well_ground_state(well):
    basis = solve_unperturbed(well)
    assert free_motion_energy(basis.states[0], well) == pytest.approx(0.5, abs=1e-3)


def test_free_motion_energy_plane_wave():
    problem = make_well(boundary="periodic", length=2.0 * np.pi, harmonics={}, lam=0.0)
    x = problem.grid.x
    psi = np.exp(2.0j * x) / np.sqrt(2.0 * np.pi)
    assert free_motion_energy(psi, problem) == pytest.approx(2.0, abs=1e-3)


def test_free_motion_energy_not_normalized(well):
    with pytest.raises(NotNormalized):
        free_motion_energy(np.ones(well.grid.points), well)


def test_free_motion_energy_matches_quadratic_form(well):
    rng = np.random.default_rng(5)
    psi = rng.normal(size=well.grid.points) + 1j * rng.normal(size=well.grid.points)
    psi /= np.sqrt(well.grid.spacing * np.sum(np.abs(psi) ** 2))
    direct = well.grid.spacing * np.vdot(psi, apply_kinetic(well, psi))
    assert free_motion_energy(psi, well) == pytest.approx(float(np.real(direct)), abs=1e-12)


def test_restricted_ground_state_scaling(well):
    assert restricted_ground_state(well, 1.0).eta == pytest.approx(0.5, abs=1e-3)
    assert restricted_ground_state(well, 0.5).eta == pytest.approx(2.0, abs=1e-2)
    assert restricted_ground_state(well, 0.25).eta == pytest.approx(8.0, abs=0.1)


def test_restricted_state_support_and_norm(well):
    state = restricted_ground_state(well, 0.5)
    wall = int(round(0.5 * (well.grid.points - 1)))
    assert np.all(state.state[wall:] == 0.0)
    norm = well.grid.spacing * np.sum(state.state ** 2)
    assert norm == pytest.approx(1.0, abs=1e-10)


def test_restricted_monotonicity(well):
    ladder = [1.0, 0.8, 0.6, 0.45, 0.3, 0.2, 0.1]
    etas = [restricted_ground_state(well, d).eta for d in ladder]
    assert np.all(np.diff(etas) > 0)


def test_restricted_errors(well):
    with pytest.raises(SupportTooSmall):
        restricted_ground_state(well, 0.01)
    with pytest.raises(ValueError):
        restricted_ground_state(well, 1.5)
    periodic = make_well(boundary="periodic", length=2.0 * np.pi, harmonics={}, lam=0.0)
    with pytest.raises(WrongMode):
        restricted_ground_state(periodic, 0.5)


def test_harmonic_overlap_adjointness():
    problem = make_well(harmonics={1: sample_gaussian(Grid(np.pi, 512), 1.0, 1.9, 0.5)
                                   + 0.3j * sample_cos(Grid(np.pi, 512), 1.0, k=2.0)})
    basis = solve_unperturbed(problem)
    f_plus = harmonic_overlaps(problem, basis, 1)
    f_minus = harmonic_overlaps(problem, basis, -1)
    assert np.max(np.abs(f_minus - f_plus.conj().T)) < 1e-12
