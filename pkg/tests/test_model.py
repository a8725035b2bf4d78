"""Input validation, Hermitian completion and channel offsets."""

import numpy as np
import pytest

from conftest import PERIOD, make_well

from epsolver import (FixedBloch, FixedEnergy, Grid, SolverConfig, SystemSpec,
                      UnitSystem, build_system, channel_offset)
from epsolver.errors import GridTooCoarse, HermiticityViolation, WrongMode
from epsolver.model import sample_constant, sample_cos


def test_build_accepts_well_fixture(well):
    assert well.grid.points == 512
    assert well.config.n_basis == 2
    assert set(well.spec.harmonics) == {1, -1}


def test_hermitian_completion_adds_conjugate():
    grid = Grid(length=np.pi, points=64)
    vg = sample_cos(grid, 0.1) + 0.05j * sample_cos(grid, 1.0, k=2.0)
    spec = SystemSpec(units=UnitSystem(), grid=grid, v0=sample_constant(grid, 0.0),
                      harmonics={1: vg}, d_z=PERIOD, lam=1.0, mode=FixedBloch(0.3))
    problem = build_system(spec, SolverConfig(n_basis=2, cutoff=1))
    assert -1 in problem.spec.harmonics
    assert np.array_equal(problem.spec.harmonics[-1], np.conjugate(vg))


def test_hermitian_completion_idempotent(well):
    again = build_system(well.spec, well.config)
    for g in well.spec.harmonics:
        assert np.array_equal(again.spec.harmonics[g], well.spec.harmonics[g])
        assert np.array_equal(again.scaled_harmonic(g), well.scaled_harmonic(g))


def test_conjugate_pair_mismatch_rejected():
    grid = Grid(length=np.pi, points=64)
    bad = 1.0j * np.ones(grid.points)
    spec = SystemSpec(units=UnitSystem(), grid=grid, v0=sample_constant(grid, 0.0),
                      harmonics={1: bad, -1: bad}, d_z=PERIOD, lam=1.0,
                      mode=FixedBloch(0.3))
    with pytest.raises(HermiticityViolation):
        build_system(spec, SolverConfig(n_basis=2, cutoff=1))


def test_grid_too_coarse():
    grid = Grid(length=np.pi, points=16)
    spec = SystemSpec(units=UnitSystem(), grid=grid, v0=sample_constant(grid, 0.0),
                      harmonics={1: sample_cos(grid, 1.0)}, d_z=PERIOD, lam=0.1,
                      mode=FixedBloch(0.3))
    with pytest.raises(GridTooCoarse):
        build_system(spec, SolverConfig(n_basis=5, cutoff=1))


def test_empty_harmonics_warns_with_coupling():
    grid = Grid(length=np.pi, points=64)
    spec = SystemSpec(units=UnitSystem(), grid=grid, v0=sample_constant(grid, 0.0),
                      harmonics={}, d_z=PERIOD, lam=0.5, mode=FixedBloch(0.3))
    with pytest.warns(UserWarning, match="decoupled"):
        build_system(spec, SolverConfig(n_basis=2, cutoff=1))


def test_harmonic_above_cutoff_rejected():
    grid = Grid(length=np.pi, points=64)
    spec = SystemSpec(units=UnitSystem(), grid=grid, v0=sample_constant(grid, 0.0),
                      harmonics={2: sample_cos(grid, 1.0)}, d_z=PERIOD, lam=0.1,
                      mode=FixedBloch(0.3))
    with pytest.raises(ValueError, match="cutoff"):
        build_system(spec, SolverConfig(n_basis=2, cutoff=1))


def test_channel_offset_values():
    # hbar = m = 1, d_z = 2*pi: recoil eps_p1 = 1/2, cross term K_z * g
    zero = make_well(k_z=0.0)
    assert channel_offset(zero, 1) == pytest.approx(0.5, abs=1e-15)
    assert channel_offset(zero, -1) == pytest.approx(0.5, abs=1e-15)
    assert channel_offset(zero, 1) == channel_offset(zero, -1)
    tilted = make_well(k_z=0.3)
    assert channel_offset(tilted, 1) == pytest.approx(0.8, abs=1e-15)
    assert channel_offset(tilted, -1) == pytest.approx(0.2, abs=1e-15)


def test_channel_offset_difference_identity():
    problem = make_well(cutoff=3, k_z=0.37,
                        harmonics={1: sample_cos(Grid(np.pi, 512), 1.0)})
    u = problem.units
    for g in (1, 2, 3):
        lhs = channel_offset(problem, g) - channel_offset(problem, -g)
        rhs = 4.0 * np.pi * u.hbar**2 * 0.37 * g / (u.mass * PERIOD)
        assert lhs == pytest.approx(rhs, abs=1e-14)


def test_channel_offset_wrong_mode():
    problem = make_well(mode=FixedEnergy(energy=6.0), aux="diagonal")
    with pytest.raises(WrongMode):
        channel_offset(problem, 1)


def test_lambda_zero_leaves_background_and_offsets():
    fixed = make_well(lam=0.1)
    free = make_well(lam=0.0)
    assert np.array_equal(fixed.v0, free.v0)
    assert channel_offset(fixed, 1) == channel_offset(free, 1)
    assert np.all(free.scaled_harmonic(1) == 0.0)
    assert np.max(np.abs(fixed.scaled_harmonic(1))) > 0.0


def test_unit_and_grid_invariants():
    with pytest.raises(ValueError):
        UnitSystem(hbar=0.0)
    with pytest.raises(ValueError):
        Grid(length=-1.0, points=64)
    with pytest.raises(ValueError):
        Grid(length=1.0, points=8)
    with pytest.raises(ValueError):
        SolverConfig(n_basis=0)
    with pytest.raises(ValueError):
        SolverConfig(scan_window=(2.0, 1.0))
    assert UnitSystem() == UnitSystem(hbar=1.0, mass=1.0)
