"""Shared problem builders for the test suite."""

import numpy as np
import pytest

from epsolver import (FixedBloch, FixedEnergy, Grid, SolverConfig, SystemSpec,
                      UnitSystem, build_system)
from epsolver.model import sample_constant, sample_cos, sample_gaussian

WELL_LENGTH = np.pi
PERIOD = 2.0 * np.pi


def make_well(n_basis=2, cutoff=1, aux="exactblock", lam=0.1, k_z=0.3, points=512,
              harmonics=None, v0_value=0.0, mode=None, n_aux=None, window=None,
              boundary="hard-wall", length=WELL_LENGTH):
    """Hard-wall well with a single cos harmonic unless told otherwise."""
    grid = Grid(length=length, points=points, boundary=boundary)
    if harmonics is None:
        harmonics = {1: sample_cos(grid, 1.0)}
    if mode is None:
        mode = FixedBloch(k_z=k_z)
    spec = SystemSpec(units=UnitSystem(), grid=grid,
                      v0=sample_constant(grid, v0_value), harmonics=harmonics,
                      d_z=PERIOD, lam=lam, mode=mode)
    config = SolverConfig(n_basis=n_basis, cutoff=cutoff, aux_mode=aux,
                          n_aux=n_aux, scan_window=window)
    return build_system(spec, config)


def make_bump_well(n_basis=1, cutoff=1, aux="diagonal", lam=0.1, k_z=0.3, points=512):
    """Off-center gaussian harmonic: couples every basis state (no parity zeros)."""
    grid = Grid(length=WELL_LENGTH, points=points)
    harmonics = {1: sample_gaussian(grid, 1.0, 0.6 * WELL_LENGTH, 0.18 * WELL_LENGTH)}
    return make_well(n_basis=n_basis, cutoff=cutoff, aux=aux, lam=lam, k_z=k_z,
                     points=points, harmonics=harmonics)


def make_two_harmonic_well(n_basis=2, cutoff=2, aux="exactblock", lam=0.1, k_z=0.3,
                           points=512):
    """cos at g=1 plus a gaussian at g=2; generic couplings for G=2 runs."""
    grid = Grid(length=WELL_LENGTH, points=points)
    harmonics = {1: sample_cos(grid, 1.0),
                 2: sample_gaussian(grid, 0.6, 0.6 * WELL_LENGTH, 0.18 * WELL_LENGTH)}
    return make_well(n_basis=n_basis, cutoff=cutoff, aux=aux, lam=lam, k_z=k_z,
                     points=points, harmonics=harmonics)


def cantor_midpoints(depth=8):
    """Midpoints of the surviving middle-thirds intervals, as planar points."""
    segs = [(0.0, 1.0)]
    for _ in range(depth):
        segs = [piece for a, b in segs
                for piece in ((a, a + (b - a) / 3.0), (b - (b - a) / 3.0, b))]
    return np.array([[(a + b) / 2.0, 0.0] for a, b in segs])


@pytest.fixture
def well():
    """The standard exact-block acceptance fixture."""
    return make_well()
