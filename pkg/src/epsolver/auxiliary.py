"""Unperturbed and auxiliary (eliminated-channel) eigenproblems.

Everything here is second-order finite differences on the problem grid:
the transverse Hamiltonian H0 = -(hbar^2/2m) d^2/dx^2 + V0(x) with hard-wall
(Dirichlet) or periodic closure, the coupled Q-channel block used by the
exact-partitioning mode, kinetic (free-motion) expectation values, and
hard-wall re-solves on a restricted support interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal

from .errors import ConvergenceFailure, NotNormalized, SupportTooSmall, WrongMode
from .model import HARD_WALL, PERIODIC, FixedBloch, ValidatedProblem, channel_offset

GRAM_TOL = 1e-10
NORM_TOL = 1e-8
RESIDUAL_FACTOR = 1e-8


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Orthonormal low-lying eigenpairs of the unperturbed transverse problem.

    ``energies[n]`` ascend (degenerate values may repeat up to the merge
    tolerance); ``states[n]`` are grid functions normalized under the grid
    inner product h*sum.  ``merged(tol)`` gives the reported spectrum with
    multiplicities.
    """

    energies: np.ndarray          # (count,)
    states: np.ndarray            # (count, n_points)
    spacing: float

    @property
    def count(self) -> int:
        return len(self.energies)

    def merged(self, tol: float) -> list[tuple[float, int]]:
        """Distinct eigenvalues with multiplicities, merged at tolerance ``tol``."""
        groups: list[tuple[float, int]] = []
        for e in self.energies:
            if groups and abs(e - groups[-1][0]) <= tol:
                val, mult = groups[-1]
                groups[-1] = ((val * mult + e) / (mult + 1), mult + 1)
            else:
                groups.append((float(e), 1))
        return groups

    def gram_deviation(self) -> float:
        gram = self.spacing * (self.states.conj() @ self.states.T)
        return float(np.max(np.abs(gram - np.eye(self.count))))


@dataclass(frozen=True, eq=False)
class QBlockSolution:
    """Eigenpairs of the full eliminated-channel block plus contracted couplings.

    ``q_energies[k]`` ascend; ``q_couplings[k, n]`` is the amplitude
    <Q-eigenstate k| coupling |P-state n>, so the effective operator's
    energy-dependent term is sum_k |w_k><w_k| / (eps - E_k).
    """

    q_energies: np.ndarray        # (n_q,)
    q_couplings: np.ndarray       # (n_q, n_basis)


@dataclass(frozen=True, eq=False)
class RestrictedState:
    """Ground state of the problem restricted to the support [0, delta*L]."""

    delta: float
    state: np.ndarray             # full-grid samples, zero outside the support
    eta: float                    # free-motion (kinetic) energy


def _fix_phase(states: np.ndarray) -> np.ndarray:
    """Deterministic sign/phase: largest-|.| component of each state made real positive."""
    out = states.copy()
    for i in range(out.shape[0]):
        j = int(np.argmax(np.abs(out[i])))
        pivot = out[i, j]
        if np.abs(pivot) > 0:
            out[i] *= np.conjugate(pivot) / np.abs(pivot)
    if not np.iscomplexobj(states):
        out = np.real(out)
    return out


def kinetic_coefficient(problem: ValidatedProblem) -> float:
    """hbar^2 / (2 m h^2), the magnitude of the off-diagonal stencil entry."""
    u = problem.units
    h = problem.grid.spacing
    return u.hbar**2 / (2.0 * u.mass * h * h)


def apply_kinetic(problem: ValidatedProblem, psi: np.ndarray) -> np.ndarray:
    """-(hbar^2/2m) psi'' by the same stencil the eigensolves use."""
    c = kinetic_coefficient(problem)
    out = 2.0 * c * psi.astype(complex if np.iscomplexobj(psi) else float)
    out[1:] -= c * psi[:-1]
    out[:-1] -= c * psi[1:]
    if problem.grid.boundary == PERIODIC:
        out[0] -= c * psi[-1]
        out[-1] -= c * psi[0]
    return out


def _solve_dirichlet(v0_interior: np.ndarray, coeff: float, h: float,
                     n_states: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest eigenpairs of the interior tridiagonal Hamiltonian."""
    m = len(v0_interior)
    diag = 2.0 * coeff + v0_interior
    off = np.full(m - 1, -coeff)
    k = min(n_states, m)
    vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    return vals, vecs.T / np.sqrt(h)


def _hamiltonian_norm_bound(problem: ValidatedProblem) -> float:
    c = kinetic_coefficient(problem)
    return 4.0 * c + float(np.max(np.abs(problem.v0)))


def _check_residuals(problem: ValidatedProblem, energies: np.ndarray,
                     states: np.ndarray) -> None:
    bound = _hamiltonian_norm_bound(problem)
    h = problem.grid.spacing
    # hard-wall boundary rows are constraints, not eigenvalue equations
    rows = slice(1, -1) if problem.grid.boundary == HARD_WALL else slice(None)
    for e, psi in zip(energies, states):
        hpsi = apply_kinetic(problem, psi) + problem.v0 * psi
        res = np.sqrt(h) * np.linalg.norm((hpsi - e * psi)[rows])
        if res > RESIDUAL_FACTOR * bound:
            raise ConvergenceFailure(
                f"eigensolve residual {res:.3e} exceeds {RESIDUAL_FACTOR:.0e} * |H|")


def solve_unperturbed(problem: ValidatedProblem) -> EigenBasis:
    """Lowest eigenpairs of H0 = -(hbar^2/2m) d^2/dx^2 + V0(x).

    Keeps N_b states in exact-block mode (the shared P/Q truncation) and
    N_aux per channel in diagonal mode.  States are grid-normalized with a
    deterministic sign convention.
    """
    cfg = problem.config
    n_keep = cfg.n_basis if cfg.aux_mode == "exactblock" else cfg.aux_count
    grid = problem.grid
    h = grid.spacing
    coeff = kinetic_coefficient(problem)

    if grid.boundary == HARD_WALL:
        vals, vecs = _solve_dirichlet(problem.v0[1:-1], coeff, h, n_keep)
        states = np.zeros((len(vals), grid.points))
        states[:, 1:-1] = vecs
    else:
        ham = np.diag(2.0 * coeff + problem.v0)
        idx = np.arange(grid.points - 1)
        ham[idx, idx + 1] = -coeff
        ham[idx + 1, idx] = -coeff
        ham[0, -1] -= coeff
        ham[-1, 0] -= coeff
        vals, vecs = eigh(ham, subset_by_index=(0, n_keep - 1))
        states = vecs.T / np.sqrt(h)

    states = _fix_phase(states)
    basis = EigenBasis(energies=vals, states=states, spacing=h)
    _check_residuals(problem, vals, states)
    if basis.gram_deviation() > GRAM_TOL:
        raise ConvergenceFailure("returned basis is not orthonormal to tolerance")
    return basis


def harmonic_overlaps(problem: ValidatedProblem, basis: EigenBasis, g: int) -> np.ndarray:
    """Coupling matrix F_g[a, b] = <psi0_a| lam*V_g |psi0_b> by grid quadrature."""
    vg = problem.scaled_harmonic(g)
    return basis.spacing * np.einsum("ax,x,bx->ab", basis.states.conj(), vg, basis.states)


def assemble_q_block(problem: ValidatedProblem, basis: EigenBasis) -> np.ndarray:
    """Dense eliminated-channel block: per-channel diag(eps0 + Delta_g) plus
    inter-channel blocks lam*V_{g-g'} in the kept transverse basis."""
    cfg = problem.config
    nb = cfg.n_basis
    channels = cfg.channels
    eps0 = basis.energies[:nb]
    n_q = nb * len(channels)
    block = np.zeros((n_q, n_q), dtype=complex)
    for i, gi in enumerate(channels):
        si = slice(i * nb, (i + 1) * nb)
        block[si, si] = np.diag(eps0 + channel_offset(problem, gi))
        for j, gj in enumerate(channels):
            if i != j:
                block[si, j * nb:(j + 1) * nb] = harmonic_overlaps(
                    problem, basis, gi - gj)[:nb, :nb]
    return block


def solve_q_block(problem: ValidatedProblem, basis: EigenBasis) -> QBlockSolution:
    """Diagonalize the full eliminated-channel block including cross couplings.

    The block carries one copy of the kept transverse states per channel
    g != 0, offset by Delta_g on its diagonal, with inter-channel blocks
    lam*V_{g-g'}.  Returns its eigenvalues and the contracted couplings to
    the retained channel-0 states.
    """
    cfg = problem.config
    if not isinstance(problem.mode, FixedBloch):
        raise WrongMode("solve_q_block requires a fixed-Bloch problem")
    if cfg.aux_mode != "exactblock":
        raise WrongMode("solve_q_block requires exact-block auxiliary mode")

    nb = cfg.n_basis
    channels = cfg.channels
    block = assemble_q_block(problem, basis)
    anti = np.max(np.abs(block - block.conj().T))
    if anti > 1e-12:
        raise ConvergenceFailure(f"Q block not Hermitian: anti part {anti:.3e}")

    q_energies, vecs = np.linalg.eigh(block)
    vecs = _fix_phase(vecs.T).T
    # B[(i,q), n] = <channel g_i, state q| coupling |P state n>
    b = np.vstack([harmonic_overlaps(problem, basis, gi)[:nb, :nb] for gi in channels])
    w = vecs.conj().T @ b
    return QBlockSolution(q_energies=q_energies, q_couplings=w)


def grid_norm(problem: ValidatedProblem, psi: np.ndarray) -> float:
    return float(np.sqrt(problem.grid.spacing * np.sum(np.abs(psi) ** 2)))


def free_motion_energy(state: np.ndarray, problem: ValidatedProblem) -> float:
    """Kinetic expectation <psi| -(hbar^2/2m) d^2/dx^2 |psi> of a normalized state."""
    norm = grid_norm(problem, state)
    if abs(norm - 1.0) > NORM_TOL:
        raise NotNormalized(f"state norm {norm} deviates from 1 by more than {NORM_TOL}")
    t_psi = apply_kinetic(problem, state)
    return float(np.real(problem.grid.spacing * np.vdot(state, t_psi)))


def restricted_ground_state(problem: ValidatedProblem, delta: float) -> RestrictedState:
    """Ground state with hard walls moved to [0, delta*L], embedded in the full grid.

    The restriction is a hard re-solve on the sub-interval: the wall lands on
    the grid point nearest delta*L and the state vanishes identically beyond
    it.  eta is the state's free-motion (kinetic) energy.
    """
    if problem.grid.boundary != HARD_WALL:
        raise WrongMode("support restriction requires a hard-wall grid")
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"support fraction must lie in (0, 1], got {delta}")
    grid = problem.grid
    wall = int(round(delta * (grid.points - 1)))
    if wall - 1 < 8:
        raise SupportTooSmall(
            f"support fraction {delta} leaves {max(wall - 1, 0)} interior points (< 8)")

    coeff = kinetic_coefficient(problem)
    vals, vecs = _solve_dirichlet(problem.v0[1:wall], coeff, grid.spacing, 1)
    state = np.zeros(grid.points)
    state[1:wall] = vecs[0]
    state = _fix_phase(state[None, :])[0]
    eta = free_motion_energy(state, problem)
    return RestrictedState(delta=delta, state=state, eta=eta)
