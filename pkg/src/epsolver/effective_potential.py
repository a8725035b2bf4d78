"""Energy-dependent effective operator obtained by eliminating the g != 0 channels.

Projected on the retained channel-0 basis the operator reads

    H_eff(eps)[n, n'] = eps0_n delta_{nn'}
                        + sum_{g,q} M_{-g}[n, q] M_g[q, n'] / d_{g,q}(eps)

with coupling overlaps M_g[q, n] = <psi0_q| lam*V_g |psi0_n> and mode-resolved
denominators:

  fixed Bloch, diagonal aux:   d = eps - eps0_q - Delta_g
  fixed Bloch, exact block:    d = eps - E^Q_k        (Q-block eigenvalues)
  fixed energy, diagonal aux:  d = eps - eps0_q - eps_pg - 2 sign(g) sqrt(eps_pg (E - eps))

The denominators vanish on the pole table; self-consistent eigenvalues are
the real roots of det(H_eff(eps) - eps).  Every term is self-adjoint for real
eps off the poles, so H_eff is Hermitian wherever it is defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .auxiliary import (EigenBasis, QBlockSolution, _fix_phase, assemble_q_block,
                        harmonic_overlaps, solve_q_block, solve_unperturbed)
from .errors import (AboveTotalEnergy, HermiticityViolation, IndexMismatch,
                     PoleProximity, WrongMode)
from .model import FixedBloch, FixedEnergy, ValidatedProblem, channel_offset

COUPLING_SYMMETRY_TOL = 1e-12
# couplings below this fraction of the largest one carry no resolvable residue
ACTIVITY_REL_TOL = 1e-12
# relative cushion keeping pole-window edges outside the guard after rounding
EDGE_PAD = 1.0 + 1e-8


@dataclass(frozen=True)
class PoleEntry:
    value: float
    rank: int                      # rank of the merged residue matrix (0 = spectator)
    origins: tuple               # (g, q) pairs or Q-block indices k

    def __repr__(self):
        return f"PoleEntry({self.value:.12g}, rank={self.rank}, origins={self.origins})"


@dataclass(frozen=True)
class PoleTable:
    """Ascending pole values with residue ranks, merged at the degeneracy tolerance."""

    entries: tuple

    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries])

    def active(self) -> "PoleTable":
        """Entries whose residue actually diverges (rank >= 1)."""
        return PoleTable(tuple(e for e in self.entries if e.rank >= 1))

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True, eq=False)
class EffectiveOperator:
    """Cached, immutable evaluator for H_eff(eps) and its pole structure."""

    problem: ValidatedProblem
    basis: EigenBasis
    qblock: QBlockSolution | None
    couplings: dict[int, np.ndarray] = field(repr=False)   # g -> F_g (n_keep x n_keep)

    @property
    def n_basis(self) -> int:
        return self.problem.config.n_basis

    @property
    def eps0(self) -> np.ndarray:
        """Retained channel-0 eigenvalues."""
        return self.basis.energies[: self.n_basis]

    @property
    def exact_block(self) -> bool:
        return self.qblock is not None

    @property
    def fixed_energy(self) -> float | None:
        mode = self.problem.mode
        return mode.energy if isinstance(mode, FixedEnergy) else None

    # -- coupling bookkeeping --------------------------------------------------

    def coupling_into(self, g: int) -> np.ndarray:
        """M_g[q, n] = <psi0_q| lam*V_g |psi0_n>, q over aux states, n over P states."""
        return self.couplings[g][:, : self.n_basis]

    def _activity_scale(self) -> float:
        if self.exact_block:
            return float(np.max(np.abs(self.qblock.q_couplings), initial=0.0))
        return max((float(np.max(np.abs(self.coupling_into(g)), initial=0.0))
                    for g in self.problem.config.channels), default=0.0)

    def active_rows(self, g: int) -> np.ndarray:
        """Aux-state indices in channel g with resolvable coupling to the P space."""
        m = self.coupling_into(g)
        norms = np.linalg.norm(m, axis=1)
        return np.flatnonzero(norms > ACTIVITY_REL_TOL * self._activity_scale())

    def active_q_indices(self) -> np.ndarray:
        w = self.qblock.q_couplings
        norms = np.linalg.norm(w, axis=1)
        return np.flatnonzero(norms > ACTIVITY_REL_TOL * self._activity_scale())

    # -- denominators ------------------------------------------------------------

    def channel_denominators(self, g: int, eps: float) -> np.ndarray:
        """d_{g,q}(eps) over the kept aux states of channel g (diagonal aux mode)."""
        eq = self.basis.energies
        energy = self.fixed_energy
        if energy is None:
            return eps - eq - channel_offset(self.problem, g)
        if eps > energy:
            raise AboveTotalEnergy(f"eps={eps} exceeds total energy E={energy}")
        eps_pg = self.problem.harmonic_energy(g)
        cross = 2.0 * np.sign(g) * np.sqrt(eps_pg * (energy - eps))
        return eps - eq - eps_pg - cross

    def pole_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """(values, ranks) of poles with nonzero residue, ascending, merged."""
        table = pole_table_any_mode(self).active()
        return table.values(), np.array([e.rank for e in table.entries], dtype=int)

    # -- matrix evaluation ---------------------------------------------------

    def _guard_poles(self, d: np.ndarray, eps: float) -> None:
        if d.size and np.min(np.abs(d)) < self.problem.config.pole_width:
            raise PoleProximity(
                f"eps={eps} is within {self.problem.config.pole_width} of a pole")

    def ep_matrix(self, eps: float) -> np.ndarray:
        """Hermitian H_eff(eps) of size n_basis; raises near poles."""
        out = np.diag(self.eps0).astype(complex)
        if self.exact_block:
            idx = self.active_q_indices()
            w = self.qblock.q_couplings[idx]
            d = eps - self.qblock.q_energies[idx]
            self._guard_poles(d, eps)
            if len(idx):
                out += w.conj().T @ (w / d[:, None])
            return out
        for g in self.problem.config.channels:
            idx = self.active_rows(g)
            if not len(idx):
                continue
            d = self.channel_denominators(g, eps)[idx]
            self._guard_poles(d, eps)
            m_in = self.coupling_into(g)[idx]                  # (q, n)
            m_out = self.couplings[-g][: self.n_basis, idx]    # (n, q)
            out += m_out @ (m_in / d[:, None])
        return out

    def characteristic(self, eps: float) -> float:
        """det(H_eff(eps) - eps I), stabilized; only its sign and zeros matter."""
        lam = np.linalg.eigvalsh(self.ep_matrix(eps) - eps * np.eye(self.n_basis))
        if np.any(lam == 0.0):
            return 0.0
        sign = 1.0 if np.count_nonzero(lam < 0) % 2 == 0 else -1.0
        log_abs = np.clip(np.sum(np.log(np.abs(lam))), -700.0, 700.0)
        return sign * float(np.exp(log_abs))

    def nonlocal_diagonal(self, eps: float, points: np.ndarray) -> np.ndarray:
        """Point diagonal of the nonlocal kernel at the given grid indices.

        sum_{g,q} V_{-g}(x) V_g(x) |psi0_q(x)|^2 / d_{g,q}(eps); this is the
        scalar pole-sensitive probe used for branch sampling.
        """
        points = np.atleast_1d(points)
        out = np.zeros(len(points), dtype=complex)
        if self.exact_block:
            idx = self.active_q_indices()
            d = eps - self.qblock.q_energies[idx]
            self._guard_poles(d, eps)
            u = self._qspace_profiles(points)[:, idx]
            out += np.sum(u * u.conj() / d[None, :], axis=1)
            return np.real(out)
        for g in self.problem.config.channels:
            idx = self.active_rows(g)
            if not len(idx):
                continue
            d = self.channel_denominators(g, eps)[idx]
            self._guard_poles(d, eps)
            vm = self.problem.scaled_harmonic(-g)[points]
            vp = self.problem.scaled_harmonic(g)[points]
            psi2 = np.abs(self.basis.states[idx][:, points]) ** 2
            out += vm * vp * np.sum(psi2 / d[:, None], axis=0)
        return np.real(out)

    def _qspace_profiles(self, points: np.ndarray) -> np.ndarray:
        """u_k(x) = sum_{g,q} V_{-g}(x) psi0_q(x) X_k[(g,q)] on selected points."""
        cfg = self.problem.config
        nb = cfg.n_basis
        n_q = nb * len(cfg.channels)
        # Q-block eigenvectors are recovered from couplings only when needed;
        # store them on first use.
        vecs = getattr(self, "_q_vectors", None)
        if vecs is None:
            raise WrongMode("Q-space profiles need the exact-block operator")
        u = np.zeros((len(points), n_q), dtype=complex)
        for i, g in enumerate(cfg.channels):
            block = vecs[i * nb:(i + 1) * nb]                  # (q, k)
            weight = self.problem.scaled_harmonic(-g)[points]  # (x,)
            psi = self.basis.states[:nb][:, points]            # (q, x)
            u += weight[:, None] * (psi.T @ block)
        return u


def build_operator(problem: ValidatedProblem,
                   basis: EigenBasis | None = None,
                   qblock: QBlockSolution | None = None) -> EffectiveOperator:
    """Assemble the effective operator, solving the auxiliary problems as needed."""
    cfg = problem.config
    exact = cfg.aux_mode == "exactblock"
    if exact and not isinstance(problem.mode, FixedBloch):
        raise WrongMode("exact-block elimination requires a fixed-Bloch problem")
    if basis is None:
        basis = solve_unperturbed(problem)

    couplings: dict[int, np.ndarray] = {}
    for g in cfg.channels:
        for sign in (g, -g):
            if sign not in couplings:
                couplings[sign] = harmonic_overlaps(problem, basis, sign)
    for g in cfg.channels:
        dev = np.max(np.abs(couplings[-g] - couplings[g].conj().T))
        if dev > COUPLING_SYMMETRY_TOL:
            raise HermiticityViolation(
                f"coupling symmetry M_-g = M_g^dagger violated by {dev:.3e}; "
                "harmonics are not a Hermitian pair")

    q_vectors = None
    if exact and qblock is None:
        qblock = solve_q_block(problem, basis)
    if exact:
        # eigenvectors are recovered once for kernel evaluation (small block)
        _, vecs = np.linalg.eigh(assemble_q_block(problem, basis))
        q_vectors = _fix_phase(vecs.T).T

    op = EffectiveOperator(problem=problem, basis=basis, qblock=qblock,
                           couplings=couplings)
    if q_vectors is not None:
        object.__setattr__(op, "_q_vectors", q_vectors)
    return op


def pole_table(op: EffectiveOperator) -> PoleTable:
    """Sorted, merged pole table; fixed-Bloch only (fixed-energy poles are implicit)."""
    if op.fixed_energy is not None:
        raise WrongMode("pole_table requires a fixed-Bloch operator")
    return pole_table_any_mode(op)


def pole_table_any_mode(op: EffectiveOperator) -> PoleTable:
    """Pole table in either mode (fixed-energy poles solved from the quadratic)."""
    nb = op.n_basis
    raw: list[tuple[float, np.ndarray, object]] = []
    if op.exact_block:
        w = op.qblock.q_couplings
        for k, e_k in enumerate(op.qblock.q_energies):
            residue = np.outer(w[k].conj(), w[k])
            raw.append((float(e_k), residue, k))
    else:
        energy = op.fixed_energy
        for g in op.problem.config.channels:
            m_in = op.coupling_into(g)
            m_out = op.couplings[-g][:nb]
            for q in range(op.basis.count):
                residue = np.outer(m_out[:, q], m_in[q])
                if energy is None:
                    values = [op.basis.energies[q] + channel_offset(op.problem, g)]
                else:
                    values = _fixed_energy_poles(op, g, q)
                for v in values:
                    raw.append((float(v), residue, (g, q)))

    raw.sort(key=lambda t: t[0])
    tol = op.problem.config.merge_tol
    scale = op._activity_scale()
    entries: list[PoleEntry] = []
    i = 0
    while i < len(raw):
        j = i + 1
        while j < len(raw) and raw[j][0] - raw[j - 1][0] <= tol:
            j += 1
        cluster = raw[i:j]
        value = float(np.mean([c[0] for c in cluster]))
        residue = np.sum([c[1] for c in cluster], axis=0)
        if scale > 0 and np.max(np.abs(residue)) > (ACTIVITY_REL_TOL * scale) ** 2:
            rank = int(np.linalg.matrix_rank(residue, tol=(ACTIVITY_REL_TOL * scale) ** 2))
            rank = max(rank, 1)
        else:
            rank = 0
        entries.append(PoleEntry(value=value, rank=rank,
                                 origins=tuple(c[2] for c in cluster)))
        i = j
    return PoleTable(entries=tuple(entries))


def _fixed_energy_poles(op: EffectiveOperator, g: int, q: int) -> list[float]:
    """Real solutions of d_{g,q}(eps) = 0 below the total energy.

    With s = sqrt(E - eps) >= 0 the condition becomes
    s^2 + 2 sign(g) sqrt(eps_pg) s + (eps0_q + eps_pg - E) = 0.
    """
    energy = op.fixed_energy
    eps0_q = float(op.basis.energies[q])
    disc = energy - eps0_q
    if disc < 0:
        return []
    a = np.sqrt(op.problem.harmonic_energy(g))
    root = np.sqrt(disc)
    out = []
    for s in (-np.sign(g) * a + root, -np.sign(g) * a - root):
        if s >= 0:
            out.append(energy - s * s)
    return out


def ep_matrix(op: EffectiveOperator, eps: float) -> np.ndarray:
    return op.ep_matrix(eps)


def characteristic(op: EffectiveOperator, eps: float) -> float:
    return op.characteristic(eps)


@dataclass(frozen=True, eq=False)
class RealisationKernel:
    """Nonlocal kernel of one realisation at one of its levels.

    ``kernel(ix, jx)`` evaluates V(x, x') on grid-index subsets with every
    denominator frozen at the level's eigenvalue.  ``local_equivalent(psi)``
    is the local profile J(x) = (V psi)(x) / psi(x) with respect to a grid
    wavefunction, so V_eff(x) = V0(x) + J(x) carries the realisation and
    level dependence.
    """

    op: EffectiveOperator
    realisation: int
    level: int
    energy: float

    def _denominators(self, g: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.op.active_rows(g)
        return idx, self.op.channel_denominators(g, self.energy)[idx]

    def kernel(self, ix: np.ndarray, jx: np.ndarray) -> np.ndarray:
        ix = np.atleast_1d(ix)
        jx = np.atleast_1d(jx)
        if self.op.exact_block:
            kdx = self.op.active_q_indices()
            d = self.energy - self.op.qblock.q_energies[kdx]
            ui = self.op._qspace_profiles(ix)[:, kdx]
            uj = self.op._qspace_profiles(jx)[:, kdx]
            return ui @ (uj.conj() / d[None, :]).T
        out = np.zeros((len(ix), len(jx)), dtype=complex)
        for g in self.op.problem.config.channels:
            idx, d = self._denominators(g)
            if not len(idx):
                continue
            u = self.op.problem.scaled_harmonic(-g)[ix]
            v = self.op.problem.scaled_harmonic(g)[jx]
            states = self.op.basis.states[idx]
            s = (states[:, ix] / d[:, None]).T @ states[:, jx].conj()
            out += u[:, None] * v[None, :] * s
        return out

    def diagonal(self, ix: np.ndarray) -> np.ndarray:
        """Plain point diagonal V(x, x) of the kernel."""
        return self.op.nonlocal_diagonal(self.energy, np.atleast_1d(ix))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """(V psi)(x) over the full grid by quadrature."""
        h = self.op.problem.grid.spacing
        out = np.zeros(self.op.problem.grid.points, dtype=complex)
        if self.op.exact_block:
            kdx = self.op.active_q_indices()
            d = self.energy - self.op.qblock.q_energies[kdx]
            allx = np.arange(self.op.problem.grid.points)
            u = self.op._qspace_profiles(allx)[:, kdx]
            t = h * (u.conj().T @ psi)
            return u @ (t / d)
        for g in self.op.problem.config.channels:
            idx, d = self._denominators(g)
            if not len(idx):
                continue
            states = self.op.basis.states[idx]
            t = h * (states.conj() @ (self.op.problem.scaled_harmonic(g) * psi))
            out += self.op.problem.scaled_harmonic(-g) * (states.T @ (t / d))
        return out

    def local_equivalent(self, psi: np.ndarray, floor: float = 1e-12) -> np.ndarray:
        """J(x) = (V psi)(x) / psi(x), zeroed where |psi| is below floor*max."""
        v_psi = self.apply(psi)
        guard = floor * np.max(np.abs(psi))
        safe = np.abs(psi) > guard
        out = np.zeros_like(v_psi)
        out[safe] = v_psi[safe] / psi[safe]
        return out

    def effective_total(self, psi: np.ndarray) -> np.ndarray:
        """V_eff(x) = V0(x) + J(x) for the given state."""
        return self.op.problem.v0 + self.local_equivalent(psi)


def realisation_kernel(op: EffectiveOperator, root, i: int, m: int) -> RealisationKernel:
    """Kernel of realisation i at level m; the root must carry exactly those tags."""
    if root.realisation != i or root.level != m:
        raise IndexMismatch(
            f"root is tagged (realisation={root.realisation}, level={root.level}), "
            f"requested ({i}, {m})")
    return RealisationKernel(op=op, realisation=i, level=m, energy=root.eps)
