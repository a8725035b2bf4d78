"""Self-consistent root enumeration and the coupled-channel ground truth.

The characteristic function det(H_eff(eps) - eps) is scanned between poles,
every sign change is bisected to machine width, and the resulting roots are
grouped into complete eigen-sets ("realisations") of N_b levels each.  At
fixed Bloch momentum the exact-block route must reproduce, eigenvalue by
eigenvalue, the dense coupled-channel matrix assembled directly from the
channel expansion; that identity is the module's central cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .auxiliary import solve_unperturbed
from .effective_potential import EDGE_PAD, EffectiveOperator, build_operator
from .errors import (ConvergenceFailure, IncompleteRealisation, PoleProximity,
                     PoleWindowLoss, ScanTooCoarse, WrongMode)
from .model import FixedBloch, FixedEnergy, SolverConfig, ValidatedProblem, channel_offset

RESIDUAL_TOL = 1e-8
DOMINANCE_MARGIN = 0.1
P_COMPONENT_FLOOR = 1e-10
MAX_DOUBLINGS = 7


@dataclass(frozen=True, eq=False)
class Root:
    """One self-consistent eigenvalue with its P-space eigenvector."""

    eps: float
    vector: np.ndarray            # normalized coefficients over the P basis
    dominant: int                 # argmax |vector|, 0-based
    margin: float                 # |c|_max - |c|_runner_up
    residual: float               # ||(H_eff(eps) - eps) vector||
    realisation: int | None = None
    level: int | None = None


@dataclass(frozen=True, eq=False)
class Realisation:
    """A complete set of N_b roots, one per dominant level, ordered by level."""

    index: int
    levels: tuple                 # Root per slot 0..N_b-1

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.eps for r in self.levels])


@dataclass(frozen=True, eq=False)
class RealisationSet:
    """All complete realisations with their (uniform by default) probabilities."""

    realisations: tuple
    alphas: np.ndarray
    ungrouped: tuple

    @property
    def count(self) -> int:
        return len(self.realisations)


@dataclass(frozen=True, eq=False)
class TotalWavefunction:
    """Channel-resolved total state Psi(x, z) rebuilt from one root."""

    root: Root
    k_z: float
    d_z: float
    channel_order: tuple          # g values, ascending, including 0
    coefficients: dict            # g -> coefficients over the unperturbed basis
    amplitudes: dict              # g -> grid samples of phi_g(x)
    spacing: float

    def stacked_coefficients(self) -> np.ndarray:
        """Concatenated channel blocks in channel_order (the oracle layout)."""
        return np.concatenate([self.coefficients[g] for g in self.channel_order])

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """Psi on the full transverse grid for each z; shape (len(z), n_points)."""
        z = np.atleast_1d(z)
        out = np.zeros((len(z), len(next(iter(self.amplitudes.values())))), dtype=complex)
        for g in self.channel_order:
            wave = np.exp(1j * (self.k_z + 2.0 * np.pi * g / self.d_z) * z)
            out += wave[:, None] * self.amplitudes[g][None, :]
        return out

    def cell_norm(self, n_z: int = 64) -> float:
        """(1/d_z) int dz int dx |Psi|^2 by quadrature over one period."""
        z = np.linspace(0.0, self.d_z, n_z, endpoint=False)
        psi = self.evaluate(z)
        return float(np.sum(np.abs(psi) ** 2) * self.spacing / n_z)


# -- scan machinery -----------------------------------------------------------

def _auto_window(op: EffectiveOperator) -> tuple[float, float]:
    """Window guaranteed to contain every root: spectrum bounds plus coupling radius."""
    cfg = op.problem.config
    nb = cfg.n_basis
    centers = list(op.basis.energies)
    if isinstance(op.problem.mode, FixedBloch):
        for g in cfg.channels:
            centers.extend(op.basis.energies[:nb] + channel_offset(op.problem, g))
    radius = 0.0
    for g in cfg.channels:
        f = op.couplings[g]
        radius += float(np.max(np.sum(np.abs(f), axis=1)))
    values, _ = op.pole_positions()
    if values.size:
        centers.extend([float(values.min()), float(values.max())])
    lo, hi = min(centers), max(centers)
    pad = 0.5 + 0.05 * (hi - lo) + radius
    window = (lo - pad, hi + pad)
    energy = op.fixed_energy
    if energy is not None:
        window = (window[0], min(window[1], energy - 2.0 * cfg.pole_width))
    return window


def _sign(x: float) -> int:
    return int(x > 0) - int(x < 0)


def _segment_function(op: EffectiveOperator, bounding: list[tuple[float, int]]):
    """Characteristic on one inter-pole segment, regularized at its pole ends.

    Multiplying by |eps - p|^rank keeps the value bounded next to the bounding
    poles without touching the sign structure inside the open segment.
    """
    def f(eps: float) -> float:
        val = op.characteristic(eps)
        for pole, rank in bounding:
            val *= abs(eps - pole) ** rank
        return val
    return f


def _brackets(f, lo: float, hi: float, n: int):
    xs = np.linspace(lo, hi, n + 1)
    fs = np.array([f(x) for x in xs])
    exact = [float(x) for x, v in zip(xs, fs) if v == 0.0]
    pairs = []
    prev_idx = None
    for i, v in enumerate(fs):
        if v == 0.0:
            continue
        if prev_idx is not None and _sign(v) != _sign(fs[prev_idx]):
            # a sign change with exact zeros inside is already recorded as roots
            if not any(xs[prev_idx] < x < xs[i] for x in exact):
                pairs.append((float(xs[prev_idx]), float(xs[i]),
                              float(fs[prev_idx]), float(fs[i])))
        prev_idx = i
    return pairs, exact


def _bisect(f, a: float, b: float, fa: float, fb: float) -> float:
    """Sign-change bisection down to floating-point exhaustion."""
    for _ in range(200):
        m = 0.5 * (a + b)
        if m == a or m == b:
            break
        fm = f(m)
        if fm == 0.0:
            return m
        if _sign(fm) == _sign(fa):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return 0.5 * (a + b)


def _segment_roots(op: EffectiveOperator, lo: float, hi: float,
                   bounding: list[tuple[float, int]], resolution: int) -> list[float]:
    """Adaptively scanned and bisected sign changes inside one open segment."""
    if hi <= lo:
        return []
    f = _segment_function(op, bounding)
    counts: list[int] = []
    pairs, exact = [], []
    n = max(resolution, 8)
    for _ in range(MAX_DOUBLINGS):
        pairs, exact = _brackets(f, lo, hi, n)
        counts.append(len(pairs) + len(exact))
        if len(counts) >= 3 and counts[-1] == counts[-2] == counts[-3]:
            break
        n *= 2
    else:
        raise ScanTooCoarse(
            f"root count on [{lo}, {hi}] keeps changing with refinement: {counts}")
    roots = list(exact)
    for a, b, fa, fb in pairs:
        roots.append(_bisect(f, a, b, fa, fb))
    return roots


def _window_loss_check(op: EffectiveOperator, poles: np.ndarray, ranks: np.ndarray,
                       lo: float, hi: float) -> None:
    """A sign flip across a pole window inconsistent with the pole's parity
    means a root is hiding inside the excluded 2*w_pole interval."""
    w = op.problem.config.pole_width * EDGE_PAD
    for pole, rank in zip(poles, ranks):
        if not (lo < pole < hi):
            continue
        left = op.characteristic(pole - w)
        right = op.characteristic(pole + w)
        if left == 0.0 or right == 0.0:
            continue
        if _sign(left) * _sign(right) != (-1) ** int(rank):
            raise PoleWindowLoss(float(pole))


def enumerate_roots(op: EffectiveOperator, config: SolverConfig | None = None) -> list[Root]:
    """All self-consistent eigenvalues in the scan window, ascending.

    Scans det(H_eff(eps) - eps) between consecutive active poles (skipping
    w_pole exclusion windows), doubles the per-gap resolution until the
    bracket count stabilizes twice in a row, bisects every sign change to
    machine width and attaches the nearest eigenpair of H_eff at the root.
    """
    cfg = config if config is not None else op.problem.config
    poles, ranks = op.pole_positions()
    window = cfg.scan_window if cfg.scan_window is not None else _auto_window(op)
    lo, high = window
    if poles.size and not (lo < poles.min() and high > poles.max()):
        inside = poles[(poles > lo) & (poles < high)]
        if len(inside) != len(poles):
            raise ValueError(
                f"scan window {window} does not cover the pole table "
                f"[{poles.min()}, {poles.max()}]")

    w = cfg.pole_width * EDGE_PAD
    cuts = [lo] + [float(p) for p in poles if lo < p < high] + [high]
    cut_ranks = {float(p): int(r) for p, r in zip(poles, ranks)}

    eps_values: list[float] = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        bounding = []
        seg_lo, seg_hi = a, b
        if a in cut_ranks:
            bounding.append((a, cut_ranks[a]))
            seg_lo = a + w
        if b in cut_ranks:
            bounding.append((b, cut_ranks[b]))
            seg_hi = b - w
        eps_values.extend(_segment_roots(op, seg_lo, seg_hi, bounding,
                                         cfg.scan_resolution))

    _window_loss_check(op, poles, ranks, lo, high)

    eps_values.sort()
    merged: list[float] = []
    for e in eps_values:
        if merged and abs(e - merged[-1]) <= cfg.merge_tol:
            continue
        merged.append(e)

    roots = [_make_root(op, e) for e in merged]
    return roots


def _make_root(op: EffectiveOperator, eps: float) -> Root:
    ham = op.ep_matrix(eps)
    vals, vecs = np.linalg.eigh(ham)
    k = int(np.argmin(np.abs(vals - eps)))
    c = vecs[:, k]
    pivot = c[int(np.argmax(np.abs(c)))]
    if np.abs(pivot) > 0:
        c = c * (np.conjugate(pivot) / np.abs(pivot))
    residual = float(np.linalg.norm(ham @ c - eps * c))
    if residual > RESIDUAL_TOL:
        raise ConvergenceFailure(
            f"root at eps={eps} has residual {residual:.3e} > {RESIDUAL_TOL}")
    mags = np.sort(np.abs(c))
    margin = float(mags[-1] - mags[-2]) if len(mags) > 1 else 1.0
    return Root(eps=float(eps), vector=c, dominant=int(np.argmax(np.abs(c))),
                margin=margin, residual=residual)


# -- brute-force coupled-channel oracle ----------------------------------------

def assemble_oracle_matrix(problem: ValidatedProblem,
                           config: SolverConfig | None = None) -> tuple[np.ndarray, list[int]]:
    """Dense Hermitian coupled-channel matrix over channels -G..G (incl. 0)."""
    if not isinstance(problem.mode, FixedBloch):
        raise WrongMode("the coupled-channel oracle requires a fixed-Bloch problem")
    from .auxiliary import harmonic_overlaps

    cfg = config if config is not None else problem.config
    nb = cfg.n_basis
    basis = solve_unperturbed(problem)
    channels = list(range(-cfg.cutoff, cfg.cutoff + 1))
    dim = nb * len(channels)
    ham = np.zeros((dim, dim), dtype=complex)
    for i, gi in enumerate(channels):
        si = slice(i * nb, (i + 1) * nb)
        offset = 0.0 if gi == 0 else channel_offset(problem, gi)
        ham[si, si] = np.diag(basis.energies[:nb] + offset)
        for j, gj in enumerate(channels):
            if i != j:
                ham[si, j * nb:(j + 1) * nb] = harmonic_overlaps(
                    problem, basis, gi - gj)[:nb, :nb]
    anti = float(np.max(np.abs(ham - ham.conj().T)))
    if anti > 1e-12:
        raise ConvergenceFailure(f"oracle matrix not Hermitian: anti part {anti:.3e}")
    return ham, channels


def oracle_spectrum(problem: ValidatedProblem,
                    config: SolverConfig | None = None) -> np.ndarray:
    """All eigenvalues of the coupled-channel matrix, ascending."""
    ham, _ = assemble_oracle_matrix(problem, config)
    return np.linalg.eigvalsh(ham)


def oracle_eigensystem(problem: ValidatedProblem):
    """(eigenvalues, eigenvectors-as-rows, channel order) of the oracle matrix."""
    ham, channels = assemble_oracle_matrix(problem)
    vals, vecs = np.linalg.eigh(ham)
    return vals, vecs.T, channels


# -- grouping -------------------------------------------------------------------

def group_realisations(roots, config: SolverConfig, strict: bool = False,
                       weight_rule=None) -> RealisationSet:
    """Partition roots into complete eigen-sets of one level per slot.

    Ascending roots greedily join the lowest-index realisation still missing
    their dominant level; roots with no trusted dominant component (margin
    below 0.1) fall back to position order, taking the lowest free slot of the
    lowest-index incomplete realisation.  Only complete sets count; leftovers
    are reported, and uniform probabilities 1/N are attached unless a custom
    weight rule is supplied.
    """
    nb = config.n_basis
    if strict and len(roots) % nb != 0:
        raise IncompleteRealisation(
            f"{len(roots)} roots do not fill complete sets of {nb}")

    ordered = sorted(roots, key=lambda r: r.eps)
    filled: list[dict[int, Root]] = []
    for root in ordered:
        if root.margin >= DOMINANCE_MARGIN:
            slot = root.dominant
            home = next((r for r in filled if slot not in r), None)
            if home is None:
                filled.append({})
                home = filled[-1]
            home[slot] = root
        else:
            home = next((r for r in filled if len(r) < nb), None)
            if home is None:
                filled.append({})
                home = filled[-1]
            slot = next(s for s in range(nb) if s not in home)
            home[slot] = root

    realisations = []
    ungrouped: list[Root] = []
    for group in filled:
        if len(group) == nb:
            i = len(realisations)
            levels = tuple(replace(group[s], realisation=i, level=s) for s in range(nb))
            realisations.append(Realisation(index=i, levels=levels))
        else:
            ungrouped.extend(group.values())

    n = len(realisations)
    if weight_rule is not None:
        alphas = np.asarray(weight_rule(realisations), dtype=float)
    else:
        alphas = np.full(n, 1.0 / n) if n else np.zeros(0)
    return RealisationSet(realisations=tuple(realisations), alphas=alphas,
                          ungrouped=tuple(ungrouped))


# -- total wavefunction ----------------------------------------------------------

def reconstruct_total(op: EffectiveOperator, root: Root,
                      problem: ValidatedProblem | None = None) -> TotalWavefunction:
    """Channel amplitudes of the total state behind one root, cell-normalized.

    phi_0 comes from the root's P coefficients; each eliminated channel g
    carries psi0_q weighted by the coupling into the root state over the
    denominator at the root's eigenvalue.
    """
    problem = problem if problem is not None else op.problem
    cfg = problem.config
    nb = cfg.n_basis
    basis = op.basis
    c = root.vector
    mode = problem.mode
    if isinstance(mode, FixedBloch):
        k_z = mode.k_z
    else:
        u = problem.units
        k_z = float(np.sqrt(2.0 * u.mass * (mode.energy - root.eps)) / u.hbar)

    coeffs: dict[int, np.ndarray] = {0: c.astype(complex)}
    if op.exact_block:
        idx = op.active_q_indices()
        d = root.eps - op.qblock.q_energies[idx]
        if idx.size and np.min(np.abs(d)) < cfg.pole_width:
            raise PoleProximity(f"root eps={root.eps} sits within w_pole of a Q pole")
        y = np.zeros(len(op.qblock.q_energies), dtype=complex)
        y[idx] = (op.qblock.q_couplings[idx] @ c) / d
        a = op._q_vectors @ y
        for i, g in enumerate(cfg.channels):
            coeffs[g] = a[i * nb:(i + 1) * nb]
    else:
        for g in cfg.channels:
            idx = op.active_rows(g)
            amp = np.zeros(basis.count, dtype=complex)
            if len(idx):
                d = op.channel_denominators(g, root.eps)[idx]
                if np.min(np.abs(d)) < cfg.pole_width:
                    raise PoleProximity(
                        f"root eps={root.eps} sits within w_pole of a channel-{g} pole")
                amp[idx] = (op.coupling_into(g)[idx] @ c) / d
            coeffs[g] = amp

    norm = np.sqrt(sum(float(np.sum(np.abs(v) ** 2)) for v in coeffs.values()))
    coeffs = {g: v / norm for g, v in coeffs.items()}
    amplitudes = {}
    for g, v in coeffs.items():
        n_states = len(v)
        amplitudes[g] = v @ basis.states[:n_states]
    order = tuple(sorted(coeffs))
    return TotalWavefunction(root=root, k_z=k_z, d_z=problem.spec.d_z,
                             channel_order=order, coefficients=coeffs,
                             amplitudes=amplitudes, spacing=basis.spacing)


# -- verification ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VerificationReport:
    """Root-by-root comparison of the effective-operator route with the oracle."""

    aux_mode: str
    n_roots: int
    n_oracle: int
    n_oracle_retained: int
    count_match: bool
    max_eps_deviation: float
    pairs: tuple                  # (root eps, oracle eps) ascending
    max_vector_deviation: float
    vector_deviations: tuple
    near_degenerate: tuple        # oracle indices with unreliable vectors
    exact_expected: bool
    passed: bool

    def to_dict(self) -> dict:
        return {
            "aux_mode": self.aux_mode,
            "n_roots": self.n_roots,
            "n_oracle": self.n_oracle,
            "n_oracle_retained": self.n_oracle_retained,
            "count_match": self.count_match,
            "max_eps_deviation": self.max_eps_deviation,
            "pairs": [list(p) for p in self.pairs],
            "max_vector_deviation": self.max_vector_deviation,
            "vector_deviations": list(self.vector_deviations),
            "near_degenerate": list(self.near_degenerate),
            "exact_expected": self.exact_expected,
            "passed": self.passed,
        }


def verify_against_oracle(problem: ValidatedProblem,
                          config: SolverConfig | None = None,
                          tol: float = 1e-8) -> VerificationReport:
    """Enumerate roots, match them to the oracle spectrum and compare eigenvectors.

    Oracle eigenpairs whose channel-0 component is numerically zero cannot
    appear as roots of the effective operator and are excluded up front.
    Exact-block mode must agree to ``tol``; diagonal mode reports its
    approximation error as data.
    """
    cfg = config if config is not None else problem.config
    op = build_operator(problem)
    roots = enumerate_roots(op, cfg)
    vals, vecs, channels = oracle_eigensystem(problem)
    nb = cfg.n_basis
    zero_block = channels.index(0) * nb
    p_norm = np.linalg.norm(vecs[:, zero_block:zero_block + nb], axis=1)
    keep = p_norm >= P_COMPONENT_FLOOR
    vals_kept = vals[keep]
    vecs_kept = vecs[keep]

    gaps = np.diff(vals_kept)
    near = set()
    for i, gap in enumerate(gaps):
        if gap < 100 * cfg.merge_tol:
            near.update((i, i + 1))

    n_pairs = min(len(roots), len(vals_kept))
    pairs = []
    devs = []
    vec_devs: list[float] = []
    for i in range(n_pairs):
        pairs.append((roots[i].eps, float(vals_kept[i])))
        devs.append(abs(roots[i].eps - vals_kept[i]))
        if i in near:
            vec_devs.append(float("nan"))
            continue
        wave = reconstruct_total(op, roots[i], problem)
        # diagonal mode keeps more aux states than the oracle; compare the shared block
        mine = np.concatenate([wave.coefficients[g][:nb] for g in wave.channel_order])
        mine = mine / np.linalg.norm(mine)
        ref = vecs_kept[i]
        phase = np.vdot(ref, mine)
        if np.abs(phase) > 0:
            mine = mine * (np.conjugate(phase) / np.abs(phase))
        vec_devs.append(float(np.max(np.abs(mine - ref))))

    count_match = bool(len(roots) == len(vals_kept))
    max_dev = float(max(devs)) if devs else 0.0
    finite = [d for d in vec_devs if not np.isnan(d)]
    max_vec = max(finite) if finite else 0.0
    exact_expected = cfg.aux_mode == "exactblock"
    passed = bool((not exact_expected) or (count_match and max_dev < tol))
    return VerificationReport(
        aux_mode=cfg.aux_mode,
        n_roots=len(roots),
        n_oracle=len(vals),
        n_oracle_retained=len(vals_kept),
        count_match=count_match,
        max_eps_deviation=float(max_dev),
        pairs=tuple(pairs),
        max_vector_deviation=float(max_vec),
        vector_deviations=tuple(vec_devs),
        near_degenerate=tuple(sorted(near)),
        exact_expected=exact_expected,
        passed=passed,
    )
