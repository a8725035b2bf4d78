"""Scale-geometry diagnostics: branch sampling, box counting, support-energy curve.

The topological measure of one realisation's branch of the effective
dynamical function is operationalized as a box count: sample a scalar
observable y(eps) along the branch (skipping pole exclusion windows),
normalize the graph to the unit square, and count occupied delta-boxes down
a geometric ladder.  The slope of log M vs log(1/delta) estimates the branch
dimension; a smooth branch calibrates to 1.  The companion mechanism behind
arbitrarily large effective-potential values is exercised directly: the
free-motion energy of a support-restricted state grows as the support
shrinks (1/delta^2 for the flat well).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .auxiliary import restricted_ground_state
from .effective_potential import EDGE_PAD, EffectiveOperator
from .errors import DegenerateData, EmptyWindow
from .model import ValidatedProblem

OBSERVABLE_SMALLEST_EIG = "smallest_eig"
OBSERVABLE_KERNEL_PROBE = "kernel_probe"
LADDER_RATIO = 0.5
MIN_RUNGS = 6


@dataclass(frozen=True, eq=False)
class BranchGraph:
    """Sampled (eps, y) graph of one branch observable, pole windows excluded."""

    realisation: int
    window: tuple[float, float]
    resolution: int
    observable: str
    eps: np.ndarray
    values: np.ndarray
    runs: tuple                   # (start, stop) index ranges of contiguous sampling

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.eps, self.values])


@dataclass(frozen=True, eq=False)
class ScaleGeometry:
    """Box counts down the delta ladder with the fitted log-log slope."""

    deltas: np.ndarray
    counts: np.ndarray
    slope: float
    residual: float

    def to_rows(self, realisation: int = -1) -> list[tuple[float, int, int]]:
        return [(float(d), int(c), realisation)
                for d, c in zip(self.deltas, self.counts)]


def branch_graph(op: EffectiveOperator, realisation: int,
                 window: tuple[float, float], resolution: int,
                 observable: str = OBSERVABLE_SMALLEST_EIG,
                 probe_index: int | None = None) -> BranchGraph:
    """Sample a scalar branch observable over an eps window.

    The default observable is the smallest-magnitude eigenvalue of
    H_eff(eps) - eps; the alternative probes the nonlocal kernel diagonal at
    one grid point.  Sampling runs break at active poles, leaving gaps of
    exactly twice the exclusion half-width.
    """
    lo, hi = window
    if not lo < hi:
        raise EmptyWindow(f"window {window} is empty")
    if observable not in (OBSERVABLE_SMALLEST_EIG, OBSERVABLE_KERNEL_PROBE):
        raise ValueError(f"unknown observable {observable!r}")
    if probe_index is None:
        probe_index = op.problem.grid.points // 2

    w = op.problem.config.pole_width * EDGE_PAD
    poles, _ = op.pole_positions()
    inside = sorted(float(p) for p in poles if lo < p < hi)
    edges = [lo]
    for p in inside:
        edges.extend([p - w, p + w])
    edges.append(hi)
    segments = [(edges[2 * i], edges[2 * i + 1]) for i in range(len(edges) // 2)]
    segments = [(a, b) for a, b in segments if b > a]
    if not segments:
        raise EmptyWindow(f"window {window} is fully covered by pole exclusions")

    span = sum(b - a for a, b in segments)
    eps_parts = []
    runs = []
    start = 0
    for a, b in segments:
        n = max(2, int(round(resolution * (b - a) / span)))
        eps_parts.append(np.linspace(a, b, n))
        runs.append((start, start + n))
        start += n
    eps = np.concatenate(eps_parts)

    if observable == OBSERVABLE_SMALLEST_EIG:
        values = np.empty(len(eps))
        for i, e in enumerate(eps):
            lam = np.linalg.eigvalsh(op.ep_matrix(e) - e * np.eye(op.n_basis))
            values[i] = lam[np.argmin(np.abs(lam))]
    else:
        values = np.array([op.nonlocal_diagonal(e, np.array([probe_index]))[0]
                           for e in eps])

    return BranchGraph(realisation=realisation, window=(lo, hi),
                       resolution=resolution, observable=observable,
                       eps=eps, values=values, runs=tuple(runs))


def default_ladder(depth: int = 8) -> np.ndarray:
    """Geometric delta ladder 1/2, 1/4, ... with ``depth`` rungs."""
    return 0.5 ** np.arange(1, depth + 1)


def box_count(points: np.ndarray, ladder: np.ndarray | None = None) -> ScaleGeometry:
    """Occupied delta-boxes of a planar point set, per ladder rung, plus slope.

    The point cloud is normalized to the unit square (degenerate axes
    collapse to a line, which is the correct limit for counting).  Counts are
    exactly nested for the ratio-1/2 ladder, so they are non-increasing in
    delta by construction.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DegenerateData("need at least two planar points")
    ladder = default_ladder() if ladder is None else np.asarray(ladder, dtype=float)
    if len(ladder) < MIN_RUNGS:
        raise ValueError(f"delta ladder needs at least {MIN_RUNGS} rungs")
    ratios = ladder[1:] / ladder[:-1]
    if np.any(np.abs(ratios - LADDER_RATIO) > 1e-12):
        raise ValueError("delta ladder must be geometric with ratio 1/2")

    lo = pts.min(axis=0)
    rng = pts.max(axis=0) - lo
    if np.all(rng == 0):
        raise DegenerateData("all points coincide")
    scale = np.where(rng > 0, rng, 1.0)
    unit = (pts - lo) / scale

    counts = np.empty(len(ladder), dtype=int)
    for i, delta in enumerate(ladder):
        n_cells = int(round(1.0 / delta))
        idx = np.minimum((unit / delta).astype(int), n_cells - 1)
        counts[i] = len(np.unique(idx[:, 0] * n_cells + idx[:, 1]))

    log_inv = np.log(1.0 / ladder)
    log_m = np.log(counts)
    coeff, residuals, *_ = np.polyfit(log_inv, log_m, 1, full=True)
    rms = float(np.sqrt(residuals[0] / len(ladder))) if len(residuals) else 0.0
    return ScaleGeometry(deltas=ladder, counts=counts,
                         slope=float(coeff[0]), residual=rms)


def support_energy_curve(problem: ValidatedProblem, deltas) -> list[tuple[float, float]]:
    """Free-motion energy of the restricted ground state per support fraction."""
    out = []
    for delta in np.asarray(deltas, dtype=float):
        state = restricted_ground_state(problem, float(delta))
        out.append((float(delta), state.eta))
    return out
