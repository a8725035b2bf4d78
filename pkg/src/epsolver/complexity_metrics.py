"""Complexity and entropy of a realisation set, plus coupling-scale sweeps.

A system whose modified dynamics admits N complete eigen-sets carries
complexity C = f * ln(N): zero exactly when the dynamics is single-valued
(N = 1), positive and strictly increasing otherwise.  With the uniform
realisation probabilities 1/N the Shannon entropy of the set equals k*C/f,
i.e. S = C for k = f.  Sweeps track these numbers along a coupling-scale
grid (the chaoticity-parameter proxy) and record where multivaluedness
first appears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .effective_potential import build_operator
from .errors import InvalidCount, NotDistribution
from .model import FixedBloch, SolverConfig, ValidatedProblem, build_system
from .realisation_solver import (RealisationSet, enumerate_roots, group_realisations,
                                 verify_against_oracle)

DISTRIBUTION_TOL = 1e-12

# classical-regime borders quoted for context only; nothing here computes them
CLASSICAL_BORDERS = {"k_c": 1.0, "k_q": math.inf}


def complexity(n_realisations: int, f: float = 1.0) -> float:
    """C = f * ln(N) for N >= 1 complete realisation sets."""
    if n_realisations < 1:
        raise InvalidCount(f"realisation count must be >= 1, got {n_realisations}")
    if f <= 0:
        raise ValueError(f"prefactor f must be positive, got {f}")
    return f * math.log(n_realisations)


def shannon_entropy(p, k: float = 1.0) -> float:
    """S = -k * sum p_i ln p_i with the 0 ln 0 = 0 convention."""
    p = np.asarray(p, dtype=float)
    if p.size == 0 or np.any(p < 0):
        raise NotDistribution("probabilities must be nonnegative and nonempty")
    total = float(np.sum(p))
    if abs(total - 1.0) > DISTRIBUTION_TOL:
        raise NotDistribution(f"probabilities sum to {total}, not 1")
    mask = p > 0
    return float(-k * np.sum(p[mask] * np.log(p[mask]))) + 0.0


@dataclass(frozen=True)
class ComplexityReport:
    n_realisations: int
    f: float
    k: float
    c: float
    s: float

    def to_dict(self) -> dict:
        return {"n_realisations": self.n_realisations, "f": self.f, "k": self.k,
                "c": self.c, "s": self.s}


def report(real_set: RealisationSet, f: float = 1.0, k: float = 1.0) -> ComplexityReport:
    """Complexity from the count, entropy from the actual probability vector."""
    n = real_set.count
    c = complexity(n, f)
    s = shannon_entropy(real_set.alphas, k)
    return ComplexityReport(n_realisations=n, f=f, k=k, c=c, s=s)


@dataclass(frozen=True)
class SweepRow:
    value: float
    seed: int
    n_realisations: int
    c: float
    s: float
    root_count: int
    max_oracle_deviation: float
    failed: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        return {"value": self.value, "seed": self.seed,
                "n_realisations": self.n_realisations, "c": self.c, "s": self.s,
                "root_count": self.root_count,
                "max_oracle_deviation": self.max_oracle_deviation,
                "failed": self.failed, "error": self.error}


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    rows: tuple
    transition: float | None      # smallest value with more than one realisation
    conserved: bool               # equal realisation counts carry bit-equal C
    annotations: dict

    def to_dict(self) -> dict:
        def safe(v):
            if isinstance(v, dict):
                return {k: safe(x) for k, x in v.items()}
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v
        return {"parameter": self.parameter,
                "rows": [r.to_dict() for r in self.rows],
                "transition": self.transition,
                "conserved": self.conserved,
                "annotations": safe(dict(self.annotations))}


def _sweep_row(problem: ValidatedProblem, value: float, seed: int,
               f: float, k: float) -> SweepRow:
    rebuilt = build_system(replace(problem.spec, lam=float(value)), problem.config)
    op = build_operator(rebuilt)
    roots = enumerate_roots(op)
    grouped = group_realisations(roots, rebuilt.config)
    rep = report(grouped, f=f, k=k)
    if isinstance(rebuilt.mode, FixedBloch):
        deviation = verify_against_oracle(rebuilt).max_eps_deviation
    else:
        deviation = float("nan")
    return SweepRow(value=float(value), seed=seed,
                    n_realisations=rep.n_realisations, c=rep.c, s=rep.s,
                    root_count=len(roots), max_oracle_deviation=deviation)


def sweep(problem: ValidatedProblem, values, config: SolverConfig | None = None,
          f: float = 1.0, k: float = 1.0, seed: int = 0, jobs: int = 1) -> SweepResult:
    """Rebuild the problem at each coupling scale and collect the diagnostics.

    Row failures are recorded and do not stop the sweep.  The sweep axis is
    labelled as a proxy: the dynamics' own chaoticity parameter is not
    computable here, the coupling scale stands in for it.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0 or np.any(np.diff(values) <= 0):
        raise ValueError("parameter grid must be nonempty and strictly ascending")

    def run_one(item):
        i, value = item
        try:
            return _sweep_row(problem, value, seed + i, f, k)
        except Exception as exc:  # row-level isolation by design
            return SweepRow(value=float(value), seed=seed + i, n_realisations=0,
                            c=float("nan"), s=float("nan"), root_count=0,
                            max_oracle_deviation=float("nan"), failed=True,
                            error=f"{type(exc).__name__}: {exc}")

    items = list(enumerate(values))
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_one, items))
    else:
        rows = [run_one(item) for item in items]

    transition = None
    for row in rows:
        if not row.failed and row.n_realisations > 1:
            transition = row.value
            break

    by_count: dict[int, float] = {}
    conserved = True
    for row in rows:
        if row.failed:
            continue
        if row.n_realisations in by_count:
            conserved = conserved and (row.c == by_count[row.n_realisations])
        else:
            by_count[row.n_realisations] = row.c

    return SweepResult(parameter="coupling scale (chaoticity proxy)",
                       rows=tuple(rows), transition=transition, conserved=conserved,
                       annotations={"classical_borders": dict(CLASSICAL_BORDERS)})
