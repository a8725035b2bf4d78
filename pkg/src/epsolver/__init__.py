"""Effective-potential realisation solver for periodically perturbed 1D systems.

The package enumerates every self-consistent eigen-solution of the
energy-dependent effective operator obtained by eliminating the periodic
perturbation channels, groups them into complete realisation sets, validates
the exact-partitioning route against a dense coupled-channel matrix, and
computes complexity, entropy and box-counting scale-geometry diagnostics.
"""

__version__ = "0.1.0"

from .auxiliary import (EigenBasis, QBlockSolution, RestrictedState,
                        free_motion_energy, restricted_ground_state,
                        solve_q_block, solve_unperturbed)
from .complexity_metrics import (ComplexityReport, SweepResult, SweepRow,
                                 complexity, report, shannon_entropy, sweep)
from .effective_potential import (EffectiveOperator, PoleEntry, PoleTable,
                                  RealisationKernel, build_operator,
                                  characteristic, ep_matrix, pole_table,
                                  realisation_kernel)
from .errors import SolverError
from .fractal_geometry import (BranchGraph, ScaleGeometry, box_count, branch_graph,
                               default_ladder, support_energy_curve)
from .model import (FixedBloch, FixedEnergy, Grid, SolverConfig, SystemSpec,
                    UnitSystem, ValidatedProblem, build_system, channel_offset)
from .realisation_solver import (Realisation, RealisationSet, Root,
                                 TotalWavefunction, VerificationReport,
                                 enumerate_roots, group_realisations,
                                 oracle_spectrum, reconstruct_total,
                                 verify_against_oracle)

__all__ = [
    "__version__",
    "BranchGraph", "ComplexityReport", "EffectiveOperator", "EigenBasis",
    "FixedBloch", "FixedEnergy", "Grid", "PoleEntry", "PoleTable",
    "QBlockSolution", "Realisation", "RealisationKernel", "RealisationSet",
    "RestrictedState", "Root", "ScaleGeometry", "SolverConfig", "SolverError",
    "SweepResult", "SweepRow", "SystemSpec", "TotalWavefunction", "UnitSystem",
    "ValidatedProblem", "VerificationReport",
    "box_count", "branch_graph", "build_operator", "build_system",
    "channel_offset", "characteristic", "complexity", "default_ladder",
    "enumerate_roots", "ep_matrix", "free_motion_energy", "group_realisations",
    "oracle_spectrum", "pole_table", "realisation_kernel", "reconstruct_total",
    "report", "restricted_ground_state", "shannon_entropy", "solve_q_block",
    "solve_unperturbed", "support_energy_curve", "sweep", "verify_against_oracle",
]
