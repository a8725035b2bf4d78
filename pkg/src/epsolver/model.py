"""Physical system definition, discretization and solver configuration.

The system lives on a 1D transverse coordinate x (grid samples) with a
periodic longitudinal coordinate z of period d_z.  The total potential is

    V(x, z) = V0(x) + sum_{g != 0} lam * V_g(x) * exp(2*pi*i*g*z/d_z),

so reality of V requires V_{-g} = conj(V_g) at every grid point.  Everything
downstream (auxiliary bases, effective operator, oracle) consumes the
immutable ``ValidatedProblem`` produced here.

Units default to hbar = m = 1; all reported energies follow that convention.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GridTooCoarse, HermiticityViolation, WrongMode

HERMITICITY_TOL = 1e-12

HARD_WALL = "hard-wall"
PERIODIC = "periodic"


@dataclass(frozen=True)
class UnitSystem:
    """Action and mass units; defaults give the dimensionless hbar = m = 1 convention."""

    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError(f"hbar and mass must be positive, got {self.hbar}, {self.mass}")


@dataclass(frozen=True)
class Grid:
    """Uniform transverse grid on [0, L].

    Hard-wall grids include both wall points (spacing L/(N-1)); periodic grids
    identify x = L with x = 0 (spacing L/N).
    """

    length: float
    points: int
    boundary: str = HARD_WALL

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"grid length must be positive, got {self.length}")
        if self.points < 16:
            raise ValueError(f"need at least 16 grid points, got {self.points}")
        if self.boundary not in (HARD_WALL, PERIODIC):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def spacing(self) -> float:
        if self.boundary == HARD_WALL:
            return self.length / (self.points - 1)
        return self.length / self.points

    @property
    def x(self) -> np.ndarray:
        return self.spacing * np.arange(self.points)


@dataclass(frozen=True)
class FixedBloch:
    """Fixed longitudinal Bloch momentum K_z; total energy varies with the root."""

    k_z: float


@dataclass(frozen=True)
class FixedEnergy:
    """Fixed total energy E; K_z(eps) = sqrt(2m(E-eps))/hbar varies with the root."""

    energy: float


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Declarative physical problem: potential samples, harmonics, period, mode."""

    units: UnitSystem
    grid: Grid
    v0: np.ndarray
    harmonics: dict[int, np.ndarray]
    d_z: float
    lam: float
    mode: FixedBloch | FixedEnergy

    def __post_init__(self):
        if self.d_z <= 0:
            raise ValueError(f"period d_z must be positive, got {self.d_z}")
        if self.lam < 0:
            raise ValueError(f"coupling scale must be >= 0, got {self.lam}")
        if len(self.v0) != self.grid.points:
            raise ValueError("v0 samples do not match the grid")
        for g, vg in self.harmonics.items():
            if g == 0 or not isinstance(g, (int, np.integer)):
                raise ValueError(f"harmonic index must be a nonzero integer, got {g!r}")
            if len(vg) != self.grid.points:
                raise ValueError(f"harmonic {g} samples do not match the grid")


@dataclass(frozen=True)
class SolverConfig:
    """Numerical knobs: truncations, scan window/resolution, tolerances."""

    n_basis: int = 2          # P-space size N_b
    cutoff: int = 1           # channel cutoff G
    aux_mode: str = "diagonal"        # "diagonal" | "exactblock"
    scan_window: tuple[float, float] | None = None    # None = auto from spectrum bounds
    scan_resolution: int = 64         # points per inter-pole gap
    root_tol: float = 1e-10
    pole_width: float = 1e-7
    merge_tol: float = 1e-9
    n_aux: int | None = None          # diagonal-mode Q states per channel; None = 3*n_basis

    def __post_init__(self):
        if self.n_basis < 1 or self.cutoff < 1:
            raise ValueError("n_basis and cutoff must be >= 1")
        if self.aux_mode not in ("diagonal", "exactblock"):
            raise ValueError(f"unknown auxiliary mode {self.aux_mode!r}")
        if self.scan_window is not None and not self.scan_window[0] < self.scan_window[1]:
            raise ValueError("scan window must satisfy lo < hi")
        if min(self.root_tol, self.pole_width, self.merge_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.n_aux is not None and self.n_aux < self.n_basis:
            raise ValueError("n_aux must be >= n_basis")

    @property
    def aux_count(self) -> int:
        """Q states kept per channel (diagonal mode)."""
        return self.n_aux if self.n_aux is not None else 3 * self.n_basis

    @property
    def channels(self) -> list[int]:
        """Eliminated channel indices, ascending: -G..-1, 1..G."""
        g = self.cutoff
        return [*range(-g, 0), *range(1, g + 1)]


@dataclass(frozen=True, eq=False)
class ValidatedProblem:
    """Immutable problem handle: validated spec + config, harmonics completed.

    Harmonic samples are stored with the coupling scale lam already applied;
    ``scaled_harmonic(g)`` returns lam * V_g(x) (zeros for absent g).
    """

    spec: SystemSpec
    config: SolverConfig
    _scaled: dict[int, np.ndarray] = field(repr=False, default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.spec.grid

    @property
    def units(self) -> UnitSystem:
        return self.spec.units

    @property
    def mode(self) -> FixedBloch | FixedEnergy:
        return self.spec.mode

    @property
    def v0(self) -> np.ndarray:
        return self.spec.v0

    def scaled_harmonic(self, g: int) -> np.ndarray:
        """lam * V_g samples; identically zero when the harmonic is absent."""
        vg = self._scaled.get(g)
        if vg is None:
            return np.zeros(self.grid.points, dtype=complex)
        return vg

    def harmonic_energy(self, g: int) -> float:
        """Recoil energy eps_pg = hbar^2 (2 pi g / d_z)^2 / (2 m) of channel g."""
        u = self.units
        return u.hbar**2 * (2.0 * np.pi * g / self.spec.d_z) ** 2 / (2.0 * u.mass)

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        """Grid inner product <u|v> = h * sum conj(u) v."""
        return self.grid.spacing * np.vdot(u, v)


def _complete_harmonics(harmonics: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    """Add missing conjugate partners; reject inconsistent explicit pairs."""
    out: dict[int, np.ndarray] = {}
    for g, vg in harmonics.items():
        out[g] = np.asarray(vg, dtype=complex)
    for g in sorted(harmonics, key=abs):
        partner = np.conjugate(out[g])
        if -g in out:
            dev = np.max(np.abs(out[-g] - partner))
            if dev > HERMITICITY_TOL:
                raise HermiticityViolation(
                    f"V_{-g} differs from conj(V_{g}) by {dev:.3e} (> {HERMITICITY_TOL})"
                )
        else:
            out[-g] = partner
    return out


def build_system(spec: SystemSpec, config: SolverConfig) -> ValidatedProblem:
    """Validate a system/config pair and return the immutable problem handle.

    Completes the harmonic table with conjugate partners when only g > 0 terms
    were supplied, re-checks every type invariant, and freezes all sample
    arrays read-only.  Idempotent: rebuilding from a built problem's spec
    changes nothing.
    """
    if config.n_basis > spec.grid.points / 4:
        raise GridTooCoarse(
            f"n_basis={config.n_basis} exceeds points/4={spec.grid.points / 4:.0f}"
        )
    for g in spec.harmonics:
        if abs(g) > config.cutoff:
            raise ValueError(f"harmonic index {g} exceeds channel cutoff {config.cutoff}")
    completed = _complete_harmonics(spec.harmonics)
    if not completed and spec.lam > 0:
        warnings.warn("coupling scale > 0 but no harmonics supplied; system is decoupled",
                      stacklevel=2)

    v0 = np.asarray(spec.v0, dtype=float)
    if np.iscomplexobj(spec.v0) and np.max(np.abs(np.imag(spec.v0))) > HERMITICITY_TOL:
        raise HermiticityViolation("V0 must be real-valued")

    scaled = {g: spec.lam * vg for g, vg in completed.items()}
    for arr in scaled.values():
        arr.setflags(write=False)
    v0.setflags(write=False)
    clean_spec = replace(spec, v0=v0, harmonics=completed)
    return ValidatedProblem(spec=clean_spec, config=config, _scaled=scaled)


def channel_offset(problem: ValidatedProblem, g: int) -> float:
    """Kinetic offset Delta_g = eps_pg + 2 pi hbar^2 K_z g / (m d_z) of channel g.

    Only meaningful at fixed Bloch momentum; at fixed total energy the K_z
    term depends on the eigenvalue and lives in the effective operator.
    """
    if g == 0 or not isinstance(g, (int, np.integer)):
        raise ValueError(f"channel index must be a nonzero integer, got {g!r}")
    mode = problem.mode
    if not isinstance(mode, FixedBloch):
        raise WrongMode("channel_offset requires a fixed-Bloch problem")
    u = problem.units
    cross = 2.0 * np.pi * u.hbar**2 * mode.k_z * g / (u.mass * problem.spec.d_z)
    return problem.harmonic_energy(g) + cross


# -- built-in sampled potential family (used by the CLI and tests) -------------

def sample_constant(grid: Grid, value: float) -> np.ndarray:
    return np.full(grid.points, float(value))

def sample_cos(grid: Grid, amplitude: float, k: float = 1.0) -> np.ndarray:
    return amplitude * np.cos(k * grid.x)

def sample_gaussian(grid: Grid, amplitude: float, center: float, width: float) -> np.ndarray:
    return amplitude * np.exp(-0.5 * ((grid.x - center) / width) ** 2)

POTENTIAL_KINDS = {
    "constant": sample_constant,
    "cos": sample_cos,
    "gaussian": sample_gaussian,
}
