"""Config ingestion, pipeline orchestration and artifact emission.

Config documents are TOML with sections [units], [grid], [potential],
[[harmonics]], [mode], [solver], [pipeline]; see the commented example in the
repository README.  Unknown keys are rejected, defaults are filled in and the
effective document is echoed into every artifact together with its hash and
the tool version, so reruns with the same config and seed are byte-identical.
Output location and worker count are execution details and stay out of the
hash.  Logs are plain text (no ANSI), so NO_COLOR needs no special handling.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .complexity_metrics import report as complexity_report
from .complexity_metrics import sweep as run_sweep
from .effective_potential import build_operator
from .errors import SchemaError, SolverError, UnknownKey
from .fractal_geometry import (OBSERVABLE_KERNEL_PROBE, OBSERVABLE_SMALLEST_EIG,
                               box_count, branch_graph, default_ladder,
                               support_energy_curve)
from .model import (FixedBloch, FixedEnergy, Grid, POTENTIAL_KINDS, SolverConfig,
                    SystemSpec, UnitSystem, ValidatedProblem, build_system)
from .realisation_solver import (enumerate_roots, group_realisations,
                                 reconstruct_total, verify_against_oracle)

PIPELINES = ("verify", "sweep", "fractal", "wavefunction")

_POTENTIAL_PARAMS = {
    "constant": {"value"},
    "cos": {"amplitude", "k"},
    "gaussian": {"amplitude", "center", "width"},
}

_SCHEMA = {
    "units": {"hbar", "mass"},
    "grid": {"length", "points", "boundary"},
    "potential": {"period", "coupling", "v0"},
    "harmonics": None,     # list of tables, validated separately
    "mode": {"kind", "k_z", "energy"},
    "solver": {"basis_size", "channel_cutoff", "auxiliary", "scan_window",
               "scan_resolution", "root_tolerance", "pole_exclusion",
               "degeneracy_tolerance", "aux_states"},
    "pipeline": {"kind", "seed", "out", "jobs", "f", "k", "values", "window",
                 "resolution", "ladder_depth", "observable", "probe_index",
                 "support_deltas"},
}


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully-defaulted run description."""

    document: dict               # normalized config (round-trips losslessly)

    @property
    def out_dir(self) -> str:
        return self.document["pipeline"]["out"]

    @property
    def jobs(self) -> int:
        return self.document["pipeline"]["jobs"]

    @property
    def seed(self) -> int:
        return self.document["pipeline"]["seed"]

    @property
    def pipeline(self) -> str:
        return self.document["pipeline"]["kind"]

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.document))

    def hashed_document(self) -> dict:
        """Config content that determines the outputs (out/jobs excluded)."""
        doc = self.to_dict()
        doc["pipeline"].pop("out", None)
        doc["pipeline"].pop("jobs", None)
        return doc

    def config_hash(self) -> str:
        canon = json.dumps(self.hashed_document(), sort_keys=True,
                           separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def build_problem(self) -> ValidatedProblem:
        doc = self.document
        units = UnitSystem(**doc["units"])
        grid = Grid(length=doc["grid"]["length"], points=doc["grid"]["points"],
                    boundary=doc["grid"]["boundary"])
        v0 = _sample(grid, doc["potential"]["v0"])
        harmonics = {h["g"]: _sample(grid, {k: v for k, v in h.items() if k != "g"})
                     for h in doc["harmonics"]}
        mode_doc = doc["mode"]
        if mode_doc["kind"] == "fixed_bloch":
            mode = FixedBloch(k_z=mode_doc["k_z"])
        else:
            mode = FixedEnergy(energy=mode_doc["energy"])
        spec = SystemSpec(units=units, grid=grid, v0=v0, harmonics=harmonics,
                          d_z=doc["potential"]["period"],
                          lam=doc["potential"]["coupling"], mode=mode)
        s = doc["solver"]
        window = s["scan_window"]
        config = SolverConfig(
            n_basis=s["basis_size"], cutoff=s["channel_cutoff"],
            aux_mode=s["auxiliary"],
            scan_window=tuple(window) if window is not None else None,
            scan_resolution=s["scan_resolution"], root_tol=s["root_tolerance"],
            pole_width=s["pole_exclusion"], merge_tol=s["degeneracy_tolerance"],
            n_aux=s["aux_states"])
        return build_system(spec, config)


def _sample(grid: Grid, table: dict) -> np.ndarray:
    kind = table["kind"]
    params = {k: v for k, v in table.items() if k != "kind"}
    return POTENTIAL_KINDS[kind](grid, **params)


def _require(table: dict, section: str, key: str):
    if key not in table:
        raise SchemaError(f"[{section}] is missing required key {key!r}")
    return table[key]


def _check_keys(section: str, table: dict, allowed: set):
    for key in table:
        if key not in allowed:
            raise UnknownKey(f"unknown key {key!r} in [{section}]")


def _check_potential_table(owner: str, table: dict, extra: set = frozenset()):
    if not isinstance(table, dict) or "kind" not in table:
        raise SchemaError(f"{owner} must be a table with a 'kind' key")
    kind = table["kind"]
    if kind not in _POTENTIAL_PARAMS:
        raise SchemaError(f"{owner}: unknown potential kind {kind!r}")
    for key in table:
        if key not in _POTENTIAL_PARAMS[kind] | {"kind"} | extra:
            raise UnknownKey(f"unknown key {key!r} in {owner} ({kind})")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML config document; fill and echo all defaults."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"config is not valid TOML: {exc}") from exc
    return _normalize(raw)


def from_dict(document: dict) -> RunConfig:
    """Rebuild a RunConfig from a previously echoed document."""
    return _normalize(json.loads(json.dumps(document)))


def _normalize(raw: dict) -> RunConfig:
    for section in raw:
        if section not in _SCHEMA:
            raise UnknownKey(f"unknown section [{section}]")
        if _SCHEMA[section] is not None:
            if not isinstance(raw[section], dict):
                raise SchemaError(f"[{section}] must be a table")
            _check_keys(section, raw[section], _SCHEMA[section])

    units = {"hbar": 1.0, "mass": 1.0, **raw.get("units", {})}

    grid_tbl = raw.get("grid", {})
    grid = {"length": float(_require(grid_tbl, "grid", "length")),
            "points": int(_require(grid_tbl, "grid", "points")),
            "boundary": grid_tbl.get("boundary", "hard-wall")}

    pot_tbl = raw.get("potential", {})
    v0 = pot_tbl.get("v0", {"kind": "constant", "value": 0.0})
    _check_potential_table("potential.v0", v0)
    potential = {"period": float(_require(pot_tbl, "potential", "period")),
                 "coupling": float(pot_tbl.get("coupling", 1.0)),
                 "v0": v0}

    harmonics = raw.get("harmonics", [])
    if not isinstance(harmonics, list):
        raise SchemaError("[[harmonics]] must be an array of tables")
    seen = set()
    for h in harmonics:
        if "g" not in h:
            raise SchemaError("harmonic entry is missing its index g")
        _check_potential_table(f"harmonics g={h['g']}", h, extra={"g"})
        if h["g"] in seen:
            raise SchemaError(f"duplicate harmonic index g={h['g']}")
        seen.add(h["g"])

    mode_tbl = raw.get("mode", {})
    kind = _require(mode_tbl, "mode", "kind")
    if kind not in ("fixed_bloch", "fixed_energy"):
        raise SchemaError(f"mode.kind must be fixed_bloch or fixed_energy, got {kind!r}")
    if "k_z" in mode_tbl and "energy" in mode_tbl:
        raise SchemaError("mode keys k_z and energy are mutually exclusive")
    if kind == "fixed_bloch":
        mode = {"kind": kind, "k_z": float(_require(mode_tbl, "mode", "k_z"))}
    else:
        mode = {"kind": kind, "energy": float(_require(mode_tbl, "mode", "energy"))}

    s = raw.get("solver", {})
    window = s.get("scan_window")
    if window is not None:
        window = [float(window[0]), float(window[1])]
    solver = {"basis_size": int(s.get("basis_size", 2)),
              "channel_cutoff": int(s.get("channel_cutoff", 1)),
              "auxiliary": s.get("auxiliary", "exactblock"),
              "scan_window": window,
              "scan_resolution": int(s.get("scan_resolution", 64)),
              "root_tolerance": float(s.get("root_tolerance", 1e-10)),
              "pole_exclusion": float(s.get("pole_exclusion", 1e-7)),
              "degeneracy_tolerance": float(s.get("degeneracy_tolerance", 1e-9)),
              "aux_states": s.get("aux_states")}
    if solver["auxiliary"] not in ("diagonal", "exactblock"):
        raise SchemaError(f"solver.auxiliary must be diagonal or exactblock")

    p = raw.get("pipeline", {})
    kind = _require(p, "pipeline", "kind")
    if kind not in PIPELINES:
        raise SchemaError(f"pipeline.kind must be one of {PIPELINES}, got {kind!r}")
    pipeline = {"kind": kind,
                "seed": int(p.get("seed", 0)),
                "out": p.get("out", "out"),
                "jobs": int(p.get("jobs", 1)),
                "f": float(p.get("f", 1.0)),
                "k": float(p.get("k", 1.0)),
                "values": [float(v) for v in p.get("values", [])],
                "window": ([float(p["window"][0]), float(p["window"][1])]
                           if p.get("window") is not None else None),
                "resolution": int(p.get("resolution", 1024)),
                "ladder_depth": int(p.get("ladder_depth", 8)),
                "observable": p.get("observable", OBSERVABLE_SMALLEST_EIG),
                "probe_index": p.get("probe_index"),
                "support_deltas": [float(v) for v in p.get(
                    "support_deltas", [1.0, 0.5, 0.25, 0.125])]}
    if pipeline["observable"] not in (OBSERVABLE_SMALLEST_EIG, OBSERVABLE_KERNEL_PROBE):
        raise SchemaError(f"unknown pipeline.observable {pipeline['observable']!r}")
    if kind == "sweep" and not pipeline["values"]:
        raise SchemaError("sweep pipeline needs a nonempty pipeline.values grid")

    document = {"units": units, "grid": grid, "potential": potential,
                "harmonics": list(harmonics), "mode": mode, "solver": solver,
                "pipeline": pipeline}
    config = RunConfig(document=document)
    config.build_problem()      # surface invariant violations at parse time
    return config


# -- artifact helpers -----------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows, config: RunConfig) -> None:
    lines = [f"# epsolver {__version__}",
             f"# config {config.config_hash()}",
             "# " + ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict, config: RunConfig) -> None:
    doc = {"meta": {"tool": "epsolver", "version": __version__,
                    "config_hash": config.config_hash(),
                    "config": config.hashed_document()},
           **payload}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _write_plot(path: Path, header: list[str], columns, config: RunConfig) -> None:
    lines = [f"# epsolver {__version__}",
             f"# config {config.config_hash()}",
             "# " + " ".join(header)]
    for row in zip(*columns):
        lines.append(" ".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


# -- pipelines -----------------------------------------------------------------

def _pipeline_verify(config: RunConfig, out: Path) -> int:
    doc = config.document["pipeline"]
    problem = config.build_problem()
    verification = verify_against_oracle(problem)
    op = build_operator(problem)
    roots = enumerate_roots(op)
    grouped = group_realisations(roots, problem.config)
    rep = complexity_report(grouped, f=doc["f"], k=doc["k"])

    rows = []
    for i, root in enumerate(roots):
        oracle_eps = verification.pairs[i][1] if i < len(verification.pairs) else float("nan")
        dev = abs(root.eps - oracle_eps) if i < len(verification.pairs) else float("nan")
        # grouped roots are re-tagged copies; match them by energy
        tag = next(((real.index, lvl.level) for real in grouped.realisations
                    for lvl in real.levels if lvl.eps == root.eps), (-1, -1))
        rows.append((i, root.eps, oracle_eps, dev, root.dominant, tag[0], tag[1]))

    _write_json(out / "report.json", {
        "verification": verification.to_dict(),
        "complexity": rep.to_dict(),
        "realisations": [{"index": real.index,
                          "energies": [lvl.eps for lvl in real.levels],
                          "dominants": [lvl.dominant for lvl in real.levels]}
                         for real in grouped.realisations],
        "ungrouped": [r.eps for r in grouped.ungrouped],
    }, config)
    _write_csv(out / "roots.csv",
               ["index", "eps_root", "eps_oracle", "deviation", "dominant",
                "realisation", "level"], rows, config)
    _write_plot(out / "plotdata" / "roots_vs_oracle.dat",
                ["eps_root", "eps_oracle"],
                ([p[0] for p in verification.pairs], [p[1] for p in verification.pairs]),
                config)
    print(f"N_R={rep.n_realisations} C={rep.c:.6g} S={rep.s:.6g} "
          f"max_dev={verification.max_eps_deviation:.3e}")
    return 0 if verification.passed else 2


def _pipeline_sweep(config: RunConfig, out: Path) -> int:
    doc = config.document["pipeline"]
    problem = config.build_problem()
    result = run_sweep(problem, doc["values"], f=doc["f"], k=doc["k"],
                       seed=config.seed, jobs=config.jobs)
    rows = [(r.value, r.seed, r.n_realisations, r.c, r.s, r.root_count,
             r.max_oracle_deviation, r.failed) for r in result.rows]
    _write_csv(out / "sweep.csv",
               ["value", "seed", "n_realisations", "c", "s", "root_count",
                "max_oracle_deviation", "failed"], rows, config)
    _write_json(out / "sweep.json", {"sweep": result.to_dict()}, config)
    _write_plot(out / "plotdata" / "complexity_vs_coupling.dat",
                ["value", "c", "n_realisations"],
                ([r.value for r in result.rows], [r.c for r in result.rows],
                 [r.n_realisations for r in result.rows]), config)
    good = [r for r in result.rows if not r.failed]
    last = good[-1] if good else None
    print(f"rows={len(result.rows)} failed={sum(r.failed for r in result.rows)} "
          f"transition={result.transition} "
          f"last: N_R={last.n_realisations if last else '-'} "
          f"C={last.c if last else float('nan'):.6g}")
    return 0 if all(not r.failed for r in result.rows) else 2


def _pipeline_fractal(config: RunConfig, out: Path) -> int:
    doc = config.document["pipeline"]
    problem = config.build_problem()
    op = build_operator(problem)
    roots = enumerate_roots(op)
    grouped = group_realisations(roots, problem.config)
    ladder = default_ladder(doc["ladder_depth"])

    box_rows = []
    slopes = []
    for real in grouped.realisations:
        if doc["window"] is not None:
            window = tuple(doc["window"])
        else:
            lo, hi = float(real.energies.min()), float(real.energies.max())
            pad = 0.1 + 0.05 * (hi - lo)
            window = (lo - pad, hi + pad)
        graph = branch_graph(op, real.index, window, doc["resolution"],
                             observable=doc["observable"],
                             probe_index=doc["probe_index"])
        geometry = box_count(graph.points, ladder)
        box_rows.extend(geometry.to_rows(real.index))
        slopes.append({"realisation": real.index, "slope": geometry.slope,
                       "residual": geometry.residual,
                       "window": [window[0], window[1]]})
        _write_plot(out / "plotdata" / f"branch_{real.index}.dat",
                    ["eps", doc["observable"]], (graph.eps, graph.values), config)

    support = support_energy_curve(problem, doc["support_deltas"]) \
        if problem.grid.boundary == "hard-wall" else []
    _write_csv(out / "boxcount.csv", ["delta", "count", "realisation"],
               box_rows, config)
    _write_csv(out / "support_curve.csv", ["delta", "eta"], support, config)
    _write_json(out / "fractal.json", {
        "branches": slopes,
        "support_curve": [{"delta": d, "eta": e} for d, e in support],
    }, config)
    if support:
        _write_plot(out / "plotdata" / "support_curve.dat", ["delta", "eta"],
                    ([d for d, _ in support], [e for _, e in support]), config)
    mean_slope = float(np.mean([s["slope"] for s in slopes])) if slopes else float("nan")
    print(f"branches={len(slopes)} mean_slope={mean_slope:.4g} "
          f"support_points={len(support)}")
    return 0


def _pipeline_wavefunction(config: RunConfig, out: Path) -> int:
    problem = config.build_problem()
    op = build_operator(problem)
    roots = enumerate_roots(op)
    waves = [reconstruct_total(op, r) for r in roots]
    norms = [w.cell_norm() for w in waves]
    ok = all(abs(n - 1.0) < 1e-8 for n in norms)

    rows = []
    for k, wave in enumerate(waves):
        for g in wave.channel_order:
            for n, coeff in enumerate(wave.coefficients[g]):
                rows.append((k, g, n, float(np.real(coeff)), float(np.imag(coeff))))
    _write_csv(out / "channels.csv", ["root", "g", "n", "re", "im"], rows, config)
    _write_json(out / "wavefunction.json", {
        "roots": [{"eps": w.root.eps, "k_z": w.k_z, "cell_norm": norms[i],
                   "dominant": w.root.dominant}
                  for i, w in enumerate(waves)],
        "normalized": ok,
    }, config)
    x = problem.grid.x
    densities = [np.abs(w.evaluate(np.zeros(1))[0]) ** 2 for w in waves]
    _write_plot(out / "plotdata" / "density_z0.dat",
                ["x"] + [f"root{k}" for k in range(len(waves))],
                (x, *densities), config)
    print(f"roots={len(waves)} max_norm_error={max(abs(n - 1.0) for n in norms):.3e}")
    return 0 if ok else 2


def run(config: RunConfig) -> int:
    """Execute the selected pipeline; returns the process exit status."""
    out = Path(config.out_dir)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    dispatch = {"verify": _pipeline_verify, "sweep": _pipeline_sweep,
                "fractal": _pipeline_fractal, "wavefunction": _pipeline_wavefunction}
    try:
        return dispatch[config.pipeline](config, out)
    except SolverError as exc:
        record = {"error": type(exc).__name__, "message": str(exc),
                  "pipeline": config.pipeline}
        (out / "error.json").write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="epsolver",
        description="Effective-potential realisation solver and diagnostics")
    parser.add_argument("--config", required=True, help="TOML config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--jobs", type=int, help="sweep worker count")
    parser.add_argument("--seed", type=int, help="reproducibility seed")
    parser.add_argument("--pipeline", choices=PIPELINES,
                        help="pipeline selector (overrides config)")
    parser.add_argument("--mode", choices=("diagonal", "exactblock"),
                        help="auxiliary mode (overrides config)")
    args = parser.parse_args(argv)

    try:
        config = parse_config(Path(args.config).read_text())
    except (OSError, SolverError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        raise SystemExit(1)

    doc = config.to_dict()
    if args.out is not None:
        doc["pipeline"]["out"] = args.out
    if args.jobs is not None:
        doc["pipeline"]["jobs"] = args.jobs
    if args.seed is not None:
        doc["pipeline"]["seed"] = args.seed
    if args.pipeline is not None:
        doc["pipeline"]["kind"] = args.pipeline
    if args.mode is not None:
        doc["solver"]["auxiliary"] = args.mode
    config = from_dict(doc)
    raise SystemExit(run(config))


if __name__ == "__main__":
    main()
