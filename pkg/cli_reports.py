#!/usr/bin/env python3
"""
Batch experiment runner for the greensolve lab.

Reads one YAML experiment file, runs a pipeline subcommand and writes a
JSON report plus CSV tables:

    assemble  build (or load from the kernel cache) the Green matrix
    solve     bounded direct/iterative solve or the L1 double limit
    csola     cutoff ladder, concentration masses and reduced measure
    ztest     Z equivalence suite with the integral ladder
    scaling   indicator scaling, local scaling and near-support ratios

Reports are deterministic for a given config and seed: floats are written
in their shortest round-trip form, keys are sorted and no timings are
included.

Usage:
    python cli_reports.py csola --config configs/transition_s05_b15.yml
    python cli_reports.py ztest --config configs/transition_s05_b15.yml --seed 3
    ./greensolve solve --config configs/torsion_s1.yml --cache-dir cache
"""

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml

from diagnostics import z_equivalence_suite
from domain_grid import QuadGrid, build_ball_grid
from errors import ConfigError, GreenSolveError
from green_kernel import GreenKernel, KernelVariant
from green_operator import (
    GreenMatrix,
    assemble,
    atom_column,
    indicator_scaling,
    local_scaling,
    loglog_slope,
    near_support_ratio,
)
from kernel_cache import KernelCache
from logging_utils import log_summary, setup_logging
from measures_potentials import Atom, Potential, RadonMeasure, Singularity, z_report
from schrodinger import (
    CsolaSolver,
    CsolaThresholds,
    solve_bounded_direct,
    solve_bounded_iterative,
    solve_l1,
    vu_l1_estimate,
)

REPORT_SCHEMA_VERSION = 1
COMMANDS = ("assemble", "solve", "csola", "ztest", "scaling")
SOLVE_METHODS = ("direct", "iterative", "l1")


@dataclass
class GridConfig:
    dim: int = 3
    radial_count: int = 20
    angular_count: int = 48
    octaves: Optional[int] = 10
    radial_rule: str = "geometric"


@dataclass
class KernelConfig:
    variant: str = "rfl"
    s: float = 0.5


@dataclass
class SingularityConfig:
    point: List[float]
    beta: Optional[float] = None
    coeff: float = 1.0


@dataclass
class PotentialConfig:
    c0: float = 0.0
    background_file: Optional[str] = None
    singularities: List[SingularityConfig] = field(default_factory=list)


@dataclass
class AtomConfig:
    point: List[float]
    mass: float = 1.0


@dataclass
class MeasureConfig:
    density: Optional[float] = None
    density_file: Optional[str] = None
    atoms: List[AtomConfig] = field(default_factory=list)


@dataclass
class LaddersConfig:
    cutoffs: Optional[List[float]] = None
    rho_ladder: Optional[List[float]] = None


@dataclass
class TolerancesConfig:
    solver_tol: float = 1e-10
    alpha_solution: float = 0.05
    alpha_consensus: float = 0.1
    zero_ratio: float = 0.05
    column_ratio: float = 0.02


@dataclass
class OutputsConfig:
    report_path: str = "reports/report.json"
    tables_path: str = "reports/tables"


@dataclass
class SolveConfig:
    method: str = "direct"


@dataclass
class ExperimentConfig:
    """
    One experiment, as read from a YAML file.

    Relative file names (background_file, density_file, outputs) are
    resolved against base_dir, the directory of the config file.
    """

    name: str = "experiment"
    grid: GridConfig = field(default_factory=GridConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    ladders: LaddersConfig = field(default_factory=LaddersConfig)
    tolerances: TolerancesConfig = field(default_factory=TolerancesConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)
    solve: SolveConfig = field(default_factory=SolveConfig)
    cache_dir: Optional[str] = None
    seed: int = 0
    workers: Optional[int] = None
    base_dir: str = field(default=".", repr=False)

    def resolve(self, path: Optional[str]) -> Optional[str]:
        if path is None or os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("base_dir")
        # the cache location never changes results
        data.pop("cache_dir")
        return data


def _line_map(text: str) -> Dict[str, int]:
    """Dotted key path -> 1-based line of its YAML node."""
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                path = f"{prefix}.{key.value}" if prefix else str(key.value)
                lines[path] = key.start_mark.line + 1
                walk(value, path)
        elif isinstance(node, yaml.SequenceNode):
            for index, item in enumerate(node.value):
                path = f"{prefix}[{index}]"
                lines[path] = item.start_mark.line + 1
                walk(item, path)

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return lines


class _Reader:
    """Typed access to the parsed YAML tree with field/line diagnostics."""

    def __init__(self, lines: Dict[str, int]):
        self.lines = lines

    def fail(self, path: str, message: str):
        raise ConfigError(message, field=path, line=self.lines.get(path))

    def mapping(self, data, path: str, allowed) -> dict:
        if data is None:
            return {}
        if not isinstance(data, dict):
            self.fail(path, "expected a mapping")
        for key in data:
            if key not in allowed:
                child = f"{path}.{key}" if path else str(key)
                self.fail(child, f"unknown key {key!r}")
        return data

    def number(self, data: dict, path: str, key: str, default, kind=float, minimum=None):
        full = f"{path}.{key}" if path else key
        value = data.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(full, f"expected a number, got {value!r}")
        if kind is int and int(value) != value:
            self.fail(full, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            self.fail(full, f"must be >= {minimum}, got {value!r}")
        return kind(value)

    def text(self, data: dict, path: str, key: str, default, choices=None):
        full = f"{path}.{key}" if path else key
        value = data.get(key, default)
        if value is None:
            return None
        if not isinstance(value, str):
            self.fail(full, f"expected a string, got {value!r}")
        if choices is not None and value not in choices:
            self.fail(full, f"must be one of {list(choices)}, got {value!r}")
        return value

    def numbers(self, data: dict, path: str, key: str):
        full = f"{path}.{key}" if path else key
        value = data.get(key)
        if value is None:
            return None
        if not isinstance(value, list) or not value:
            self.fail(full, "expected a nonempty list of numbers")
        for index, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                self.fail(f"{full}[{index}]", f"expected a number, got {item!r}")
        return [float(v) for v in value]

    def items(self, data: dict, path: str, key: str) -> List[Tuple[str, dict]]:
        full = f"{path}.{key}"
        value = data.get(key) or []
        if not isinstance(value, list):
            self.fail(full, "expected a list")
        return [(f"{full}[{index}]", item) for index, item in enumerate(value)]


def _parse(data, lines: Dict[str, int], base_dir: str) -> ExperimentConfig:
    reader = _Reader(lines)
    top = reader.mapping(
        data,
        "",
        (
            "name", "grid", "kernel", "potential", "measure", "ladders",
            "tolerances", "outputs", "solve", "cache_dir", "seed", "workers",
        ),
    )

    section = reader.mapping(top.get("grid"), "grid", GridConfig.__dataclass_fields__)
    defaults = GridConfig()
    grid = GridConfig(
        dim=reader.number(section, "grid", "dim", defaults.dim, int, 3),
        radial_count=reader.number(section, "grid", "radial_count", defaults.radial_count, int, 4),
        angular_count=reader.number(section, "grid", "angular_count", defaults.angular_count, int, 6),
        octaves=reader.number(section, "grid", "octaves", defaults.octaves, int, 1),
        radial_rule=reader.text(
            section, "grid", "radial_rule", defaults.radial_rule, ("legendre", "geometric")
        ),
    )

    section = reader.mapping(top.get("kernel"), "kernel", KernelConfig.__dataclass_fields__)
    variant = reader.text(section, "kernel", "variant", "rfl", [v.value for v in KernelVariant])
    kernel = KernelConfig(
        variant=variant,
        s=reader.number(section, "kernel", "s", 1.0 if variant == KernelVariant.CLASSICAL.value else 0.5),
    )
    if not 0.0 < kernel.s <= 1.0:
        reader.fail("kernel.s", f"s must lie in (0, 1], got {kernel.s}")
    if (kernel.variant == KernelVariant.CLASSICAL.value) != (kernel.s == 1.0):
        reader.fail("kernel.variant", "the classical kernel is the s = 1 kernel and only that")

    section = reader.mapping(top.get("potential"), "potential", PotentialConfig.__dataclass_fields__)
    singularities = []
    for path, item in reader.items(section, "potential", "singularities"):
        item = reader.mapping(item, path, SingularityConfig.__dataclass_fields__)
        point = reader.numbers(item, path, "point")
        if point is None or len(point) != grid.dim:
            reader.fail(f"{path}.point", f"expected {grid.dim} coordinates")
        singularities.append(
            SingularityConfig(
                point=point,
                beta=reader.number(item, path, "beta", None, float, 0.0),
                coeff=reader.number(item, path, "coeff", 1.0, float, 0.0),
            )
        )
    potential = PotentialConfig(
        c0=reader.number(section, "potential", "c0", 0.0, float, 0.0),
        background_file=reader.text(section, "potential", "background_file", None),
        singularities=singularities,
    )

    section = reader.mapping(top.get("measure"), "measure", MeasureConfig.__dataclass_fields__)
    atoms = []
    for path, item in reader.items(section, "measure", "atoms"):
        item = reader.mapping(item, path, AtomConfig.__dataclass_fields__)
        point = reader.numbers(item, path, "point")
        if point is None or len(point) != grid.dim:
            reader.fail(f"{path}.point", f"expected {grid.dim} coordinates")
        atoms.append(AtomConfig(point=point, mass=reader.number(item, path, "mass", 1.0)))
    measure = MeasureConfig(
        density=reader.number(section, "measure", "density", None),
        density_file=reader.text(section, "measure", "density_file", None),
        atoms=atoms,
    )
    if measure.density is not None and measure.density_file is not None:
        reader.fail("measure.density_file", "give either density or density_file, not both")

    section = reader.mapping(top.get("ladders"), "ladders", LaddersConfig.__dataclass_fields__)
    ladders = LaddersConfig(
        cutoffs=reader.numbers(section, "ladders", "cutoffs"),
        rho_ladder=reader.numbers(section, "ladders", "rho_ladder"),
    )

    section = reader.mapping(top.get("tolerances"), "tolerances", TolerancesConfig.__dataclass_fields__)
    defaults = TolerancesConfig()
    tolerances = TolerancesConfig(
        **{
            name: reader.number(section, "tolerances", name, getattr(defaults, name), float, 0.0)
            for name in TolerancesConfig.__dataclass_fields__
        }
    )

    section = reader.mapping(top.get("outputs"), "outputs", OutputsConfig.__dataclass_fields__)
    defaults = OutputsConfig()
    outputs = OutputsConfig(
        report_path=reader.text(section, "outputs", "report_path", defaults.report_path),
        tables_path=reader.text(section, "outputs", "tables_path", defaults.tables_path),
    )

    section = reader.mapping(top.get("solve"), "solve", SolveConfig.__dataclass_fields__)
    solve = SolveConfig(method=reader.text(section, "solve", "method", "direct", SOLVE_METHODS))

    config = ExperimentConfig(
        name=reader.text(top, "", "name", "experiment"),
        grid=grid,
        kernel=kernel,
        potential=potential,
        measure=measure,
        ladders=ladders,
        tolerances=tolerances,
        outputs=outputs,
        solve=solve,
        cache_dir=reader.text(top, "", "cache_dir", None),
        seed=reader.number(top, "", "seed", 0, int, 0),
        workers=reader.number(top, "", "workers", None, int, 1),
        base_dir=base_dir,
    )
    for key, path in (
        ("potential.background_file", config.potential.background_file),
        ("measure.density_file", config.measure.density_file),
    ):
        if path is not None and not os.path.exists(config.resolve(path)):
            reader.fail(key, f"file not found: {path}")
    return config


def load_config(path: str) -> ExperimentConfig:
    """
    Load and validate an experiment file.

    Raises:
        ConfigError: On YAML syntax errors, unknown keys, wrong types,
            out-of-range values or missing referenced files
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {e}", line=mark.line + 1 if mark else None) from e
    return _parse(data, _line_map(text), os.path.dirname(os.path.abspath(path)))


def read_node_values(path: str, grid: QuadGrid) -> np.ndarray:
    """
    Per-node values from a `node,value` CSV with a `# grid_hash=<hex>` line.

    The column header may be a `# node,value` comment or a bare
    `node,value` line.

    Raises:
        ConfigError: If the hash or the node set does not match the grid
    """
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline().strip()
        body = handle.read().splitlines()
    if not first.startswith("# grid_hash="):
        raise ConfigError(f"{path} lacks the '# grid_hash=' header", line=1)
    if first.split("=", 1)[1].strip() != grid.grid_hash.hex():
        raise ConfigError(f"{path} was written for a different grid", line=1)
    rows = [line for line in body if line.strip() and not line.lstrip().startswith("#")]
    if rows and rows[0].replace(" ", "").lower() == "node,value":
        rows = rows[1:]
    if not rows:
        raise ConfigError(f"{path} holds no node rows")
    try:
        table = np.loadtxt(rows, delimiter=",", ndmin=2)
    except ValueError as e:
        raise ConfigError(f"{path} holds a row that is not 'node,value': {e}") from e
    if table.shape[1] != 2:
        raise ConfigError(f"{path} must have exactly two columns, node and value")
    nodes = table[:, 0].astype(int)
    if sorted(nodes.tolist()) != list(range(grid.size)):
        raise ConfigError(f"{path} must hold exactly one value per node 0..{grid.size - 1}")
    values = np.empty(grid.size)
    values[nodes] = table[:, 1]
    return values


def write_node_values(path: str, grid: QuadGrid, values) -> None:
    lines = [f"# grid_hash={grid.grid_hash.hex()}", "# node,value"]
    lines.extend(f"{i},{format(float(v), '.17g')}" for i, v in enumerate(values))
    atomic_write(path, "\n".join(lines) + "\n")


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(temp_path, path)
    except OSError:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise


def _plain(value):
    """Convert numpy values and tuples to JSON-ready Python objects, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps_report(report: dict) -> str:
    """
    Deterministic JSON text: sorted keys, floats in their shortest
    round-trip form (at most 17 significant digits), NaN and infinities
    written as null.
    """
    return json.dumps(_plain(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(format(v, ".17g") if isinstance(v, float) else str(v) for v in row)
        )
    return "\n".join(lines) + "\n"


class ExperimentRunner:
    """
    Runs one experiment configuration.

    Args:
        config: ExperimentConfig
        logger: Optional logger; defaults to logs/greensolve.log
    """

    def __init__(self, config: ExperimentConfig, logger=None):
        self.config = config
        self.logger = logger or setup_logging("logs/greensolve.log", __name__)
        self._grid = None
        self._matrix = None
        self.tables = {}

    @property
    def grid(self) -> QuadGrid:
        if self._grid is None:
            cfg = self.config.grid
            self._grid = build_ball_grid(
                cfg.dim,
                cfg.radial_count,
                cfg.angular_count,
                radial_rule=cfg.radial_rule,
                octaves=cfg.octaves if cfg.radial_rule == "geometric" else None,
            )
        return self._grid

    @property
    def kernel(self) -> GreenKernel:
        cfg = self.config.kernel
        if cfg.variant == KernelVariant.CLASSICAL.value:
            return GreenKernel.classical(self.config.grid.dim)
        return GreenKernel.rfl(self.config.grid.dim, cfg.s)

    @property
    def matrix(self) -> GreenMatrix:
        if self._matrix is None:
            if self.config.cache_dir:
                cache = KernelCache(self.config.resolve(self.config.cache_dir), self.logger)
                self._matrix = cache.get_or_assemble(self.kernel, self.grid, workers=self.config.workers)
            else:
                self._matrix = assemble(self.kernel, self.grid, workers=self.config.workers)
        return self._matrix

    def potential(self) -> Potential:
        cfg = self.config.potential
        background = None
        if cfg.background_file:
            background = read_node_values(self.config.resolve(cfg.background_file), self.grid)
        singularities = tuple(Singularity(tuple(s.point), s.beta, s.coeff) for s in cfg.singularities)
        return Potential(background, cfg.c0, singularities)

    def measure(self) -> RadonMeasure:
        cfg = self.config.measure
        density = None
        if cfg.density_file:
            density = read_node_values(self.config.resolve(cfg.density_file), self.grid)
        elif cfg.density is not None:
            density = np.full(self.grid.size, cfg.density)
        atoms = tuple(Atom(tuple(a.point), a.mass) for a in cfg.atoms)
        return RadonMeasure(density, atoms)

    def thresholds(self) -> CsolaThresholds:
        tol = self.config.tolerances
        return CsolaThresholds(tol.alpha_solution, tol.alpha_consensus)

    def _csola_solver(self, potential: Potential) -> CsolaSolver:
        ladders = self.config.ladders
        return CsolaSolver(
            self.matrix,
            potential,
            ladders.cutoffs,
            ladders.rho_ladder,
            self.thresholds(),
            self.config.workers,
            self.logger,
        )

    def run_assemble(self) -> dict:
        matrix = self.matrix
        return {
            "diagonal_mode": matrix.diagonal_mode,
            "symmetry_defect": matrix.symmetry_defect(),
            "torsion_max": float(matrix.torsion.max()),
            "torsion_at_origin": float(matrix.torsion[0]),
            "grid_volume": self.grid.volume,
        }

    def run_solve(self) -> dict:
        method = self.config.solve.method
        matrix, grid = self.matrix, self.grid
        potential, mu = self.potential(), self.measure()
        if method == "l1":
            if mu.atoms:
                raise ConfigError("the l1 method takes density data only", field="measure.atoms")
            density = mu.density if mu.density is not None else np.zeros(grid.size)
            report = solve_l1(matrix, potential, density, tol=max(self.config.tolerances.solver_tol, 1e-8))
            values = potential.values(grid)
        else:
            values = potential.values(grid)
            if not np.all(np.isfinite(values)):
                raise ConfigError(
                    "bounded solvers need a finite potential; use csola or solve.method l1",
                    field="solve.method",
                )
            if method == "direct":
                report = solve_bounded_direct(matrix, values, mu)
            else:
                report = solve_bounded_iterative(
                    matrix, values, mu, tol=self.config.tolerances.solver_tol
                )
        self.tables["solution"] = _csv(
            ("node", "radius", "u"),
            [(i, float(r), float(u)) for i, (r, u) in enumerate(zip(grid.radii, report.u))],
        )
        result = {
            "method": report.method.value,
            "u_at_origin": float(report.u[0]),
            "u_l1": grid.lp_norm(report.u, 1),
            "u_max": float(report.u.max()),
            "residual": report.residual,
            "iterations": report.iterations,
            "bracket_gap": report.bracket_gap,
            "vu_l1": report.vu_l1(grid.weights),
        }
        if np.all(np.isfinite(values)):
            estimate = vu_l1_estimate(report, values, mu, matrix, centers=potential.singular_points or None)
            result["vu_estimate"] = {"lhs": estimate.lhs, "rhs": estimate.rhs}
        return result

    def run_csola(self) -> dict:
        grid = self.grid
        potential, mu = self.potential(), self.measure()
        solver = self._csola_solver(potential)
        report = solver.run(mu)
        self.tables["ladder"] = _csv(
            ("k", "l1_norm", "l1_change", "vu_mass"),
            [(p.k, p.l1_norm, p.l1_change, p.vu_mass) for p in report.ladder],
        )
        reduced = report.mu_reduced
        return {
            "cutoffs": solver.cutoffs,
            "ladder": [asdict(point) for point in report.ladder],
            "alphas": [asdict(alpha) for alpha in report.alphas],
            "is_solution": report.is_solution,
            "flags": report.flags,
            "calibration": [
                {"point": list(point), "value": value} for point, value in report.calibration.items()
            ],
            "z_points": [list(p) for p in report.z.z_points],
            "u_limit_l1": grid.lp_norm(report.u_limit, 1),
            "mu_reduced": {
                "atoms": [{"point": list(a.location), "mass": a.mass} for a in reduced.atoms],
                "density_mass": reduced.density_mass(grid),
            },
        }

    def run_ztest(self) -> dict:
        potential = self.potential()
        tol = self.config.tolerances
        solver = self._csola_solver(potential)
        suite = z_equivalence_suite(
            self.matrix,
            potential,
            seed=self.config.seed,
            column_ratio=tol.column_ratio,
            zero_ratio=tol.zero_ratio,
            strict=False,
            solver=solver,
        )
        ladders = []
        if potential.singularities:
            enriched = z_report(potential, self.kernel, self.grid, self.config.ladders.rho_ladder)
            ladders = [
                {
                    "point": list(e.point),
                    "integrals": list(e.integral_ladder),
                    "verdict": e.ladder_verdict,
                    "flagged": e.ladder_flagged,
                }
                for e in enriched.points
            ]
        self.tables["verdicts"] = _csv(
            ("point", "column", "row", "random_bounded", "one", "analytic"),
            [(" ".join(str(c) for c in row.point),) + tuple(row.verdicts) for row in suite.rows],
        )
        return {
            "z_points": [list(p) for p in suite.z_points],
            "consistent": suite.consistent,
            "flags": list(suite.flags),
            "verdicts": suite.table(),
            "integral_ladders": ladders,
        }

    def run_scaling(self) -> dict:
        matrix, grid = self.matrix, self.grid
        rho_ladder = self.config.ladders.rho_ladder
        mu = self.measure()
        records = indicator_scaling(matrix, rho_ladder=rho_ladder)
        kernel_scaling = local_scaling(matrix, atom_column(matrix, np.zeros(grid.dim)), rho_ladder=rho_ladder)
        near = near_support_ratio(matrix, mu, rho_ladder=rho_ladder)
        self.tables["scaling"] = _csv(
            ("rho", "value_at_center", "l1_norm", "value_far"),
            [(r.rho, r.value_at_center, r.l1_norm, r.value_far) for r in records],
        )
        radii = [rho for rho, _, _ in kernel_scaling]
        return {
            "indicator": [asdict(r) for r in records],
            "kernel_local": [{"rho": rho, "scaled": value, "clamped": c} for rho, value, c in kernel_scaling],
            "kernel_local_slope": loglog_slope(radii, [v for _, v, _ in kernel_scaling])
            if len(radii) > 1
            else None,
            "near_support": [asdict(r) for r in near],
            "atom_mass_at_origin": mu.mass_at(np.zeros(grid.dim)),
        }

    def run(self, command: str) -> dict:
        """
        Run a subcommand and write its report and tables.

        Returns:
            The report dictionary that was written
        """
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}; choose from {list(COMMANDS)}")
        start_time = datetime.now()
        self.logger.info(f"Starting {command} for experiment {self.config.name}")
        try:
            results = getattr(self, f"run_{command}")()
        except GreenSolveError as e:
            self.logger.error(f"Experiment {self.config.name} failed: {e}")
            raise

        report = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "command": command,
            "experiment": self.config.name,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "grid": {
                "dim": self.grid.dim,
                "nodes": self.grid.size,
                "radial_rule": self.grid.radial_rule,
                "hash": self.grid.grid_hash.hex(),
            },
            "kernel": self.kernel.describe(),
            "results": results,
        }
        report_path = self.config.resolve(self.config.outputs.report_path)
        atomic_write(report_path, dumps_report(report))
        tables_path = self.config.resolve(self.config.outputs.tables_path)
        for name, text in self.tables.items():
            atomic_write(os.path.join(tables_path, f"{command}_{name}.csv"), text)

        end_time = datetime.now()
        log_summary(
            self.logger,
            f"GREENSOLVE {command.upper()} SUMMARY",
            [
                ("Experiment", self.config.name),
                ("Start Time", start_time),
                ("End Time", end_time),
                ("Total Duration (s)", (end_time - start_time).total_seconds()),
                ("Grid Nodes", self.grid.size),
                ("Report", report_path),
                ("Tables Written", len(self.tables)),
            ],
        )
        return report


def main(argv=None) -> int:
    """Main function to run a greensolve experiment."""
    parser = argparse.ArgumentParser(
        prog="greensolve",
        description="Green operator lab for Lu + Vu = mu on the unit ball",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  greensolve assemble --config configs/transition_s05_b15.yml --cache-dir cache
  greensolve solve --config configs/torsion_s1.yml
  greensolve csola --config configs/reduced_measure.yml
  greensolve ztest --config configs/transition_s05_b15.yml --seed 1
  greensolve scaling --config configs/scaling_s05.yml
        """,
    )
    parser.add_argument("command", choices=COMMANDS, help="Pipeline step to run")
    parser.add_argument("--config", required=True, help="Path to the YAML experiment file")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--cache-dir", default=None, help="Override the kernel cache directory")

    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.cache_dir is not None:
            config.cache_dir = os.path.abspath(args.cache_dir)
        runner = ExperimentRunner(config)
        runner.run(args.command)
    except GreenSolveError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1

    return 0


if __name__ == "__main__":
    sys.exit(main())
