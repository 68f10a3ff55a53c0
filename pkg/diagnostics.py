#!/usr/bin/env python3
"""
Structural probes of the operator G_V.

- gv_column: the kernel column G_V(., x), computed as the CSOLA limit for
  data delta_x.
- gv_row: the row G_V(x, .), computed from transposed solves with the
  shared cutoff factorizations.
- max_principle_probe: G_V(1) and the singular points where it vanishes.
- z_equivalence_suite: five independent verdicts on "x in Z" per point
  (column, row, random bounded data, f = 1, analytic criterion).

Every probe accepts an existing CsolaSolver so the factorizations of
I + M diag(V ^ k) are computed once per potential.

Usage:
    from diagnostics import z_equivalence_suite
    suite = z_equivalence_suite(matrix, Potential.power_law(1.5))
    print(suite.z_points, suite.consistent)
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import DomainError, InvariantError, ParameterError
from green_operator import GreenMatrix, atom_column
from measures_potentials import (
    Potential,
    RadonMeasure,
    ZPointEvidence,
    ZReport,
    z_membership_analytic,
)
from schrodinger import CsolaSolver, extrapolate_geometric

logger = logging.getLogger(__name__)

ZERO_RATIO = 0.05
COLUMN_RATIO = 0.02
RANDOM_DRAWS = 3
SHELL_TOL = 1e-9


@dataclass(frozen=True)
class ShellLadder:
    """
    Weighted means of per-node values over the dyadic annuli around a point.

    Attributes:
        radii: Outer radius of each annulus [rho/2, rho), outermost first
        means: Weighted mean over each annulus
        value: Limit of the means at the point, clipped below at 0
        scale: Largest annulus mean; zero verdicts are relative to it
        extrapolated: False when fewer than three annuli hold nodes and
            value is the innermost mean
    """

    radii: Tuple[float, ...]
    means: Tuple[float, ...]
    value: float
    scale: float
    extrapolated: bool

    def vanishes(self, zero_ratio: float) -> bool:
        """Limit below zero_ratio times the ladder scale, reached by shrinking means."""
        if not self.scale > 0.0:
            return True
        tail = self.means[-3:]
        shrinking = all(b <= a for a, b in zip(tail, tail[1:]))
        return self.value < zero_ratio * self.scale and (shrinking or self.value == 0.0)


@dataclass
class MaxPrincipleReport:
    """
    G_V(1) and its vanishing points.

    Attributes:
        gv_one: Per-node values of G_V(1)
        near_zero_points: Points where the annulus ladder of gv_one vanishes
        gv_columns: G_V(., x) for each requested point
        point_values: Extrapolated G_V(1)(x) per probed point
        reference: Median of gv_one over the inner half-ball
        ladders: ShellLadder of gv_one per probed point
    """

    gv_one: np.ndarray
    near_zero_points: List[Tuple[float, ...]]
    gv_columns: Dict[Tuple[float, ...], np.ndarray] = field(default_factory=dict)
    point_values: Dict[Tuple[float, ...], float] = field(default_factory=dict)
    reference: float = 0.0
    ladders: Dict[Tuple[float, ...], ShellLadder] = field(default_factory=dict)


@dataclass(frozen=True)
class ZVerdictRow:
    """One row of the Z equivalence table."""

    point: Tuple[float, ...]
    beta: Optional[float]
    column_l1: float
    column_reference: float
    row_l1: float
    row_reference: float
    random_values: Tuple[float, ...]
    random_references: Tuple[float, ...]
    one_value: float
    one_reference: float
    column_zero: bool
    row_zero: bool
    random_zero: bool
    one_zero: bool
    analytic: Optional[bool]
    borderline: bool = False

    @property
    def verdicts(self) -> Tuple[Optional[bool], ...]:
        return (self.column_zero, self.row_zero, self.random_zero, self.one_zero, self.analytic)

    @property
    def decidable(self) -> bool:
        return self.analytic is not None and not self.borderline

    @property
    def agree(self) -> bool:
        return len(set(self.verdicts)) == 1

    def as_dict(self) -> dict:
        return {
            "point": list(self.point),
            "beta": self.beta,
            "column_l1": self.column_l1,
            "column_reference": self.column_reference,
            "row_l1": self.row_l1,
            "row_reference": self.row_reference,
            "random_values": list(self.random_values),
            "random_references": list(self.random_references),
            "one_value": self.one_value,
            "one_reference": self.one_reference,
            "verdicts": {
                "column": self.column_zero,
                "row": self.row_zero,
                "random_bounded": self.random_zero,
                "one": self.one_zero,
                "analytic": self.analytic,
            },
            "borderline": self.borderline,
            "agree": self.agree,
        }


@dataclass
class ZEquivalenceReport:
    rows: List[ZVerdictRow]
    consistent: bool
    seed: int = 0
    flags: List[str] = field(default_factory=list)

    @property
    def z_points(self) -> List[Tuple[float, ...]]:
        """Points every computed verdict places in Z."""
        return [row.point for row in self.rows if all(v for v in row.verdicts if v is not None)]

    def row_at(self, point) -> ZVerdictRow:
        for row in self.rows:
            if np.allclose(row.point, point):
                return row
        raise KeyError(point)

    def table(self) -> List[dict]:
        return [row.as_dict() for row in self.rows]

    def to_z_report(self) -> ZReport:
        evidence = []
        for row in self.rows:
            numeric = [row.column_zero, row.row_zero, row.random_zero, row.one_zero]
            evidence.append(
                ZPointEvidence(
                    point=row.point,
                    beta=row.beta,
                    analytic_verdict=row.analytic,
                    borderline=row.borderline,
                    ladder_verdict=sum(numeric) > len(numeric) / 2,
                    maxprinciple_value=row.one_value,
                )
            )
        return ZReport(tuple(evidence))


def _solver(matrix, potential, cutoffs, solver) -> CsolaSolver:
    if solver is not None:
        if solver.potential is not potential or solver.matrix is not matrix:
            raise ParameterError("solver was built for a different matrix or potential")
        return solver
    return CsolaSolver(matrix, potential, cutoffs)


def _key(point) -> Tuple[float, ...]:
    return tuple(float(c) for c in np.asarray(point, dtype=float))


def _node_of(matrix: GreenMatrix, point) -> int:
    index = matrix.grid.node_index(point)
    if index is None:
        raise DomainError(f"G_V rows are evaluated at grid nodes; {list(point)} is not one")
    return index


def gv_column(
    matrix: GreenMatrix,
    potential: Potential,
    point,
    cutoffs: Optional[Sequence[float]] = None,
    solver: Optional[CsolaSolver] = None,
) -> np.ndarray:
    """
    G_V(., x) as the CSOLA limit for mu = delta_x.

    Args:
        matrix: GreenMatrix
        potential: Potential
        point: Interior point x
        cutoffs: Cutoff ladder when no solver is passed
        solver: Shared CsolaSolver for this matrix and potential

    Returns:
        Per-node values; zero (below tolerance) iff x is in Z
    """
    solver = _solver(matrix, potential, cutoffs, solver)
    return solver.run(RadonMeasure.dirac(point)).u_limit


def gv_row(
    matrix: GreenMatrix,
    potential: Potential,
    point,
    cutoffs: Optional[Sequence[float]] = None,
    solver: Optional[CsolaSolver] = None,
) -> np.ndarray:
    """
    G_V(x, .) at the nodes, for a node x.

    Row i of (I + M D_k)^(-1) M is M^T z with (I + M D_k)^T z = e_i; dividing
    by the weights turns it into kernel values. The row is extrapolated
    along the last three cutoffs like the CSOLA limit.

    Raises:
        DomainError: If x is not a grid node
    """
    solver = _solver(matrix, potential, cutoffs, solver)
    index = _node_of(matrix, point)
    unit = np.zeros(matrix.size)
    unit[index] = 1.0
    last = solver.cutoffs[-3:]
    duals = solver.ladder.solve_all(last, unit, transposed=True)
    rows = [matrix.entries.T @ z / matrix.weights for z in duals]
    return np.maximum(extrapolate_geometric(*rows, weights=matrix.weights), 0.0)


def shell_ladder(matrix: GreenMatrix, values, point, min_radius: float = 0.0) -> ShellLadder:
    """
    Annulus means of values around x and their limit at x.

    Annuli [rho/2, rho) run over rho = 1, 1/2, 1/4, ... while rho/2 stays
    above min_radius; empty annuli are skipped and nodes at x itself never
    count. The limit is the geometric extrapolation of the three innermost
    means, the same rule the cutoff ladder uses.

    Raises:
        ParameterError: If no annulus holds a node
    """
    grid = matrix.grid
    values = np.asarray(values, dtype=float)
    dist = np.linalg.norm(grid.nodes - np.asarray(point, dtype=float), axis=1)
    nearest = float(dist[dist > SHELL_TOL].min())
    radii, means = [], []
    rho = 1.0
    while rho > nearest:
        if rho / 2.0 >= min_radius:
            annulus = (dist >= rho / 2.0) & (dist < rho) & (dist > SHELL_TOL)
            mass = float(grid.weights[annulus].sum())
            if mass > 0.0:
                radii.append(rho)
                means.append(float(np.dot(grid.weights[annulus], values[annulus])) / mass)
        rho /= 2.0
    if not means:
        raise ParameterError(f"no node annulus around {list(point)} lies above radius {min_radius:.3g}")

    extrapolated = len(means) >= 3
    limit = float(extrapolate_geometric(*means[-3:])) if extrapolated else means[-1]
    return ShellLadder(tuple(radii), tuple(means), max(0.0, limit), max(means), extrapolated)


def point_value(matrix: GreenMatrix, values, point, min_radius: float = 0.0) -> float:
    """Value at x extrapolated along the dyadic annuli around x; never negative."""
    return shell_ladder(matrix, values, point, min_radius).value


def _inner_reference(matrix: GreenMatrix, values) -> float:
    return float(np.median(np.asarray(values)[matrix.grid.inner_mask(0.5)]))


def _probe_points(potential: Potential, points, dim: int) -> List[Tuple[float, ...]]:
    if points:
        return [_key(p) for p in points]
    return potential.singular_points or [tuple([0.0] * dim)]


def _point_ladders(matrix, solver, potential, values, points) -> Dict[Tuple[float, ...], ShellLadder]:
    singular = potential.singular_points
    return {
        point: shell_ladder(matrix, values, point, solver.saturation_radius(point, singular))
        for point in points
    }


def max_principle_probe(
    matrix: GreenMatrix,
    potential: Potential,
    cutoffs: Optional[Sequence[float]] = None,
    points: Optional[Sequence] = None,
    column_points: Optional[Sequence] = None,
    zero_ratio: float = ZERO_RATIO,
    solver: Optional[CsolaSolver] = None,
) -> MaxPrincipleReport:
    """
    Compute G_V(1) and flag the points where the strong maximum principle fails.

    A point is flagged when the annulus means of G_V(1) shrink toward it and
    their limit falls below zero_ratio times the largest annulus mean. Only
    annuli outside the saturation radius of the cutoff ladder are used.

    Args:
        matrix: GreenMatrix
        potential: Potential
        cutoffs: Cutoff ladder when no solver is passed
        points: Points to test (default: the singular points)
        column_points: Points whose G_V column is returned as well
        zero_ratio: Flag threshold relative to the annulus ladder scale
        solver: Shared CsolaSolver

    Returns:
        MaxPrincipleReport
    """
    if not 0.0 < zero_ratio < 1.0:
        raise ParameterError(f"zero_ratio must lie in (0, 1), got {zero_ratio}")
    solver = _solver(matrix, potential, cutoffs, solver)
    gv_one = solver.run(RadonMeasure.from_density(np.ones(matrix.size))).u_limit
    reference = _inner_reference(matrix, gv_one)

    probe_points = _probe_points(potential, points, matrix.grid.dim)
    ladders = _point_ladders(matrix, solver, potential, gv_one, probe_points)
    point_values = {point: ladder.value for point, ladder in ladders.items()}
    near_zero = [point for point, ladder in ladders.items() if ladder.vanishes(zero_ratio)]
    columns = {
        _key(p): gv_column(matrix, potential, p, solver=solver) for p in (column_points or [])
    }
    if near_zero:
        logger.info(f"G_V(1) vanishes at {len(near_zero)} point(s): {near_zero}")
    return MaxPrincipleReport(gv_one, near_zero, columns, point_values, reference, ladders)


def z_equivalence_suite(
    matrix: GreenMatrix,
    potential: Potential,
    cutoffs: Optional[Sequence[float]] = None,
    points: Optional[Sequence] = None,
    seed: int = 0,
    random_draws: int = RANDOM_DRAWS,
    column_ratio: float = COLUMN_RATIO,
    zero_ratio: float = ZERO_RATIO,
    strict: bool = True,
    solver: Optional[CsolaSolver] = None,
) -> ZEquivalenceReport:
    """
    Five verdicts on "x in Z" for every probe point.

    (i) ||G_V(., x)||_1 < column_ratio ||G(delta_x)||_1
    (ii) ||G_V(x, .)||_1 < column_ratio G(1)(x)
    (iii) G_V(f)(x) near zero for random_draws draws f ~ U(0, 1) (seeded)
    (iv) G_V(1)(x) near zero
    (v) the analytic criterion beta >= 2s

    "Near zero" is judged on the dyadic annulus means around x (see
    ShellLadder.vanishes). Points off the singular set have analytic
    verdict False.

    Raises:
        InvariantError: Unless strict=False, when decidable verdicts
            disagree; the evidence is the verdict table. With strict=False
            the report carries consistent=False and the flag
            "verdicts_disagree".
    """
    solver = _solver(matrix, potential, cutoffs, solver)
    weights = matrix.weights
    analytic = z_membership_analytic(potential, matrix.kernel)
    probe = max_principle_probe(matrix, potential, points=points, zero_ratio=zero_ratio, solver=solver)
    probe_points = _probe_points(potential, points, matrix.grid.dim)

    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(random_draws):
        values = solver.run(RadonMeasure.from_density(rng.uniform(0.0, 1.0, matrix.size))).u_limit
        draws.append(_point_ladders(matrix, solver, potential, values, probe_points))

    rows = []
    for point in probe_points:
        evidence = analytic.evidence_at(point)
        verdict = evidence.analytic_verdict if evidence else False
        borderline = evidence.borderline if evidence else False

        column = gv_column(matrix, potential, point, solver=solver)
        column_l1 = float(np.dot(weights, np.abs(column)))
        column_reference = float(np.dot(weights, atom_column(matrix, point)))
        row = gv_row(matrix, potential, point, solver=solver)
        row_l1 = float(np.dot(weights, row))
        row_reference = float(matrix.torsion[_node_of(matrix, point)])

        random_ladders = [ladders[point] for ladders in draws]
        one_ladder = probe.ladders[point]

        rows.append(
            ZVerdictRow(
                point=point,
                beta=evidence.beta if evidence else None,
                column_l1=column_l1,
                column_reference=column_reference,
                row_l1=row_l1,
                row_reference=row_reference,
                random_values=tuple(ladder.value for ladder in random_ladders),
                random_references=tuple(ladder.scale for ladder in random_ladders),
                one_value=one_ladder.value,
                one_reference=one_ladder.scale,
                column_zero=column_l1 < column_ratio * column_reference,
                row_zero=row_l1 < column_ratio * row_reference,
                random_zero=all(ladder.vanishes(zero_ratio) for ladder in random_ladders),
                one_zero=point in probe.near_zero_points,
                analytic=verdict,
                borderline=borderline,
            )
        )

    consistent = all(row.agree for row in rows if row.decidable)
    for row in rows:
        if row.decidable and not row.agree:
            logger.error(f"Z verdicts disagree at {list(row.point)}: {row.verdicts}")
    if strict and not consistent:
        raise InvariantError("Z verdicts disagree", evidence=[row.as_dict() for row in rows])
    flags = [] if consistent else ["verdicts_disagree"]
    return ZEquivalenceReport(rows, consistent, seed, flags)
