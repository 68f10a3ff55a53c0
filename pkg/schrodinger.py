#!/usr/bin/env python3
"""
Solvers for the dual problem u = G(mu - V u).

- solve_bounded_direct: dense LU solve of (I + M diag(V)) u = G(mu).
- solve_bounded_iterative: the monotone two-sided iteration, with the
  sandwich ordering of lower and upper iterates checked at every step.
- solve_l1: double limit over V ^ k and f ^ m for integrable data.
- csola: cutoff ladder V ^ k for singular V and measure data, with the
  concentration masses at the singular points and the reduced measure.

The cutoff ladder factors I + M diag(V ^ k) once per k (CutoffLadder) and
reuses the factorization for every right-hand side.

Usage:
    from schrodinger import csola
    report = csola(matrix, Potential.power_law(1.5), RadonMeasure.dirac((0, 0, 0)))
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from domain_grid import dyadic_ladder, resolved_ladder
from errors import ConvergenceError, InvariantError, ParameterError, SolverError
from green_operator import (
    EquiintegrabilityResult,
    GreenMatrix,
    apply_density,
    apply_measure,
    atom_column,
    equiintegrability_constant,
)
from logging_utils import setup_logging
from measures_potentials import Potential, RadonMeasure, ZReport, reduce, truncate

logger = logging.getLogger(__name__)

SANDWICH_TOL = 1e-10
MONOTONE_TOL = 1e-10


class SolveMethod(str, Enum):
    ITERATIVE = "iterative"
    DIRECT = "direct"
    DOUBLE_LIMIT = "double_limit"


@dataclass
class SolveReport:
    """
    Result of a bounded or integrable solve.

    Attributes:
        u: Solution at the nodes
        vu: V u at the nodes (with the potential actually used)
        residual: ||u - G(mu - V u)||_1
        iterations: Iterations (or linear solves for the double limit)
        bracket_gap: ||upper - lower||_1 at exit (monotone method)
        method: SolveMethod
        trace: Per-step records
    """

    u: np.ndarray
    vu: np.ndarray
    residual: float
    iterations: int
    bracket_gap: float
    method: SolveMethod
    trace: List[dict] = field(default_factory=list)

    def vu_l1(self, weights) -> float:
        return float(np.dot(weights, np.abs(self.vu)))


@dataclass(frozen=True)
class CsolaThresholds:
    """alpha below alpha_solution means no concentration; estimators must agree within alpha_consensus."""

    alpha_solution: float = 0.05
    alpha_consensus: float = 0.1


@dataclass(frozen=True)
class LadderPoint:
    k: float
    l1_norm: float
    l1_change: float
    vu_mass: float


@dataclass(frozen=True)
class AlphaEstimate:
    """Concentration mass at one singular point."""

    point: Tuple[float, ...]
    atom_mass: float
    mass_balance: float
    scaling: float
    consensus: float
    inconclusive: bool
    radii: Tuple[float, ...] = ()


@dataclass
class CsolaReport:
    """
    Limit of approximations with truncated potentials.

    Attributes:
        u_limit: Extrapolated limit of u_k
        ladder: One LadderPoint per cutoff
        alphas: AlphaEstimate per singular point
        mu_reduced: mu without the atoms found to concentrate
        is_solution: True iff every consensus alpha is below threshold
        calibration: Per singular point, rho**(-2s) int_{B_rho} G(delta_x) at the finest radius
        flags: Diagnostic flags (inconclusive, ladder_nonmonotone, rho_dropped)
        z: ZReport of the points judged to concentrate
    """

    u_limit: np.ndarray
    ladder: List[LadderPoint]
    alphas: List[AlphaEstimate]
    mu_reduced: RadonMeasure
    is_solution: bool
    calibration: Dict[Tuple[float, ...], float]
    flags: List[str] = field(default_factory=list)
    z: ZReport = field(default_factory=ZReport)
    cutoff_solutions: Optional[List[np.ndarray]] = field(default=None, repr=False)

    def alpha_at(self, point) -> AlphaEstimate:
        for alpha in self.alphas:
            if np.allclose(alpha.point, point):
                return alpha
        raise KeyError(point)


def _check_bounded(matrix: GreenMatrix, vk) -> np.ndarray:
    vk = np.asarray(vk, dtype=float)
    if vk.ndim == 0:
        vk = np.full(matrix.size, float(vk))
    if vk.shape[0] != matrix.size:
        raise ParameterError(f"potential needs {matrix.size} node values, got {vk.shape[0]}")
    if not np.all(np.isfinite(vk)) or np.any(vk < 0):
        raise ParameterError("bounded solvers need a finite nonnegative potential")
    return vk


def fixed_point_residual(matrix: GreenMatrix, vk, rhs, u) -> float:
    """||u + G(V u) - G(mu)||_1 for rhs = G(mu)."""
    defect = u + matrix.entries @ (vk * u) - rhs
    return float(np.dot(matrix.weights, np.abs(defect)))


def _factor(matrix: GreenMatrix, vk: np.ndarray):
    system = np.eye(matrix.size) + matrix.entries * vk[None, :]
    lu, piv = linalg.lu_factor(system, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if not np.all(np.isfinite(pivots)) or pivots.min() <= np.finfo(float).eps * pivots.max():
        raise SolverError("I + M diag(V) is numerically singular")
    return lu, piv


def solve_bounded_direct(matrix: GreenMatrix, vk, mu: RadonMeasure) -> SolveReport:
    """
    Solve (I + M diag(V)) u = G(mu) by LU factorization.

    Raises:
        ParameterError: If V is not finite and nonnegative
        SolverError: If the system is singular
    """
    vk = _check_bounded(matrix, vk)
    rhs = apply_measure(matrix, mu)
    u = linalg.lu_solve(_factor(matrix, vk), rhs, check_finite=False)
    return SolveReport(
        u=u,
        vu=vk * u,
        residual=fixed_point_residual(matrix, vk, rhs, u),
        iterations=1,
        bracket_gap=0.0,
        method=SolveMethod.DIRECT,
    )


def _monotone_iteration(matrix, vk, rhs, tol, max_iter):
    """
    Two-sided iteration for rhs = G(f), f >= 0.

    With T(u) = G(f - V u): lower_0 = 0, upper_0 = T(0) = G(f), then
    lower_{i+1} = max(T(upper_i), lower_i) and upper_{i+1} = T(lower_{i+1}).
    T reverses order, so lower increases, upper decreases and
    lower <= upper throughout.
    """
    weights = matrix.weights
    entries = matrix.entries

    def step(u):
        return rhs - entries @ (vk * u)

    lower = np.zeros_like(rhs)
    upper = rhs.copy()
    scale = max(float(np.dot(weights, np.abs(rhs))), np.finfo(float).tiny)
    atol = SANDWICH_TOL * max(1.0, float(np.abs(rhs).max(initial=0.0)))
    trace = []
    gap = float(np.dot(weights, upper - lower))
    for iteration in range(1, max_iter + 1):
        new_lower = np.maximum(step(upper), lower)
        new_upper = step(new_lower)
        violation = max(
            float(np.max(new_lower - new_upper, initial=0.0)),
            float(np.max(new_upper - upper, initial=0.0)),
        )
        if violation > atol:
            raise InvariantError(
                f"sandwich ordering violated by {violation:.3e} at iteration {iteration}",
                evidence=trace,
            )
        lower, upper = new_lower, new_upper
        gap = float(np.dot(weights, upper - lower))
        trace.append({"iteration": iteration, "bracket_gap": gap})
        if gap <= tol * scale:
            return 0.5 * (lower + upper), iteration, gap, trace
    raise ConvergenceError(
        f"monotone iteration did not close the bracket in {max_iter} steps "
        f"(last gap {gap:.3e})",
        trace,
    )


def _split(mu: RadonMeasure) -> List[Tuple[float, RadonMeasure]]:
    """Positive and negative parts with their signs, empty parts dropped."""
    parts = []
    for sign, part in ((1.0, mu.positive_part()), (-1.0, mu.negative_part())):
        if not part.is_zero():
            parts.append((sign, part))
    return parts or [(1.0, mu.positive_part())]


def solve_bounded_iterative(
    matrix: GreenMatrix,
    vk,
    mu: RadonMeasure,
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> SolveReport:
    """
    Monotone iteration for bounded V, run separately on mu+ and mu-.

    Args:
        matrix: GreenMatrix
        vk: Bounded nonnegative potential at the nodes
        mu: Data measure
        tol: Relative L1 bracket width at which to stop
        max_iter: Iteration cap

    Raises:
        InvariantError: If the sandwich ordering fails beyond 1e-10
        ConvergenceError: If the cap is reached
    """
    vk = _check_bounded(matrix, vk)
    u = np.zeros(matrix.size)
    iterations, gap, trace = 0, 0.0, []
    for sign, part in _split(mu):
        rhs = apply_measure(matrix, part)
        part_u, part_iterations, part_gap, part_trace = _monotone_iteration(
            matrix, vk, rhs, tol, max_iter
        )
        u += sign * part_u
        iterations = max(iterations, part_iterations)
        gap += part_gap
        trace.extend(dict(entry, sign=sign) for entry in part_trace)
    rhs = apply_measure(matrix, mu)
    return SolveReport(
        u=u,
        vu=vk * u,
        residual=fixed_point_residual(matrix, vk, rhs, u),
        iterations=iterations,
        bracket_gap=gap,
        method=SolveMethod.ITERATIVE,
        trace=trace,
    )


class VuEstimate(NamedTuple):
    lhs: float
    rhs: float


def _inner_set(matrix: GreenMatrix, centers, radius) -> np.ndarray:
    grid = matrix.grid
    centers = centers or [np.zeros(grid.dim)]
    mask = np.zeros(grid.size, dtype=bool)
    for center in centers:
        mask |= np.linalg.norm(grid.nodes - np.asarray(center), axis=1) < radius
    return mask


def vu_l1_estimate(
    report: SolveReport,
    vk,
    mu: RadonMeasure,
    matrix: GreenMatrix,
    inner_radius: float = 0.25,
    centers: Optional[Sequence] = None,
) -> VuEstimate:
    """
    int V|u| against ||G(1)||_inf (1 / inf_K G(1) + sup_{Omega minus K} V) |mu|(Omega).

    K is the union of the balls of radius inner_radius around centers (the
    singular points; the origin by default). The right side does not grow
    when V is truncated at larger levels.
    """
    weights = matrix.weights
    vk = np.asarray(vk, dtype=float)
    inner = _inner_set(matrix, centers, inner_radius)
    torsion = matrix.torsion
    outside = vk[~inner].max(initial=0.0)
    lhs = float(np.dot(weights, vk * np.abs(report.u)))
    rhs = torsion.max() * (1.0 / torsion[inner].min() + outside) * mu.total_variation(matrix.grid)
    return VuEstimate(lhs, float(rhs))


def weighted_vu_estimate(report: SolveReport, vk, mu: RadonMeasure, matrix: GreenMatrix) -> VuEstimate:
    """
    int V|u| delta**gamma against C int G(|mu|) with C = 1 / min(G(1) / delta**gamma).

    The boundary-weighted bound holds uniformly in the cutoff and needs no
    boundedness of V near the singular set.
    """
    grid = matrix.grid
    weight = grid.boundary_dist**matrix.kernel.boundary_gamma
    lhs = float(np.dot(grid.weights, np.asarray(vk) * np.abs(report.u) * weight))
    absolute = mu.positive_part() + mu.negative_part()
    constant = 1.0 / float(np.min(matrix.torsion / weight))
    rhs = constant * float(np.dot(grid.weights, apply_measure(matrix, absolute)))
    return VuEstimate(lhs, rhs)


def gv_equiintegrability(matrix: GreenMatrix, vk, f, subset) -> EquiintegrabilityResult:
    """
    Indicator bound for G_V: int_A |G_V(f)| <= C |A|**(s/n) ||f||_1.

    Uses the constant of G itself, since |G_V(f)| <= G(|f|).
    """
    weights = matrix.weights
    mask = np.zeros(matrix.size, dtype=bool)
    mask[np.asarray(subset)] = True
    if not mask.any():
        raise ParameterError("equiintegrability subset must be nonempty")
    f = np.asarray(f, dtype=float)
    solution = solve_bounded_direct(matrix, vk, RadonMeasure.from_density(f))
    beta = matrix.kernel.order_s / matrix.kernel.dim
    measure = float(weights[mask].sum())
    constant = equiintegrability_constant(matrix)
    lhs = float(np.dot(weights[mask], np.abs(solution.u)[mask]))
    rhs = constant * measure**beta * float(np.dot(weights, np.abs(f)))
    return EquiintegrabilityResult(lhs, rhs, measure, beta, constant)


class CutoffLadder:
    """
    Factorizations of I + M diag(V ^ k) shared across right-hand sides.

    Ladder points are independent; solve_all runs them on a thread pool and
    returns results in cutoff order.
    """

    def __init__(self, matrix: GreenMatrix, values, workers: Optional[int] = None, logger=None):
        self.matrix = matrix
        self.values = np.asarray(values, dtype=float)
        self.workers = workers or min(4, os.cpu_count() or 1)
        self.logger = logger or setup_logging("logs/schrodinger.log", __name__)
        self._factors = {}

    def truncated(self, k: float) -> np.ndarray:
        return truncate(self.values, k)

    def factor(self, k: float):
        key = float(k)
        if key not in self._factors:
            self._factors.setdefault(key, _factor(self.matrix, self.truncated(key)))
        return self._factors[key]

    def solve(self, k: float, rhs, transposed: bool = False) -> np.ndarray:
        return linalg.lu_solve(self.factor(k), rhs, trans=1 if transposed else 0, check_finite=False)

    def solve_all(self, cutoffs: Sequence[float], rhs, transposed: bool = False) -> List[np.ndarray]:
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            return list(executor.map(lambda k: self.solve(k, rhs, transposed), cutoffs))


def default_cutoffs(potential: Potential, count: int = 15) -> List[float]:
    """2**0, ..., 2**(count-1) times max(1, ||background||_inf)."""
    base = max(1.0, potential.bound())
    return [base * 2.0**j for j in range(count)]


def _double_limit(matrix, ladder, part, tol, max_steps, k0, trace, sign):
    weights = matrix.weights
    tiny = np.finfo(float).tiny
    top = float(part.max(initial=0.0))
    m0 = max(1.0, float(np.median(part[part > 0]))) if top > 0 else 1.0
    previous_m, solves = None, 0
    for outer in range(max_steps):
        m = m0 * 2.0**outer
        rhs = apply_density(matrix, np.minimum(part, m))
        previous_k, k = None, k0
        for inner in range(max_steps):
            k = k0 * 2.0**inner
            u = ladder.solve(k, rhs)
            solves += 1
            if previous_k is not None:
                change = float(np.dot(weights, np.abs(u - previous_k)))
                trace.append({"sign": sign, "m": m, "k": k, "change": change})
                if change <= tol * max(float(np.dot(weights, np.abs(u))), tiny):
                    break
            previous_k = u
        else:
            raise ConvergenceError(f"cutoff ladder in k did not converge at m={m:g}", trace)
        if previous_m is not None:
            change = float(np.dot(weights, np.abs(u - previous_m)))
            trace.append({"sign": sign, "m": m, "k": k, "outer_change": change})
            if change <= tol * max(float(np.dot(weights, np.abs(u))), tiny) or m >= top:
                return u, k, solves
        elif m >= top:
            return u, k, solves
        previous_m = u
    raise ConvergenceError("data ladder in m did not converge", trace)


def solve_l1(
    matrix: GreenMatrix,
    potential: Potential,
    f,
    tol: float = 1e-6,
    max_steps: int = 40,
    ladder: Optional[CutoffLadder] = None,
) -> SolveReport:
    """
    Integrable data: inner limit V ^ k (decreasing), outer limit f ^ m (increasing).

    Sign-changing f is split into f+ and f-.

    Raises:
        ConvergenceError: If a ladder does not settle within max_steps rungs
    """
    grid = matrix.grid
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.size,) or not np.all(np.isfinite(f)):
        raise ParameterError("solve_l1 needs finite density values at every node")
    values = potential.values(grid)
    ladder = ladder or CutoffLadder(matrix, values)
    finite = values[np.isfinite(values)]
    k0 = max(1.0, float(np.median(finite))) if finite.size else 1.0

    u = np.zeros(grid.size)
    trace, solves, k_used = [], 0, k0
    for sign, part in ((1.0, np.maximum(f, 0.0)), (-1.0, np.maximum(-f, 0.0))):
        if not part.any():
            continue
        part_u, k_part, part_solves = _double_limit(
            matrix, ladder, part, tol, max_steps, k0, trace, sign
        )
        u += sign * part_u
        solves += part_solves
        k_used = max(k_used, k_part)

    vk = ladder.truncated(k_used)
    rhs = apply_density(matrix, f)
    return SolveReport(
        u=u,
        vu=vk * u,
        residual=fixed_point_residual(matrix, vk, rhs, u),
        iterations=solves,
        bracket_gap=0.0,
        method=SolveMethod.DOUBLE_LIMIT,
        trace=trace,
    )


def extrapolate_geometric(first, second, third, weights=None):
    """
    Limit of a sequence with geometrically shrinking steps.

    Uses the ratio of the last two step sizes (weighted L1 norms for
    arrays); falls back to the last term when the steps do not shrink.
    """
    first, second, third = (np.asarray(v, dtype=float) for v in (first, second, third))
    earlier, later = second - first, third - second
    if weights is None:
        size_earlier, size_later = np.sum(np.abs(earlier)), np.sum(np.abs(later))
        aligned = np.sum(earlier * later) >= 0
    else:
        size_earlier = np.dot(weights, np.abs(earlier))
        size_later = np.dot(weights, np.abs(later))
        aligned = np.dot(weights, earlier * later) >= 0
    if size_earlier == 0 or not aligned:
        return third
    ratio = size_later / size_earlier
    if ratio >= 1.0:
        return third
    return third + later * ratio / (1.0 - ratio)


def extrapolate_to_zero(radii, values, rate: Optional[float]) -> float:
    """
    Value at rho = 0 of a quantity expanded in powers of t = rho**rate.

    rate=None means the quantity is flat near 0 and the finest value is
    returned.
    """
    values = np.asarray(values, dtype=float)
    if rate is None or rate <= 0 or len(values) < 2:
        return float(values[-1])
    t = np.asarray(radii, dtype=float) ** rate
    degree = min(2, len(values) - 1)
    return float(np.polyfit(t, values, degree)[-1])


def _approach_rates(singular, kernel, dim: int) -> Tuple[Optional[float], Optional[float]]:
    """
    Rates in rho of the mass-balance and scaling estimates near a point.

    Below the threshold both approach their limit like rho**(2s - beta).
    At a concentrating point the limit is small near x, so the leftover
    mass decays like rho**(n - beta) and the ratio to G(delta_x) like
    rho**(n - 2s).
    """
    if singular.beta is None:
        return None, None
    rate = 2.0 * kernel.order_s - singular.beta
    if rate > 1e-12:
        return rate, rate
    mass_rate = dim - singular.beta if singular.beta < dim else None
    return mass_rate, dim - 2.0 * kernel.order_s


class CsolaSolver:
    """
    Cutoff-ladder solver for singular V and measure data.

    Args:
        matrix: GreenMatrix
        potential: Potential with its singular set
        cutoffs: Increasing cutoff levels (default: default_cutoffs)
        rho_ladder: Radii for the concentration estimators
        thresholds: CsolaThresholds
        workers: Threads for ladder points
        logger: Optional logger
        strict: Raise InvariantError when u_k increases along the ladder
            instead of flagging ladder_nonmonotone
    """

    def __init__(
        self,
        matrix: GreenMatrix,
        potential: Potential,
        cutoffs: Optional[Sequence[float]] = None,
        rho_ladder: Optional[Sequence[float]] = None,
        thresholds: Optional[CsolaThresholds] = None,
        workers: Optional[int] = None,
        logger=None,
        strict: bool = True,
    ):
        self.matrix = matrix
        self.potential = potential
        self.logger = logger or setup_logging("logs/schrodinger.log", __name__)
        self.cutoffs = sorted(float(k) for k in (cutoffs or default_cutoffs(potential)))
        if len(self.cutoffs) < 3 or self.cutoffs[0] <= 0:
            raise ParameterError("csola needs at least three positive cutoffs")
        octaves = matrix.grid.octaves or 6
        self.rho_ladder = list(rho_ladder or dyadic_ladder(3, max(4, octaves - 2)))
        self.thresholds = thresholds or CsolaThresholds()
        self.strict = strict
        self.ladder = CutoffLadder(matrix, potential.values(matrix.grid), workers, self.logger)

    def solve_columns(self, rhs) -> List[np.ndarray]:
        """u_k for every cutoff and every column of rhs."""
        return self.ladder.solve_all(self.cutoffs, rhs)

    def saturation_radius(self, point, others: Sequence = ()) -> float:
        """
        Radius around x inside which V exceeds the largest cutoff.

        There u_k has not reached its limit. Saturated nodes closer to one
        of the other singular points are left to that point.
        """
        grid = self.matrix.grid
        saturated = self.ladder.values > self.cutoffs[-1]
        if not saturated.any():
            return 0.0
        dist = np.linalg.norm(grid.nodes - np.asarray(point, dtype=float), axis=1)
        own = saturated.copy()
        for other in others:
            if np.allclose(other, point):
                continue
            own &= dist <= np.linalg.norm(grid.nodes - np.asarray(other, dtype=float), axis=1)
        return float(dist[own].max()) if own.any() else 0.0

    def _check_monotone(self, solutions, scale: float) -> Optional[dict]:
        """u_k is non-increasing in k node-wise for nonnegative data."""
        for index, (earlier, later) in enumerate(zip(solutions[:-1], solutions[1:])):
            increase = later - earlier
            worst = np.unravel_index(np.argmax(increase), increase.shape)
            if increase[worst] > MONOTONE_TOL * scale:
                return {
                    "k": self.cutoffs[index],
                    "next_k": self.cutoffs[index + 1],
                    "node": int(worst[0]),
                    "increase": float(increase[worst]),
                }
        return None

    def run(self, mu: RadonMeasure) -> CsolaReport:
        """
        Run the ladder for mu and extract concentration masses.

        Signed parts of mu are solved as separate columns. A part carrying
        atoms and a density gets a second column for the density alone,
        so the concentration estimators see the atomic response only.

        Returns:
            CsolaReport

        Raises:
            InvariantError: If strict and u_k increases along the ladder
        """
        matrix, grid = self.matrix, self.matrix.grid
        weights = grid.weights
        parts = _split(mu)
        signs = np.array([sign for sign, _ in parts])
        columns = [apply_measure(matrix, part) for _, part in parts]
        diffuse = {}
        for p, (_, part) in enumerate(parts):
            if part.atoms and part.density is not None and np.any(part.density):
                diffuse[p] = len(columns)
                columns.append(apply_density(matrix, part.density))
        rhs = np.column_stack(columns)
        solutions = self.solve_columns(rhs)

        flags = []
        scale = max(1.0, float(np.abs(rhs).max()))
        increase = self._check_monotone(solutions, scale)
        if increase is not None:
            if self.strict:
                raise InvariantError("u_k increased along the cutoff ladder", increase)
            flags.append("ladder_nonmonotone")
            self.logger.warning(
                f"u_k increased by {increase['increase']:.3e} at node {increase['node']} "
                f"between k={increase['k']:g} and k={increase['next_k']:g}"
            )

        count = len(parts)
        combined = [sol[:, :count] @ signs for sol in solutions]
        ladder_points = []
        for index, (k, u_k) in enumerate(zip(self.cutoffs, combined)):
            change = 0.0 if index == 0 else float(np.dot(weights, np.abs(u_k - combined[index - 1])))
            vu_mass = float(np.dot(weights, self.ladder.truncated(k) * np.abs(u_k)))
            ladder_points.append(LadderPoint(k, float(np.dot(weights, np.abs(u_k))), change, vu_mass))

        limits = np.column_stack(
            [
                np.maximum(
                    extrapolate_geometric(*(sol[:, c] for sol in solutions[-3:]), weights=weights),
                    0.0,
                )
                for c in range(rhs.shape[1])
            ]
        )
        u_limit = limits[:, :count] @ signs

        alphas, calibration = [], {}
        singular_points = self.potential.singular_points
        for singular in self.potential.singularities:
            core = self.saturation_radius(singular.point, singular_points)
            alpha, c_x, dropped = self._alpha(singular, parts, diffuse, solutions, limits, mu, core)
            alphas.append(alpha)
            calibration[singular.point] = c_x
            if alpha.inconclusive:
                flags.append("inconclusive")
            if dropped and "rho_dropped" not in flags:
                flags.append("rho_dropped")

        concentrating = [
            a.point
            for a in alphas
            if a.atom_mass != 0.0 and abs(a.consensus) >= 0.5 * abs(a.atom_mass)
        ]
        z = ZReport.from_points(concentrating)
        is_solution = all(abs(a.consensus) < self.thresholds.alpha_solution for a in alphas)
        self.logger.info(
            f"CSOLA ladder of {len(self.cutoffs)} cutoffs: ||u||_1 "
            f"{ladder_points[0].l1_norm:.6e} -> {float(np.dot(weights, np.abs(u_limit))):.6e}, "
            f"solution={is_solution}"
        )
        return CsolaReport(
            u_limit=u_limit,
            ladder=ladder_points,
            alphas=alphas,
            mu_reduced=reduce(mu, z),
            is_solution=is_solution,
            calibration=calibration,
            flags=flags,
            z=z,
            cutoff_solutions=combined,
        )

    def _radii(self, point, core: float):
        """Ladder radii resolved around point and at least twice the saturation radius."""
        grid = self.matrix.grid
        kept = [rho for rho in self.rho_ladder if rho >= 2.0 * core]
        radii, dropped = resolved_ladder(grid, kept, point)
        dropped = dropped or len(kept) < len(self.rho_ladder)
        if not radii:
            radii = [max(max(self.rho_ladder), grid.min_probe_radius(point))]
            dropped = True
        return radii, dropped

    def _alpha(self, singular, parts, diffuse, solutions, limits, mu, core: float = 0.0):
        """
        Mass-balance and scaling estimates of the mass concentrating at x.

        Both work on the atomic column of each part (the part minus its
        density-only response). Nodes inside the saturation radius are
        left out of the limit terms; the absorbed mass keeps them since
        that is where it concentrates.
        """
        matrix, grid = self.matrix, self.matrix.grid
        weights = grid.weights
        point = np.asarray(singular.point)
        radii, dropped = self._radii(point, core)
        dist = np.linalg.norm(grid.nodes - point, axis=1)
        settled = dist > core if core > 0 else np.ones(grid.size, dtype=bool)
        reference = atom_column(matrix, point)
        mass_rate, scaling_rate = _approach_rates(singular, matrix.kernel, grid.dim)
        last = self.cutoffs[-3:]
        top = self.ladder.truncated(self.cutoffs[-1])

        def atomic(array, p):
            if p in diffuse:
                return array[:, p] - array[:, diffuse[p]]
            return array[:, p]

        mass_balance, scaling = 0.0, 0.0
        for p, (sign, part) in enumerate(parts):
            absorbed = [self.ladder.truncated(k) * atomic(sol, p) for k, sol in zip(last, solutions[-3:])]
            limit = atomic(limits, p)
            masses, ratios = [], []
            for rho in radii:
                inside = dist <= rho
                ring = inside & settled
                if not ring.any():
                    ring = inside
                steps = [float(np.dot(weights[inside], a[inside])) for a in absorbed]
                background = float(np.dot(weights[ring], top[ring] * limit[ring]))
                masses.append(float(extrapolate_geometric(*steps)) - background)
                denominator = float(np.dot(weights[ring], reference[ring]))
                ratios.append(part.mass_at(point) - float(np.dot(weights[ring], limit[ring])) / denominator)
            mass_balance += sign * extrapolate_to_zero(radii, masses, mass_rate)
            scaling += sign * extrapolate_to_zero(radii, ratios, scaling_rate)

        atom_mass = mu.mass_at(point)
        consensus = 0.5 * (mass_balance + scaling)
        inconclusive = abs(mass_balance - scaling) > self.thresholds.alpha_consensus
        low, high = min(0.0, atom_mass), max(0.0, atom_mass)
        consensus = float(np.clip(consensus, low, high))
        if inconclusive:
            self.logger.warning(
                f"Concentration estimators disagree at {list(singular.point)}: "
                f"mass balance {mass_balance:.4f}, scaling {scaling:.4f}"
            )
        finest = dist <= radii[-1]
        c_x = float(np.dot(weights[finest], reference[finest])) / radii[-1] ** (2.0 * matrix.kernel.order_s)
        estimate = AlphaEstimate(
            point=singular.point,
            atom_mass=atom_mass,
            mass_balance=float(mass_balance),
            scaling=float(scaling),
            consensus=consensus,
            inconclusive=inconclusive,
            radii=tuple(radii),
        )
        return estimate, float(c_x), dropped


def csola(
    matrix: GreenMatrix,
    potential: Potential,
    mu: RadonMeasure,
    cutoffs: Optional[Sequence[float]] = None,
    rho_ladder: Optional[Sequence[float]] = None,
    thresholds: Optional[CsolaThresholds] = None,
    workers: Optional[int] = None,
    strict: bool = True,
) -> CsolaReport:
    """Candidate solution obtained as the limit of V ^ k approximations."""
    solver = CsolaSolver(matrix, potential, cutoffs, rho_ladder, thresholds, workers, strict=strict)
    return solver.run(mu)
