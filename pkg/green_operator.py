#!/usr/bin/env python3
"""
Discrete Green operator on a ball grid.

The operator is the Nystrom matrix M with M[i, j] = G(x_i, x_j) w_j. Two
diagonal modes are available:

- "balanced" (default): every shell carries the same directions. Entries
  between radially aligned nodes of different shells are replaced so that
  each shell-to-shell row sum equals the exact spherical mean of G, and the
  diagonal completes the exact integral of G(x_i, .) over the radial slab
  of node i. The origin cell is integrated exactly.
- "polar": plain point values off the diagonal and the leading-term polar
  integral over a ball of radius cell_radius[i] on it.

On top of the matrix this module implements the operator calculus used by
the diagnostics: application to densities and measures, the equiintegrability
bound, the L^p -> L^q regularization probe and local scaling functionals.

Usage:
    from green_operator import assemble, apply_density
    matrix = assemble(kernel, grid)
    u = apply_density(matrix, f)
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from domain_grid import (
    COINCIDENCE_TOL,
    QuadGrid,
    ball_integral,
    dyadic_ladder,
    unit_ball_volume,
    usable_ladder,
)
from errors import DomainError, ParameterError
from green_kernel import (
    GreenKernel,
    evaluate_pairs,
    kernel_from_distances,
    polar_cell_integral,
    slab_integral,
    spherical_mean,
)
from measures_potentials import RadonMeasure

logger = logging.getLogger(__name__)

DIAGONAL_MODES = ("balanced", "polar")
ATOM_NODE_TOL = 1e-9


@dataclass(frozen=True)
class GreenMatrix:
    """
    Assembled Green operator.

    Attributes:
        grid: QuadGrid the matrix was assembled on
        kernel: GreenKernel
        entries: N x N array, entries[i, j] ~ G(x_i, x_j) w_j
        diag_correction: Diagonal entries M[i, i], the cell integrals
        diagonal_mode: "balanced" or "polar"
    """

    grid: QuadGrid = field(repr=False)
    kernel: GreenKernel
    entries: np.ndarray = field(repr=False)
    diag_correction: np.ndarray = field(repr=False)
    diagonal_mode: str = "balanced"

    def __post_init__(self):
        self.entries.setflags(write=False)
        self.diag_correction.setflags(write=False)

    @property
    def grid_hash(self) -> bytes:
        return self.grid.grid_hash

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    @cached_property
    def torsion(self) -> np.ndarray:
        """Discrete G(1) = M @ 1."""
        return self.entries.sum(axis=1)

    def kernel_table(self) -> np.ndarray:
        """entries / w_j: symmetric table of G(x_i, x_j), cell means on the diagonal."""
        return self.entries / self.weights[None, :]

    def symmetrized(self) -> np.ndarray:
        """W^(1/2) M W^(-1/2); symmetric because the kernel table is."""
        root = np.sqrt(self.weights)
        return self.entries * root[:, None] / root[None, :]

    def smallest_eigenvalue_ratio(self) -> float:
        """lambda_min / lambda_max of the symmetrized matrix (discrete coercivity)."""
        sym = self.symmetrized()
        eigenvalues = np.linalg.eigvalsh(0.5 * (sym + sym.T))
        return float(eigenvalues[0] / eigenvalues[-1])

    def symmetry_defect(self) -> float:
        """Largest relative asymmetry of the kernel table."""
        table = self.kernel_table()
        scale = np.maximum(np.abs(table), np.abs(table.T))
        scale[scale == 0.0] = 1.0
        return float(np.max(np.abs(table - table.T) / scale))


def _kernel_rows(kernel: GreenKernel, nodes, defect, rows) -> np.ndarray:
    diff = nodes[rows][:, None, :] - nodes[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    local = np.arange(len(rows))
    dist2[local, rows] = 1.0
    block = kernel_from_distances(kernel, dist2, defect[rows][:, None] * defect[None, :])
    block[local, rows] = 0.0
    return block


def _point_table(kernel: GreenKernel, grid: QuadGrid, workers, block_size) -> np.ndarray:
    nodes = grid.nodes
    defect = 1.0 - np.sum(nodes * nodes, axis=1)
    size = grid.size
    table = np.empty((size, size))
    blocks = [np.arange(start, min(start + block_size, size)) for start in range(0, size, block_size)]

    def fill(rows):
        table[rows] = _kernel_rows(kernel, nodes, defect, rows)

    with ThreadPoolExecutor(max_workers=workers or os.cpu_count()) as executor:
        list(executor.map(fill, blocks))
    return table


def _balance_shells(kernel: GreenKernel, grid: QuadGrid, table: np.ndarray) -> np.ndarray:
    """
    Replace the radially aligned entries and the diagonal of the point table.

    Nodes j != i on shell k with the direction of node i are "aligned" with
    i. For shells l != k the aligned entry becomes m g(r_l, r_k) minus the
    mean non-aligned sum, so every row reproduces the spherical mean of G
    over shell k. The diagonal makes each row of shell l integrate G(x_i, .)
    exactly over the slab of shell l. Returns the new diagonal.
    """
    shells, m = grid.shell_count, grid.angular_count
    radii, edges = grid.radial_levels, grid.shell_edges
    node_weight = grid.weights[1:].reshape(shells, m)[:, 0]
    if not grid.transitive:
        logger.debug(f"{m} directions in dim {grid.dim} are not an orbit; shell sums balance on average")

    blocks = table[1:, 1:].reshape(shells, m, shells, m)
    aligned = np.einsum("laka->lk", blocks)
    nonaligned = (blocks.sum(axis=(1, 3)) - aligned) / m

    left, right = np.nonzero(~np.eye(shells, dtype=bool))
    means = np.zeros((shells, shells))
    means[left, right] = spherical_mean(kernel, radii[left], radii[right])
    target = m * means - nonaligned
    target = 0.5 * (target + target.T)
    np.fill_diagonal(target, 0.0)
    negative = target < 0.0
    if negative.any():
        logger.info(f"Clamped {int(negative.sum())} aligned shell pairs at zero")
        target[negative] = 0.0
    direction = np.arange(m)
    shell = np.arange(shells)
    blocks[shell[:, None, None], direction[None, :, None], shell[None, None, :], direction[None, :, None]] = (
        target[:, None, :]
    )

    slab = slab_integral(kernel, radii, edges[:-1], edges[1:])
    same_shell = np.einsum("lalb->la", blocks)
    diag = slab[:, None] / node_weight[:, None] - same_shell
    clamped = diag < 0.0
    if clamped.any():
        logger.info(f"Clamped {int(clamped.sum())} diagonal entries at zero")
        diag[clamped] = 0.0

    origin = slab_integral(kernel, np.zeros(1), np.zeros(1), edges[:1])[0] / grid.weights[0]
    table[1:, 1:] = blocks.reshape(grid.size - 1, grid.size - 1)
    return np.concatenate(([origin], diag.ravel()))


def assemble(
    kernel: GreenKernel,
    grid: QuadGrid,
    diagonal: str = "balanced",
    workers: Optional[int] = None,
    block_size: int = 128,
) -> GreenMatrix:
    """
    Assemble the discrete Green operator.

    Args:
        kernel: GreenKernel (its dim must match the grid)
        grid: QuadGrid
        diagonal: "balanced" or "polar"
        workers: Threads used for row blocks (default: os.cpu_count())
        block_size: Rows per block

    Returns:
        GreenMatrix

    Raises:
        ParameterError: If dimensions or the diagonal mode do not match
    """
    if kernel.dim != grid.dim:
        raise ParameterError(f"kernel dim {kernel.dim} does not match grid dim {grid.dim}")
    if diagonal not in DIAGONAL_MODES:
        raise ParameterError(f"diagonal must be one of {DIAGONAL_MODES}, got {diagonal}")

    table = _point_table(kernel, grid, workers, block_size)
    if diagonal == "balanced":
        diag = _balance_shells(kernel, grid, table)
    else:
        defect = 1.0 - np.sum(grid.nodes * grid.nodes, axis=1)
        diag = polar_cell_integral(kernel, grid.cell_radius, defect) / grid.weights
    size = grid.size
    table[np.arange(size), np.arange(size)] = diag
    entries = table * grid.weights[None, :]

    logger.info(
        f"Assembled {kernel.variant.value} Green matrix (s={kernel.order_s:.3f}, "
        f"{diagonal} diagonal) on {size} nodes"
    )
    return GreenMatrix(grid, kernel, entries, entries.diagonal().copy(), diagonal)


def _finite_values(matrix: GreenMatrix, values, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        values = np.full(matrix.size, float(values))
    if values.shape[0] != matrix.size:
        raise ParameterError(f"{name} needs {matrix.size} node values, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise ParameterError(f"{name} must be finite at every node")
    return values


def apply_density(matrix: GreenMatrix, f) -> np.ndarray:
    """G(f) at the nodes: M @ f. Nonnegative whenever f is."""
    return matrix.entries @ _finite_values(matrix, f, "density")


def atom_column(matrix: GreenMatrix, point) -> np.ndarray:
    """
    G(x_i, a) at every node for an atom at a.

    An atom on a node uses that node's matrix column divided by its weight,
    so the node's own value is its cell mean.

    Raises:
        DomainError: If a is outside the ball or within 1e-9 of a node
            without coinciding with it
    """
    grid = matrix.grid
    point = np.asarray(point, dtype=float)
    if np.linalg.norm(point) >= 1.0:
        raise DomainError(f"atom at {point.tolist()} is outside the unit ball")
    dist = np.linalg.norm(grid.nodes - point, axis=1)
    nearest = int(np.argmin(dist))
    if dist[nearest] < COINCIDENCE_TOL:
        return matrix.entries[:, nearest] / grid.weights[nearest]
    if dist[nearest] < ATOM_NODE_TOL:
        raise DomainError(
            f"atom at {point.tolist()} is {dist[nearest]:.1e} from node {nearest}; "
            "place it on the node or farther away"
        )
    return evaluate_pairs(matrix.kernel, grid.nodes, point[None, :])


def apply_measure(matrix: GreenMatrix, mu: RadonMeasure) -> np.ndarray:
    """
    G(mu) at the nodes: density part through the matrix, atoms through
    exact kernel columns.
    """
    result = np.zeros(matrix.size)
    if mu.density is not None:
        result += apply_density(matrix, mu.density)
    for atom in mu.atoms:
        result += atom.mass * atom_column(matrix, atom.location)
    return result


class EquiintegrabilityResult(NamedTuple):
    lhs: float
    rhs_bound: float
    subset_measure: float
    beta: float
    constant: float


def equiintegrability_constant(matrix: GreenMatrix) -> float:
    """
    C with ||G(1_A)||_inf <= C |A|**(s/n) for every node subset A.

    Calibrated once per kernel from the Riesz bound of the kernel and from
    G(1_Omega).
    """
    kernel = matrix.kernel
    s, n = kernel.order_s, kernel.dim
    beta = s / n
    ball = unit_ball_volume(n)
    volume = matrix.grid.volume
    riesz = kernel.riesz_constant * n * ball / (2.0 * s) / ball ** (2.0 * s / n)
    return float(max(2.0 * riesz * volume ** (s / n), matrix.torsion.max() / volume**beta))


def equiintegrability_probe(matrix: GreenMatrix, f, subset) -> EquiintegrabilityResult:
    """
    Compare int_A |G(f)| with C |A|**beta ||f||_1, beta = s/n.

    Args:
        matrix: GreenMatrix
        f: Per-node density
        subset: Boolean mask or index array of the nodes in A (nonempty)

    Raises:
        ParameterError: If the subset is empty
    """
    weights = matrix.weights
    mask = np.zeros(matrix.size, dtype=bool)
    mask[np.asarray(subset)] = True
    if not mask.any():
        raise ParameterError("equiintegrability subset must be nonempty")
    f = _finite_values(matrix, f, "density")
    beta = matrix.kernel.order_s / matrix.kernel.dim
    measure = float(weights[mask].sum())
    constant = equiintegrability_constant(matrix)
    lhs = float(np.dot(weights[mask], np.abs(apply_density(matrix, f))[mask]))
    rhs = constant * measure**beta * float(np.dot(weights, np.abs(f)))
    return EquiintegrabilityResult(lhs, rhs, measure, beta, constant)


def critical_exponent(kernel: GreenKernel, p: float) -> float:
    """Q(p) = n p / (n - 2s); infinite for p = inf or p >= n / 2s."""
    n, s = kernel.dim, kernel.order_s
    if np.isinf(p) or p * 2.0 * s >= n:
        return float("inf")
    return n * p / (n - 2.0 * s)


class RegularizationResult(NamedTuple):
    max_ratio: float
    critical_q: float
    random_ratios: List[float]
    ladder: List[tuple]
    clamped: bool


def regularization_probe(
    matrix: GreenMatrix,
    p: float,
    q: float,
    trials: int = 20,
    seed: int = 0,
    rho_ladder: Optional[Sequence[float]] = None,
) -> RegularizationResult:
    """
    Largest observed ||G(f)||_q / ||f||_p.

    Probed over random sign-changing f and over the concentrating family
    1_{B_rho} / |B_rho| along a dyadic ladder.

    Raises:
        ParameterError: If p < 1, q < 1 or q >= Q(p)
    """
    if p < 1 or q < 1:
        raise ParameterError(f"need 1 <= p and 1 <= q, got p={p}, q={q}")
    limit = critical_exponent(matrix.kernel, p)
    if not (np.isinf(p) and np.isinf(q)) and q >= limit:
        raise ParameterError(
            f"q={q} is not below Q(p)={limit:.6g}; G maps L^{p} into L^q only for q < Q(p)"
        )
    grid = matrix.grid
    rng = np.random.default_rng(seed)
    random_ratios = []
    for _ in range(trials):
        f = rng.uniform(-1.0, 1.0, matrix.size)
        random_ratios.append(grid.lp_norm(apply_density(matrix, f), q) / grid.lp_norm(f, p))

    if np.isinf(p) and np.isinf(q):
        ones = np.ones(matrix.size)
        random_ratios.append(grid.lp_norm(apply_density(matrix, ones), q))

    radii, clamped = usable_ladder(grid, rho_ladder or dyadic_ladder(2, 6))
    ladder = []
    for rho in radii:
        inside = grid.radii <= rho
        f = inside / grid.weights[inside].sum()
        ladder.append((rho, grid.lp_norm(apply_density(matrix, f), q) / grid.lp_norm(f, p)))

    ratios = random_ratios + [ratio for _, ratio in ladder]
    return RegularizationResult(float(max(ratios)), limit, random_ratios, ladder, clamped)


@dataclass(frozen=True)
class ScalingRecord:
    """One rung of a local scaling ladder; values are already divided by rho**(2s)."""

    rho: float
    clamped: bool
    value_at_center: float
    l1_norm: float
    value_far: float


def _center_index(grid: QuadGrid, center) -> int:
    index = grid.node_index(center)
    if index is None:
        raise DomainError(f"scaling centre {np.asarray(center).tolist()} must be a grid node")
    return index


def indicator_scaling(
    matrix: GreenMatrix,
    center=None,
    rho_ladder: Optional[Sequence[float]] = None,
    far_distance: float = 0.5,
) -> List[ScalingRecord]:
    """
    Scaled responses of G(1_{B_rho(x0)}).

    For each rho records rho**(-2s) times: G(1_B)(x0), ||G(1_B)||_1 and
    G(1_B) at the node closest to distance far_distance from x0.
    """
    grid = matrix.grid
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    index = _center_index(grid, center)
    dist = np.linalg.norm(grid.nodes - center, axis=1)
    far = int(np.argmin(np.abs(dist - far_distance)))
    radii, clamped = usable_ladder(grid, rho_ladder or dyadic_ladder(1, 6), center)
    two_s = 2.0 * matrix.kernel.order_s

    records = []
    for rho in radii:
        response = apply_density(matrix, (dist <= rho).astype(float))
        scale = rho**two_s
        records.append(
            ScalingRecord(
                rho=rho,
                clamped=clamped and rho == radii[-1],
                value_at_center=float(response[index] / scale),
                l1_norm=float(np.dot(grid.weights, np.abs(response)) / scale),
                value_far=float(response[far] / scale),
            )
        )
    return records


def local_scaling(matrix: GreenMatrix, values, center=None, rho_ladder=None) -> List[tuple]:
    """
    rho**(-2s) int_{B_rho(x0)} values along a ladder.

    Returns:
        List of (rho, scaled integral, clamped)
    """
    grid = matrix.grid
    radii, clamped = usable_ladder(grid, rho_ladder or dyadic_ladder(2, 6), center)
    two_s = 2.0 * matrix.kernel.order_s
    out = []
    for rho in radii:
        integral = ball_integral(grid, values, center, rho)
        out.append((integral.radius, integral.value / integral.radius**two_s, clamped))
    return out


@dataclass(frozen=True)
class NearSupportRecord:
    rho: float
    numerator: float
    denominator: float
    ratio: float


def near_support_ratio(
    matrix: GreenMatrix,
    mu: RadonMeasure,
    center=None,
    rho_ladder: Optional[Sequence[float]] = None,
) -> List[NearSupportRecord]:
    """
    int_{B_rho} G(mu) / int_{B_rho} G(delta_x0) along a ladder.

    The ratio tends to mu({x0}) as rho shrinks.
    """
    grid = matrix.grid
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    numerator = local_scaling(matrix, apply_measure(matrix, mu), center, rho_ladder)
    denominator = local_scaling(matrix, atom_column(matrix, center), center, rho_ladder)
    return [
        NearSupportRecord(rho, top, bottom, top / bottom)
        for (rho, top, _), (_, bottom, _) in zip(numerator, denominator)
    ]


def loglog_slope(radii, values) -> float:
    """Least-squares slope of log(values) against log(radii)."""
    radii = np.asarray(radii, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    slope, _ = np.polyfit(np.log(radii), np.log(values), 1)
    return float(slope)
