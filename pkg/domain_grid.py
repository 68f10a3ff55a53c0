#!/usr/bin/env python3
"""
Quadrature grids on the unit ball B_1(0) in R^n.

A grid is a product of a radial rule and a point set on the unit sphere,
plus a dedicated node at the origin whose cell is the ball B_rho0(0).
Two radial rules are available:

- "legendre": Gauss-Legendre nodes on (rho0, 1). Exact for radial
  polynomials; used for accuracy checks.
- "geometric": shells with boundaries 2**(-J + k/p) (p shells per octave).
  Every dyadic ball B_{2**-j}(0) is a union of whole cells, so node-centre
  ball integrals are exact there and the grid looks the same at every
  scale near the origin. Used by the experiments.

Every shell carries the same directions, so node i of one shell and node i
of another lie on a common ray. In three dimensions the counts 6, 8, 12, 24
and 48 use an orbit of the octahedral group; 48 points are then exact for
spherical polynomials up to degree 7 and every node of a shell sees the
other shells in the same way. Other counts use a Fibonacci lattice.

Each shell also owns a radial slab [shell_edges[k], shell_edges[k + 1]]
whose volume equals the shell weight; the slabs and the origin ball tile
the unit ball.

Usage:
    from domain_grid import build_ball_grid, ball_integral
    grid = build_ball_grid(3, 24, 48)
    result = ball_integral(grid, values, center=(0, 0, 0), radius=0.25)
"""

import hashlib
import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special
from scipy.stats import qmc

from errors import DomainError, ParameterError

logger = logging.getLogger(__name__)

RULE_VERSION = 2
OCTAHEDRAL_COUNTS = (6, 8, 12, 24, 48)
RADIAL_RULES = ("legendre", "geometric")
COINCIDENCE_TOL = 1e-12


def unit_ball_volume(dim: int) -> float:
    """|B_1| = pi^(n/2) / Gamma(n/2 + 1)."""
    return float(np.pi ** (dim / 2.0) / special.gamma(dim / 2.0 + 1.0))


def unit_sphere_area(dim: int) -> float:
    """|S^(n-1)| = n |B_1|."""
    return dim * unit_ball_volume(dim)


@dataclass(frozen=True)
class QuadGrid:
    """
    Immutable quadrature grid on the unit ball.

    Attributes:
        dim: Space dimension n >= 3
        nodes: (N, n) array of points with |x| < 1, origin first
        weights: Positive quadrature weights (volume units)
        boundary_dist: delta(x) = 1 - |x| per node
        radial_levels: Sorted distinct shell radii (origin excluded)
        shell_edges: Slab boundaries, shell_edges[0] = rho0 and shell_edges[-1] = 1
        cell_radius: Radius of the ball with the same volume as the cell
        radial_rule: "legendre" or "geometric"
        angular_count: Nodes per shell
        octaves: Number of dyadic octaves (geometric rule only)
    """

    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    boundary_dist: np.ndarray
    radial_levels: np.ndarray
    shell_edges: np.ndarray
    cell_radius: np.ndarray
    radial_rule: str
    angular_count: int
    octaves: Optional[int] = None
    grid_hash: bytes = field(default=b"", compare=False)

    def __post_init__(self):
        for name in ("nodes", "weights", "boundary_dist", "radial_levels", "shell_edges", "cell_radius"):
            getattr(self, name).setflags(write=False)
        if not self.grid_hash:
            object.__setattr__(self, "grid_hash", self._compute_hash())

    def _compute_hash(self) -> bytes:
        digest = hashlib.sha256()
        header = (
            f"{self.dim}|{len(self.radial_levels)}|{self.angular_count}|"
            f"{self.radial_rule}|{self.octaves}|{RULE_VERSION}"
        )
        digest.update(header.encode("ascii"))
        digest.update(np.ascontiguousarray(self.nodes, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(self.weights, dtype="<f8").tobytes())
        return digest.digest()

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def radii(self) -> np.ndarray:
        return 1.0 - self.boundary_dist

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    @property
    def shell_count(self) -> int:
        return int(self.radial_levels.shape[0])

    @property
    def shell_index(self) -> np.ndarray:
        """Shell of every node; -1 for the origin."""
        return np.concatenate(([-1], np.repeat(np.arange(self.shell_count), self.angular_count)))

    @property
    def transitive(self) -> bool:
        """True when the directions form a single octahedral orbit."""
        return self.dim == 3 and self.angular_count in OCTAHEDRAL_COUNTS

    def integrate(self, values) -> float:
        """Full-grid quadrature of per-node values."""
        return float(np.dot(self.weights, _as_node_values(self, values)))

    def lp_norm(self, values, p: float) -> float:
        """Discrete L^p(Omega) norm; p may be np.inf."""
        values = np.abs(_as_node_values(self, values))
        if np.isinf(p):
            return float(values.max())
        return float(np.dot(self.weights, values**p) ** (1.0 / p))

    def node_index(self, point, tol: float = COINCIDENCE_TOL) -> Optional[int]:
        """Index of the node coinciding with point, or None."""
        dist = np.linalg.norm(self.nodes - np.asarray(point, dtype=float), axis=1)
        index = int(np.argmin(dist))
        return index if dist[index] < tol else None

    def nearest_node(self, point) -> int:
        dist = np.linalg.norm(self.nodes - np.asarray(point, dtype=float), axis=1)
        return int(np.argmin(dist))

    def min_probe_radius(self, center=None) -> float:
        """Twice the distance from center to the closest node other than itself."""
        center = np.zeros(self.dim) if center is None else np.asarray(center, float)
        dist = np.linalg.norm(self.nodes - center, axis=1)
        return 2.0 * float(dist[dist >= COINCIDENCE_TOL].min())

    def inner_mask(self, radius: float = 0.5) -> np.ndarray:
        return self.radii < radius


@dataclass(frozen=True)
class BallIntegral:
    """Result of a node-centre ball integral."""

    value: float
    count: int
    radius: float
    requested_radius: float
    clamped: bool
    captured_volume: float

    @property
    def empty(self) -> bool:
        return self.count == 0

    @property
    def flagged(self) -> bool:
        return self.clamped or self.empty


def _as_node_values(grid: QuadGrid, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return np.full(grid.size, float(values))
    if values.shape[0] != grid.size:
        raise ParameterError(
            f"expected {grid.size} node values, got {values.shape[0]}"
        )
    return values


def _octahedral_generator(count: int) -> np.ndarray:
    if count == 6:
        return np.array([1.0, 0.0, 0.0])
    if count == 8:
        return np.full(3, 1.0 / np.sqrt(3.0))
    if count == 12:
        return np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
    if count == 24:
        # x^4 + y^4 + z^4 = 3/5 on the orbit: exact for degree 5
        return np.sqrt([(5.0 + np.sqrt(5.0)) / 10.0, (5.0 - np.sqrt(5.0)) / 10.0, 0.0])
    # squares are the roots of t^3 - t^2 + t/5 - 1/105, which matches the
    # sphere means of x^4 + y^4 + z^4 and x^2 y^2 z^2: exact for degree 7
    squares = np.sort(np.roots([1.0, -1.0, 0.2, -1.0 / 105.0]).real)
    return np.sqrt(squares)


def _octahedral_orbit(count: int) -> np.ndarray:
    generator = _octahedral_generator(count)
    images = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            images.append(np.asarray(signs) * generator[list(perm)])
    # zero coordinates make sign flips coincide
    points = np.unique(np.round(np.asarray(images), 14), axis=0)
    if points.shape[0] != count:
        raise ParameterError(f"octahedral orbit has {points.shape[0]} points, expected {count}")
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def sphere_points(dim: int, count: int) -> np.ndarray:
    """
    Nearly uniform unit vectors, all with weight |S^(n-1)|/count.

    n = 3 uses an octahedral orbit for the counts in OCTAHEDRAL_COUNTS and a
    Fibonacci lattice (equal-area bands in z) otherwise. Higher dimensions
    normalize Gaussian images of a Halton sequence.
    """
    if dim == 3 and count in OCTAHEDRAL_COUNTS:
        return _octahedral_orbit(count)
    if dim == 3:
        golden = np.pi * (3.0 - np.sqrt(5.0))
        index = np.arange(count) + 0.5
        z = 1.0 - 2.0 * index / count
        phi = golden * np.arange(count)
        planar = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        return np.column_stack((planar * np.cos(phi), planar * np.sin(phi), z))

    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1)
    gauss = special.ndtri(sampler.random(count))
    return gauss / np.linalg.norm(gauss, axis=1, keepdims=True)


def _legendre_shells(dim: int, radial_count: int):
    t, gw = np.polynomial.legendre.leggauss(radial_count)
    first = (t[0] + 1.0) / 2.0
    rho0 = first / (1.0 + first)
    radii = rho0 + (1.0 - rho0) * (t + 1.0) / 2.0
    shell_volume = (1.0 - rho0) / 2.0 * gw * radii ** (dim - 1) * unit_sphere_area(dim)
    # slab k holds exactly the volume of shell k
    powers = rho0**dim + np.cumsum(shell_volume) / unit_ball_volume(dim)
    edges = np.concatenate(([rho0], np.minimum(powers, 1.0) ** (1.0 / dim)))
    edges[-1] = 1.0
    return edges, radii, shell_volume


def _geometric_shells(dim: int, radial_count: int, octaves: int):
    if octaves < 1 or radial_count % octaves != 0:
        raise ParameterError(
            f"geometric rule needs radial_count divisible by octaves, "
            f"got {radial_count} and {octaves}"
        )
    edges = 2.0 ** (-octaves + np.arange(radial_count + 1) * octaves / radial_count)
    radii = np.sqrt(edges[:-1] * edges[1:])
    shell_volume = unit_ball_volume(dim) * (edges[1:] ** dim - edges[:-1] ** dim)
    return edges, radii, shell_volume


def build_ball_grid(
    dim: int = 3,
    radial_count: int = 24,
    angular_count: int = 48,
    radial_rule: str = "legendre",
    octaves: Optional[int] = None,
) -> QuadGrid:
    """
    Build the product quadrature grid of the unit ball.

    Args:
        dim: Space dimension (>= 3)
        radial_count: Number of shells (>= 4)
        angular_count: Nodes per shell (>= 6)
        radial_rule: "legendre" or "geometric"
        octaves: Dyadic octaves covered by the geometric rule
            (default: radial_count // 2)

    Returns:
        QuadGrid with the origin as node 0

    Raises:
        ParameterError: If a count or the rule is invalid
    """
    if int(dim) != dim or dim < 3:
        raise ParameterError(f"dim must be an integer >= 3, got {dim}")
    if int(radial_count) != radial_count or radial_count < 4:
        raise ParameterError(f"radial_count must be an integer >= 4, got {radial_count}")
    if int(angular_count) != angular_count or angular_count < 6:
        raise ParameterError(f"angular_count must be an integer >= 6, got {angular_count}")
    if radial_rule not in RADIAL_RULES:
        raise ParameterError(f"radial_rule must be one of {RADIAL_RULES}, got {radial_rule}")
    dim, radial_count, angular_count = int(dim), int(radial_count), int(angular_count)

    if radial_rule == "legendre":
        octaves = None
        edges, radii, shell_volume = _legendre_shells(dim, radial_count)
    else:
        octaves = int(octaves) if octaves is not None else max(1, radial_count // 2)
        edges, radii, shell_volume = _geometric_shells(dim, radial_count, octaves)
    rho0 = float(edges[0])

    ball = unit_ball_volume(dim)
    directions = sphere_points(dim, angular_count)
    nodes = [np.zeros((1, dim))]
    weights = [np.array([ball * rho0**dim])]
    for radius, volume in zip(radii, shell_volume):
        nodes.append(radius * directions)
        weights.append(np.full(angular_count, volume / angular_count))

    nodes = np.vstack(nodes)
    weights = np.concatenate(weights)
    grid = QuadGrid(
        dim=dim,
        nodes=nodes,
        weights=weights,
        boundary_dist=1.0 - np.linalg.norm(nodes, axis=1),
        radial_levels=np.asarray(radii, dtype=float),
        shell_edges=np.asarray(edges, dtype=float),
        cell_radius=(weights / ball) ** (1.0 / dim),
        radial_rule=radial_rule,
        angular_count=angular_count,
        octaves=octaves,
    )
    logger.debug(
        f"Built {radial_rule} grid: dim={dim}, shells={radial_count}, per shell={angular_count}, "
        f"nodes={grid.size}, rho0={rho0:.3e}"
    )
    return grid


def ball_integral(grid: QuadGrid, u, center=None, radius: float = 1.0) -> BallIntegral:
    """
    Integrate per-node values over B_radius(center) by node-centre inclusion.

    A node belongs to the ball iff its centre lies inside it. Radii below
    grid.min_probe_radius(center) are clamped up to it and flagged. An
    empty capture is reported with count 0 and value NaN.

    Raises:
        ParameterError: If radius <= 0
        DomainError: If center is not inside the unit ball
    """
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    if np.linalg.norm(center) >= 1.0:
        raise DomainError(f"ball centre {center.tolist()} is outside the unit ball")
    values = _as_node_values(grid, u)

    requested = float(radius)
    floor = grid.min_probe_radius(center)
    clamped = requested < floor
    used = floor if clamped else requested
    if clamped:
        logger.debug(f"Probe radius {requested:.3e} clamped to {floor:.3e}")

    mask = np.linalg.norm(grid.nodes - center, axis=1) <= used
    count = int(mask.sum())
    value = float(np.dot(grid.weights[mask], values[mask])) if count else float("nan")
    return BallIntegral(
        value=value,
        count=count,
        radius=used,
        requested_radius=requested,
        clamped=clamped,
        captured_volume=float(grid.weights[mask].sum()),
    )


def dyadic_ladder(first: int, last: int) -> Sequence[float]:
    """Radii 2**-first, ..., 2**-last."""
    return [2.0 ** (-j) for j in range(first, last + 1)]


def usable_ladder(grid: QuadGrid, rho_ladder, center=None):
    """
    Clamp a radius ladder to the grid resolution.

    Returns:
        Tuple of (radii, clamped) where radii keeps the ladder order with
        duplicates created by clamping removed
    """
    floor = grid.min_probe_radius(center)
    radii, clamped = [], False
    for rho in rho_ladder:
        if rho < floor:
            clamped = True
            rho = floor
        if not radii or not np.isclose(radii[-1], rho):
            radii.append(float(rho))
    return radii, clamped


def resolved_ladder(grid: QuadGrid, rho_ladder, center=None):
    """
    Keep only the radii the grid resolves around center.

    Returns:
        Tuple of (radii, dropped) where dropped tells whether any requested
        radius was below grid.min_probe_radius(center)
    """
    floor = grid.min_probe_radius(center)
    radii = [float(rho) for rho in rho_ladder if rho >= floor]
    return radii, len(radii) < len(list(rho_ladder))
