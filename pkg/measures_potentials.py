#!/usr/bin/env python3
"""
Measures, potentials and the incompatible set Z.

- RadonMeasure: density sampled at the nodes plus finitely many atoms.
- Potential: bounded background plus power-law singularities
  coeff * |y - p|**(-beta) at finitely many points.
- z_membership_analytic / z_integral_ladder: the two routes to deciding
  whether a singular point is incompatible, i.e. whether
  int_{B_rho(x)} V(y) |x - y|**(2s - n) dy diverges.
- reduce: remove the atoms sitting on Z.

Usage:
    from measures_potentials import Potential, RadonMeasure, Singularity
    V = Potential(singularities=(Singularity((0, 0, 0), 1.5),))
    mu = RadonMeasure.dirac((0, 0, 0))
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from domain_grid import COINCIDENCE_TOL, QuadGrid, dyadic_ladder
from errors import DomainError, ParameterError

logger = logging.getLogger(__name__)

BORDERLINE_TOL = 1e-12
DIVERGENCE_RATE = 0.125
MIN_ANNULUS_NODES = 8


def _as_point(point) -> Tuple[float, ...]:
    point = tuple(float(c) for c in point)
    if np.linalg.norm(point) >= 1.0:
        raise DomainError(f"point {list(point)} is not strictly inside the unit ball")
    return point


def _same_point(a, b) -> bool:
    return float(np.linalg.norm(np.subtract(a, b))) < COINCIDENCE_TOL


@dataclass(frozen=True)
class Atom:
    location: Tuple[float, ...]
    mass: float

    def __post_init__(self):
        object.__setattr__(self, "location", _as_point(self.location))
        object.__setattr__(self, "mass", float(self.mass))


@dataclass(frozen=True)
class RadonMeasure:
    """
    Signed measure: density * dx plus atoms.

    Attributes:
        density: Per-node values or None for no absolutely continuous part
        atoms: Atoms with pairwise distinct interior locations
    """

    density: Optional[np.ndarray] = None
    atoms: Tuple[Atom, ...] = ()

    def __post_init__(self):
        if self.density is not None:
            density = np.array(self.density, dtype=float)
            density.setflags(write=False)
            object.__setattr__(self, "density", density)
        atoms = tuple(a if isinstance(a, Atom) else Atom(*a) for a in self.atoms)
        for i, first in enumerate(atoms):
            for second in atoms[i + 1:]:
                if _same_point(first.location, second.location):
                    raise ParameterError(f"duplicate atom location {list(first.location)}")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def dirac(cls, point, mass: float = 1.0) -> "RadonMeasure":
        return cls(None, (Atom(point, mass),))

    @classmethod
    def from_density(cls, density) -> "RadonMeasure":
        return cls(np.asarray(density, dtype=float), ())

    def __add__(self, other: "RadonMeasure") -> "RadonMeasure":
        if self.density is None:
            density = other.density
        elif other.density is None:
            density = self.density
        else:
            density = self.density + other.density
        atoms = list(self.atoms)
        for atom in other.atoms:
            for i, mine in enumerate(atoms):
                if _same_point(mine.location, atom.location):
                    atoms[i] = Atom(mine.location, mine.mass + atom.mass)
                    break
            else:
                atoms.append(atom)
        return RadonMeasure(density, tuple(a for a in atoms if a.mass != 0.0))

    def __mul__(self, scalar: float) -> "RadonMeasure":
        scalar = float(scalar)
        density = None if self.density is None else scalar * self.density
        atoms = tuple(Atom(a.location, scalar * a.mass) for a in self.atoms if scalar != 0.0)
        return RadonMeasure(density, atoms)

    __rmul__ = __mul__

    def __neg__(self) -> "RadonMeasure":
        return self * -1.0

    def __sub__(self, other: "RadonMeasure") -> "RadonMeasure":
        return self + (-other)

    def positive_part(self) -> "RadonMeasure":
        density = None if self.density is None else np.maximum(self.density, 0.0)
        return RadonMeasure(density, tuple(a for a in self.atoms if a.mass > 0))

    def negative_part(self) -> "RadonMeasure":
        return (-self).positive_part()

    def is_nonnegative(self) -> bool:
        dense_ok = self.density is None or bool(np.all(self.density >= 0))
        return dense_ok and all(a.mass >= 0 for a in self.atoms)

    def is_zero(self) -> bool:
        dense_zero = self.density is None or not np.any(self.density)
        return dense_zero and not self.atoms

    def mass_at(self, point) -> float:
        """mu({x}): the atom mass at point (0 if none)."""
        for atom in self.atoms:
            if _same_point(atom.location, point):
                return atom.mass
        return 0.0

    def total_variation(self, grid: QuadGrid) -> float:
        dense = 0.0
        if self.density is not None:
            dense = float(np.dot(grid.weights, np.abs(self.density)))
        return dense + sum(abs(a.mass) for a in self.atoms)

    def density_mass(self, grid: QuadGrid) -> float:
        return 0.0 if self.density is None else float(np.dot(grid.weights, self.density))


@dataclass(frozen=True)
class Singularity:
    """
    Isolated singular point of a potential.

    beta=None declares a singular point whose blow-up rate is unknown; the
    values then come from the sampled background only.
    """

    point: Tuple[float, ...]
    beta: Optional[float] = None
    coeff: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "point", _as_point(self.point))
        if self.beta is not None and not self.beta > 0:
            raise ParameterError(f"singularity exponent must be positive, got {self.beta}")
        if not self.coeff > 0:
            raise ParameterError(f"singularity coefficient must be positive, got {self.coeff}")


@dataclass(frozen=True)
class Potential:
    """
    V = c0 + background + sum coeff |y - p|**(-beta).

    Attributes:
        background: Per-node nonnegative samples, or None
        c0: Constant floor >= 0
        singularities: Finitely many distinct interior singular points
    """

    background: Optional[np.ndarray] = None
    c0: float = 0.0
    singularities: Tuple[Singularity, ...] = ()

    def __post_init__(self):
        if not self.c0 >= 0:
            raise ParameterError(f"c0 must be nonnegative, got {self.c0}")
        if self.background is not None:
            background = np.array(self.background, dtype=float)
            if np.any(background < 0) or not np.all(np.isfinite(background)):
                raise ParameterError("background must be finite and nonnegative")
            background.setflags(write=False)
            object.__setattr__(self, "background", background)
        singularities = tuple(self.singularities)
        for i, first in enumerate(singularities):
            for second in singularities[i + 1:]:
                if _same_point(first.point, second.point):
                    raise ParameterError(f"duplicate singular point {list(first.point)}")
        object.__setattr__(self, "singularities", singularities)

    @classmethod
    def power_law(cls, beta: float, coeff: float = 1.0, point=None, dim: int = 3) -> "Potential":
        point = (0.0,) * dim if point is None else point
        return cls(singularities=(Singularity(point, beta, coeff),))

    @classmethod
    def constant(cls, c0: float) -> "Potential":
        return cls(c0=c0)

    def scaled(self, factor: float) -> "Potential":
        background = None if self.background is None else factor * self.background
        singularities = tuple(replace(s, coeff=factor * s.coeff) for s in self.singularities)
        return Potential(background, factor * self.c0, singularities)

    @property
    def singular_points(self) -> List[Tuple[float, ...]]:
        return [s.point for s in self.singularities]

    def bound(self) -> float:
        """||c0 + background||_inf."""
        top = 0.0 if self.background is None else float(self.background.max(initial=0.0))
        return self.c0 + top

    def values(self, grid: QuadGrid) -> np.ndarray:
        """
        V at the nodes.

        A node that coincides with a singular point carries the average of
        coeff |y - p|**(-beta) over its cell: coeff n / (n - beta) h**(-beta),
        or +inf when beta >= n.
        """
        values = np.full(grid.size, self.c0)
        if self.background is not None:
            values = values + self.background
        for singular in self.singularities:
            if singular.beta is None:
                continue
            dist = np.linalg.norm(grid.nodes - np.asarray(singular.point), axis=1)
            on_node = dist < COINCIDENCE_TOL
            safe = np.where(on_node, 1.0, dist)
            contribution = singular.coeff * safe ** (-singular.beta)
            if on_node.any():
                index = int(np.argmax(on_node))
                if singular.beta < grid.dim:
                    h = grid.cell_radius[index]
                    contribution[index] = (
                        singular.coeff * grid.dim / (grid.dim - singular.beta) * h ** (-singular.beta)
                    )
                else:
                    contribution[index] = np.inf
            values = values + contribution
        return values

    def sup_outside(self, grid: QuadGrid, radius: float) -> float:
        """max V over nodes outside the union of B_radius(p), p singular."""
        values = self.values(grid)
        keep = np.ones(grid.size, dtype=bool)
        for point in self.singular_points:
            keep &= np.linalg.norm(grid.nodes - np.asarray(point), axis=1) >= radius
        return float(values[keep].max(initial=0.0))


def truncate(values, k: float) -> np.ndarray:
    """
    V ^ k at the nodes.

    Args:
        values: Per-node V (a Potential's values)
        k: Positive cutoff

    Raises:
        ParameterError: If k <= 0
    """
    if not k > 0:
        raise ParameterError(f"cutoff must be positive, got {k}")
    return np.minimum(np.asarray(values, dtype=float), float(k))


@dataclass(frozen=True)
class ZPointEvidence:
    """Evidence collected for one singular point."""

    point: Tuple[float, ...]
    beta: Optional[float]
    analytic_verdict: Optional[bool]
    borderline: bool = False
    integral_ladder: Tuple[float, ...] = ()
    ladder_verdict: Optional[bool] = None
    ladder_flagged: bool = False
    maxprinciple_value: Optional[float] = None

    @property
    def in_z(self) -> bool:
        if self.analytic_verdict is not None:
            return self.analytic_verdict
        return bool(self.ladder_verdict)


@dataclass(frozen=True)
class ZReport:
    """Z verdicts for the singular points of a potential; Z is a subset of S."""

    points: Tuple[ZPointEvidence, ...] = field(default_factory=tuple)

    @property
    def z_points(self) -> List[Tuple[float, ...]]:
        return [e.point for e in self.points if e.in_z]

    def evidence_at(self, point) -> Optional[ZPointEvidence]:
        for evidence in self.points:
            if _same_point(evidence.point, point):
                return evidence
        return None

    @classmethod
    def from_points(cls, points: Sequence) -> "ZReport":
        return cls(tuple(ZPointEvidence(_as_point(p), None, True) for p in points))


def z_membership_analytic(potential: Potential, kernel) -> ZReport:
    """
    Analytic Z verdicts: x in Z iff beta >= 2s.

    beta == 2s (to 1e-12) is assigned to Z and flagged borderline; a
    singular point without exponent gets verdict None ("unknown").
    """
    two_s = 2.0 * kernel.order_s
    evidence = []
    for singular in potential.singularities:
        if singular.beta is None:
            evidence.append(ZPointEvidence(singular.point, None, None))
            continue
        borderline = abs(singular.beta - two_s) < BORDERLINE_TOL
        evidence.append(
            ZPointEvidence(singular.point, singular.beta, singular.beta >= two_s or borderline, borderline)
        )
    return ZReport(tuple(evidence))


@dataclass(frozen=True)
class IntegralLadder:
    """
    Accumulated integrals of V |x - y|**(2s - n) over B_rho(x) minus B_rho_min(x).

    Attributes:
        radii: Ladder radii, largest first
        integrals: I(rho) for each radius
        increments: Dyadic annulus contributions, outermost first
        decay_rate: Fitted -log2 of the increment ratio
        divergent: True if increments fail to decay geometrically
        flagged: True if some annulus holds fewer than 8 nodes or fewer than
            three radii lie above the grid resolution (no verdict)
        annulus_counts: Nodes per annulus
    """

    radii: Tuple[float, ...]
    integrals: Tuple[float, ...]
    increments: Tuple[float, ...]
    decay_rate: float
    divergent: bool
    flagged: bool
    annulus_counts: Tuple[int, ...]


def z_integral_ladder(
    potential: Potential,
    kernel,
    grid: QuadGrid,
    point,
    rho_ladder: Optional[Sequence[float]] = None,
) -> IntegralLadder:
    """
    Numerical integrability test at a singular point.

    Increments over the dyadic annuli [rho_{j+1}, rho_j) behave like
    2**(-j (2s - beta)) for a power-law singularity; the verdict is
    "divergent" when the fitted decay rate is below 1/8.
    """
    point = np.asarray(_as_point(point))
    floor = grid.min_probe_radius(point)
    requested = rho_ladder or dyadic_ladder(1, grid.octaves or 6)
    radii = [float(rho) for rho in requested if rho >= floor]
    if len(radii) < 3:
        logger.warning(
            f"Integral ladder at {point.tolist()} has {len(radii)} radii above the grid "
            f"resolution {floor:.3g}; keeping the analytic verdict"
        )
        return IntegralLadder(
            radii=tuple(radii),
            integrals=(),
            increments=(),
            decay_rate=float("nan"),
            divergent=False,
            flagged=True,
            annulus_counts=(),
        )
    dist = np.linalg.norm(grid.nodes - point, axis=1)
    values = potential.values(grid)
    safe = np.where(dist > 0, dist, 1.0)
    integrand = np.where(dist > 0, values * safe ** kernel.exponent, 0.0) * grid.weights

    increments, counts = [], []
    for outer, inner in zip(radii[:-1], radii[1:]):
        annulus = (dist >= inner) & (dist < outer)
        increments.append(float(integrand[annulus].sum()))
        counts.append(int(annulus.sum()))
    integrals = [float(np.sum(increments[j:])) for j in range(len(increments))] + [0.0]

    steps = np.log2(np.asarray(radii[:-1]))
    positive = np.asarray(increments) > 0
    if positive.sum() >= 2:
        slope, _ = np.polyfit(-steps[positive], np.log2(np.asarray(increments)[positive]), 1)
        # increments ~ 2**(-rate * j) with j = -log2(rho)
        rate = float(-slope)
    else:
        rate = float("inf")
    flagged = min(counts) < MIN_ANNULUS_NODES
    if flagged:
        logger.warning(f"Integral ladder at {point.tolist()} is under-resolved")
    return IntegralLadder(
        radii=tuple(radii),
        integrals=tuple(integrals),
        increments=tuple(increments),
        decay_rate=rate,
        divergent=rate < DIVERGENCE_RATE,
        flagged=flagged,
        annulus_counts=tuple(counts),
    )


def z_report(potential: Potential, kernel, grid: QuadGrid, rho_ladder=None) -> ZReport:
    """Analytic verdicts enriched with the integral ladder at every singular point."""
    analytic = z_membership_analytic(potential, kernel)
    evidence = []
    for item in analytic.points:
        ladder = z_integral_ladder(potential, kernel, grid, item.point, rho_ladder)
        evidence.append(
            replace(
                item,
                integral_ladder=ladder.integrals,
                ladder_verdict=None if ladder.flagged else ladder.divergent,
                ladder_flagged=ladder.flagged,
            )
        )
    return ZReport(tuple(evidence))


def reduce(mu: RadonMeasure, z: ZReport) -> RadonMeasure:
    """mu_r: mu without its atoms at the Z points; idempotent and linear."""
    z_points = z.z_points
    atoms = tuple(
        a for a in mu.atoms if not any(_same_point(a.location, p) for p in z_points)
    )
    return RadonMeasure(mu.density, atoms)
