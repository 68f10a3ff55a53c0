#!/usr/bin/env python3
"""
Explicit Green kernels of the unit ball.

Both kernels are written in the profile form

    G(x, y) = kappa * |x - y|**(2s - n) * P(r),
    r = (1 - |x|**2) (1 - |y|**2) / |x - y|**2,

with
    classical (s = 1):  kappa = Gamma(n/2) / (2 (n-2) pi**(n/2)),
                        P(r) = 1 - (1 + r)**(1 - n/2)
    restricted fractional Laplacian (0 < s < 1):
                        kappa = Gamma(n/2) / (4**s pi**(n/2) Gamma(s)**2),
                        P(r) = int_0^r t**(s-1) (1 + t)**(-n/2) dt
                             = B(s, n/2 - s) I_{r/(1+r)}(s, n/2 - s).

The classical profile is the Kelvin image formula; for n = 3 it reduces to
(1/4pi)(1/|x-y| - 1/(|x| |y - x*|)).

Usage:
    from green_kernel import GreenKernel, kernel_eval
    kernel = GreenKernel.rfl(3, 0.5)
    value = kernel_eval(kernel, (0, 0, 0), (0.5, 0, 0))
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special

from domain_grid import unit_sphere_area
from errors import DomainError, ParameterError, SingularityError, UnsupportedRegimeError

logger = logging.getLogger(__name__)


class KernelVariant(str, Enum):
    CLASSICAL = "classical"
    RFL = "rfl"

    @property
    def code(self) -> int:
        return 0 if self is KernelVariant.CLASSICAL else 1


@dataclass(frozen=True)
class GreenKernel:
    """
    Green kernel parameters.

    Attributes:
        dim: Space dimension n
        order_s: Order s in (0, 1]
        boundary_gamma: Boundary exponent gamma (1 classical, s fractional)
        variant: KernelVariant
        normalization: kappa, the constant in front of the profile form
    """

    dim: int
    order_s: float
    boundary_gamma: float
    variant: KernelVariant
    normalization: float

    def __post_init__(self):
        if self.dim - 2.0 * self.order_s <= 0:
            raise UnsupportedRegimeError(
                f"n - 2s must be positive, got n={self.dim}, s={self.order_s}"
            )
        if self.dim < 3:
            raise ParameterError(f"dim must be >= 3, got {self.dim}")
        if self.variant is KernelVariant.CLASSICAL:
            if self.order_s != 1.0 or self.boundary_gamma != 1.0:
                raise ParameterError("classical kernel requires s = 1 and gamma = 1")
        else:
            if not 0.0 < self.order_s < 1.0:
                raise ParameterError(f"RFL kernel requires 0 < s < 1, got {self.order_s}")
            if self.boundary_gamma != self.order_s:
                raise ParameterError("RFL kernel requires gamma = s")
        if not self.normalization > 0:
            raise ParameterError("kernel normalization must be positive")

    @classmethod
    def classical(cls, dim: int = 3) -> "GreenKernel":
        norm = special.gamma(dim / 2.0) / (2.0 * (dim - 2) * np.pi ** (dim / 2.0))
        return cls(dim, 1.0, 1.0, KernelVariant.CLASSICAL, float(norm))

    @classmethod
    def rfl(cls, dim: int, s: float) -> "GreenKernel":
        s = float(s)
        if not 0.0 < s < 1.0:
            raise ParameterError(f"RFL kernel requires 0 < s < 1, got {s}")
        norm = special.gamma(dim / 2.0) / (
            4.0**s * np.pi ** (dim / 2.0) * special.gamma(s) ** 2
        )
        return cls(dim, s, s, KernelVariant.RFL, float(norm))

    @classmethod
    def from_order(cls, dim: int, s: float) -> "GreenKernel":
        """Classical kernel for s = 1, RFL kernel otherwise."""
        return cls.classical(dim) if float(s) == 1.0 else cls.rfl(dim, s)

    @property
    def exponent(self) -> float:
        """2s - n, the power of |x - y|."""
        return 2.0 * self.order_s - self.dim

    @property
    def profile_limit(self) -> float:
        """P(infinity): the near-diagonal value of the profile."""
        if self.variant is KernelVariant.CLASSICAL:
            return 1.0
        s, half = self.order_s, self.dim / 2.0
        return float(special.beta(s, half - s))

    @property
    def riesz_constant(self) -> float:
        """kappa * P(infinity): G(x, y) ~ riesz_constant |x - y|**(2s - n)."""
        return self.normalization * self.profile_limit

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "s": self.order_s,
            "gamma": self.boundary_gamma,
            "variant": self.variant.value,
            "normalization": self.normalization,
        }


def radial_profile(kernel: GreenKernel, r) -> np.ndarray:
    """
    Profile P(r) for r >= 0 (vectorized).

    For the RFL this is the incomplete beta integral
    int_0^r t**(s-1) (1+t)**(-n/2) dt; monotone in r and bounded by
    B(s, n/2 - s).
    """
    r = np.asarray(r, dtype=float)
    half = kernel.dim / 2.0
    if kernel.variant is KernelVariant.CLASSICAL:
        return -np.expm1((1.0 - half) * np.log1p(r))
    s = kernel.order_s
    return special.beta(s, half - s) * special.betainc(s, half - s, r / (1.0 + r))


def _check_points(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(np.sum(x * x, axis=-1) >= 1.0) or np.any(np.sum(y * y, axis=-1) >= 1.0):
        raise DomainError("kernel arguments must lie inside the unit ball")
    return x, y


def evaluate_pairs(kernel: GreenKernel, x, y, x_defect=None, y_defect=None) -> np.ndarray:
    """
    Kernel values for broadcastable point arrays, without validation.

    Args:
        kernel: GreenKernel
        x, y: Arrays of shape (..., n)
        x_defect, y_defect: Optional precomputed 1 - |x|**2 and 1 - |y|**2

    Returns:
        Array of G(x, y); callers guarantee x != y and points inside the ball
    """
    if x_defect is None:
        x_defect = 1.0 - np.sum(x * x, axis=-1)
    if y_defect is None:
        y_defect = 1.0 - np.sum(y * y, axis=-1)
    diff = x - y
    return kernel_from_distances(kernel, np.sum(diff * diff, axis=-1), x_defect * y_defect)


def kernel_from_distances(kernel: GreenKernel, dist2, defect_product) -> np.ndarray:
    """G from |x - y|**2 and (1 - |x|**2)(1 - |y|**2)."""
    r = defect_product / dist2
    return kernel.normalization * dist2 ** (kernel.exponent / 2.0) * radial_profile(kernel, r)


def kernel_eval(kernel: GreenKernel, x, y):
    """
    Evaluate G(x, y).

    Args:
        kernel: GreenKernel
        x, y: Points (or broadcastable arrays of points) inside the unit ball

    Returns:
        Nonnegative float (or array for array input)

    Raises:
        DomainError: If |x| >= 1 or |y| >= 1
        SingularityError: If x = y
    """
    x, y = _check_points(x, y)
    dist = np.linalg.norm(x - y, axis=-1)
    if np.any(dist == 0.0):
        raise SingularityError("kernel is singular at x = y; use the diagonal correction")
    values = evaluate_pairs(kernel, x, y)
    return float(values) if np.ndim(values) == 0 else values


def estimate_ratio(kernel: GreenKernel, x, y):
    """
    G(x, y) divided by |x-y|**(2s-n) (delta(x) delta(y) / |x-y|**2 ^ 1)**gamma.

    Raises:
        DomainError, SingularityError: As kernel_eval
    """
    x, y = _check_points(x, y)
    values = kernel_eval(kernel, x, y)
    dist = np.linalg.norm(x - y, axis=-1)
    delta_x = 1.0 - np.linalg.norm(x, axis=-1)
    delta_y = 1.0 - np.linalg.norm(y, axis=-1)
    boundary = np.minimum(delta_x * delta_y / dist**2, 1.0) ** kernel.boundary_gamma
    ratio = values / (dist**kernel.exponent * boundary)
    return float(ratio) if np.ndim(ratio) == 0 else ratio


def torsion_function(kernel: GreenKernel, x) -> np.ndarray:
    """
    Exact G(1)(x) = Gamma(n/2) / (4**s Gamma(1+s) Gamma(n/2+s)) (1 - |x|**2)**s.

    For s = 1 this is (1 - |x|**2) / (2n).
    """
    x = np.asarray(x, dtype=float)
    s, half = kernel.order_s, kernel.dim / 2.0
    const = special.gamma(half) / (4.0**s * special.gamma(1.0 + s) * special.gamma(half + s))
    defect = np.clip(1.0 - np.sum(x * x, axis=-1), 0.0, None)
    return const * defect**s


def polar_cell_integral(kernel: GreenKernel, radius, defect) -> np.ndarray:
    """
    Leading-term integral of G(x, .) over the ball B_radius(x).

    kappa |S^(n-1)| radius**(2s) / (2s) times the profile at the cell edge,
    where defect = 1 - |x|**2.
    """
    radius = np.asarray(radius, dtype=float)
    s = kernel.order_s
    edge = radial_profile(kernel, np.asarray(defect, dtype=float) ** 2 / radius**2)
    return (
        kernel.normalization
        * unit_sphere_area(kernel.dim)
        * radius ** (2.0 * s)
        / (2.0 * s)
        * edge
    )


MEAN_NODES = 64
SLAB_NODES = 32


def _unit_rule(count: int):
    """Gauss-Legendre nodes and weights on (0, 1)."""
    t, w = np.polynomial.legendre.leggauss(count)
    return (t + 1.0) / 2.0, w / 2.0


def spherical_mean(kernel: GreenKernel, r, rho) -> np.ndarray:
    """
    Mean of G(r e, rho w) over the unit directions w, for any fixed unit e.

    Vectorized over broadcastable r and rho. The two radii must differ
    unless one of them is zero. The integral runs over the distance
    d = |r e - rho w| with d = d0 (d1/d0)**v, d0 = |r - rho|, d1 = r + rho,
    which flattens the d**(2s - n) growth at d0.
    """
    r, rho = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(rho, dtype=float))
    n = kernel.dim
    defect = (1.0 - r * r) * (1.0 - rho * rho)
    out = np.empty(r.shape)

    centre = (r == 0.0) | (rho == 0.0)
    if centre.any():
        far = np.maximum(r[centre], rho[centre])
        out[centre] = kernel_from_distances(kernel, far * far, defect[centre])

    ring = ~centre
    if ring.any():
        a, b, q = r[ring][:, None], rho[ring][:, None], defect[ring][:, None]
        d0, d1 = np.abs(a - b), a + b
        span = np.log(d1 / d0)
        v, w = _unit_rule(MEAN_NODES)
        d = d0 * np.exp(span * v[None, :])
        values = kernel_from_distances(kernel, d * d, q) * d * d * span
        if n > 3:
            shape = (d1 * d1 - d * d) * (d * d - d0 * d0) / (4.0 * a * a * b * b)
            values *= np.clip(shape, 0.0, None) ** ((n - 3) / 2.0)
        const = special.gamma(n / 2.0) / (np.sqrt(np.pi) * special.gamma((n - 1) / 2.0))
        out[ring] = const / (a[:, 0] * b[:, 0]) * (values @ w)
    return out


def slab_integral(kernel: GreenKernel, r, lower, upper) -> np.ndarray:
    """
    Integral of G(x, .) over the slab lower <= |y| <= upper, with |x| = r.

    Vectorized over 1-D arrays of equal length. The slab is split at r and
    every piece is integrated with a rule graded toward both of its ends
    (rho - r ~ u**(1/s)), where the spherical mean behaves like
    |rho - r|**(2s - 1) and (1 - rho)**s.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    split = np.clip(r, lower, upper)
    grade = max(1.0, 1.0 / kernel.order_s)
    u, w = _unit_rule(SLAB_NODES)
    stretch, jacobian = u**grade, grade * u ** (grade - 1.0)
    area = unit_sphere_area(kernel.dim)

    total = np.zeros(r.shape)
    for left, right in ((lower, split), (split, upper)):
        middle = 0.5 * (left + right)
        for end, half in ((left, middle - left), (right, middle - right)):
            live = half != 0.0
            if not live.any():
                continue
            radius = end[live, None] + half[live, None] * stretch[None, :]
            mean = spherical_mean(kernel, np.broadcast_to(r[live, None], radius.shape), radius)
            integrand = area * radius ** (kernel.dim - 1) * mean * jacobian[None, :]
            total[live] += np.abs(half[live]) * (integrand @ w)
    return total
