#!/usr/bin/env python3
"""
Tests for green_kernel.py

Covers the closed forms, symmetry, positivity, the two-sided estimate and
argument validation of both kernel variants.
"""

import os
import sys

import numpy as np
import pytest
from scipy import integrate, special

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from errors import (  # noqa: E402
    DomainError,
    ParameterError,
    SingularityError,
    UnsupportedRegimeError,
)
from green_kernel import (  # noqa: E402
    GreenKernel,
    KernelVariant,
    estimate_ratio,
    kernel_from_distances,
    kernel_eval,
    polar_cell_integral,
    radial_profile,
    slab_integral,
    spherical_mean,
    torsion_function,
)


def random_ball_points(rng, count, dim=3, max_radius=0.95):
    directions = rng.normal(size=(count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = max_radius * rng.uniform(size=count) ** (1.0 / dim)
    return directions * radii[:, None]


@pytest.fixture(params=[0.25, 0.5, 0.75, 1.0], ids=lambda s: f"s={s}")
def kernel(request):
    return GreenKernel.from_order(3, request.param)


class TestConstruction:
    """Test kernel constructors and parameter checks."""

    def test_variants(self):
        assert GreenKernel.classical(3).variant is KernelVariant.CLASSICAL
        assert GreenKernel.rfl(3, 0.5).variant is KernelVariant.RFL
        assert GreenKernel.from_order(3, 1.0).variant is KernelVariant.CLASSICAL
        assert GreenKernel.rfl(3, 0.5).boundary_gamma == 0.5

    def test_classical_normalization(self):
        assert GreenKernel.classical(3).normalization == pytest.approx(1.0 / (4.0 * np.pi))

    @pytest.mark.parametrize("s", [0.0, 1.0, 1.5, -0.2])
    def test_rfl_rejects_order(self, s):
        with pytest.raises(ParameterError):
            GreenKernel.rfl(3, s)

    def test_regular_kernel_is_unsupported(self):
        with pytest.raises(UnsupportedRegimeError):
            GreenKernel.classical(2)

    def test_describe(self):
        info = GreenKernel.rfl(3, 0.5).describe()
        assert info["variant"] == "rfl"
        assert info["s"] == 0.5


class TestClosedForms:
    """Test values against the explicit formulas."""

    @pytest.mark.parametrize("radius", [0.1, 0.5, 0.9])
    def test_classical_from_origin(self, radius):
        """G(0, x) = (1/4 pi)(1/|x| - 1) in three dimensions."""
        kernel = GreenKernel.classical(3)
        value = kernel_eval(kernel, (0.0, 0.0, 0.0), (radius, 0.0, 0.0))
        assert value == pytest.approx((1.0 / radius - 1.0) / (4.0 * np.pi), rel=1e-12)

    def test_classical_kelvin_image(self, rng):
        kernel = GreenKernel.classical(3)
        x, y = random_ball_points(rng, 2)
        image = y / np.dot(y, y)
        expected = (1.0 / np.linalg.norm(x - y) - 1.0 / (np.linalg.norm(y) * np.linalg.norm(x - image))) / (
            4.0 * np.pi
        )
        assert kernel_eval(kernel, x, y) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    @pytest.mark.parametrize("r", [1e-3, 0.3, 2.0, 50.0])
    def test_rfl_profile_against_quadrature(self, s, r):
        """Incomplete beta profile against the integral after t = u**(1/s)."""
        half = 1.5
        expected, _ = integrate.quad(
            lambda u: (1.0 / s) * (1.0 + u ** (1.0 / s)) ** (-half), 0.0, r**s, epsabs=1e-13, epsrel=1e-12
        )
        assert radial_profile(GreenKernel.rfl(3, s), r) == pytest.approx(expected, rel=1e-8)

    def test_profile_limit(self, kernel):
        assert radial_profile(kernel, 1e12) == pytest.approx(kernel.profile_limit, rel=1e-4)

    @pytest.mark.parametrize("s, expected", [(1.0, 1.0 / 6.0), (0.5, 0.5)])
    def test_torsion_at_origin(self, s, expected):
        kernel = GreenKernel.from_order(3, s)
        assert torsion_function(kernel, np.zeros(3)) == pytest.approx(expected, rel=1e-12)

    def test_torsion_vanishes_on_boundary(self, kernel):
        assert torsion_function(kernel, (1.0, 0.0, 0.0)) == 0.0


class TestStructure:
    """Test symmetry, positivity and the two-sided estimate."""

    def test_symmetry(self, kernel, rng):
        x = random_ball_points(rng, 10_000)
        y = random_ball_points(rng, 10_000)
        np.testing.assert_allclose(kernel_eval(kernel, x, y), kernel_eval(kernel, y, x), rtol=1e-12)

    def test_positivity(self, kernel, rng):
        x = random_ball_points(rng, 500, max_radius=0.999)
        y = random_ball_points(rng, 500, max_radius=0.999)
        assert np.all(kernel_eval(kernel, x, y) > 0.0)

    def test_two_sided_estimate(self, kernel, rng):
        """Ratio to the model profile stays within a bounded band."""
        x = random_ball_points(rng, 10_000, max_radius=0.999)
        y = random_ball_points(rng, 10_000, max_radius=0.999)
        ratio = estimate_ratio(kernel, x, y)
        assert ratio.min() > 0.0
        assert ratio.max() / ratio.min() < 50.0

    def test_boundary_decay(self, kernel):
        """G(0, y) ~ (1 - |y|)**gamma as y approaches the boundary."""
        deltas = np.array([1e-3, 1e-4])
        points = np.stack([1.0 - deltas, np.zeros(2), np.zeros(2)], axis=1)
        values = kernel_eval(kernel, np.zeros(3), points)
        slope = np.log(values[0] / values[1]) / np.log(10.0)
        assert slope == pytest.approx(kernel.boundary_gamma, abs=0.01)

    def test_near_diagonal_riesz(self, kernel):
        x = np.array([0.1, 0.0, 0.0])
        y = x + np.array([0.0, 1e-6, 0.0])
        value = kernel_eval(kernel, x, y)
        assert value * 1e-6 ** (-kernel.exponent) == pytest.approx(kernel.riesz_constant, rel=1e-3)

    def test_polar_cell_integral_positive(self, kernel):
        values = polar_cell_integral(kernel, np.array([1e-3, 1e-2]), np.array([0.5, 0.5]))
        assert np.all(values > 0.0)
        assert values[1] > values[0]


class TestShellIntegrals:
    """Test the spherical mean and the radial slab integral of G(x, .)."""

    @staticmethod
    def classical_slab(r, a, b):
        """int_a^b rho^2 (1/max(r, rho) - 1) d rho, the closed form for s = 1, n = 3."""
        inner = np.clip(r, a, b)
        return (inner**3 - a**3) / (3.0 * r) + (b**2 - inner**2) / 2.0 - (b**3 - a**3) / 3.0

    def test_classical_mean(self):
        r = np.array([0.2, 0.5, 0.9, 0.3])
        rho = np.array([0.7, 0.1, 0.95, 0.31])
        expected = (1.0 / np.maximum(r, rho) - 1.0) / (4.0 * np.pi)
        np.testing.assert_allclose(spherical_mean(GreenKernel.classical(3), r, rho), expected, rtol=1e-9)

    def test_mean_at_centre(self, kernel):
        value = spherical_mean(kernel, 0.0, 0.4)
        point = kernel_eval(kernel, np.zeros(3), (0.4, 0.0, 0.0))
        assert float(value) == pytest.approx(float(point), rel=1e-13)

    @pytest.mark.parametrize("dim, s", [(3, 0.25), (3, 0.75), (4, 0.5), (5, 0.75)])
    def test_mean_against_direction_integral(self, dim, s):
        """Mean over the sphere equals c_n int G (1 - t^2)^((n - 3)/2) dt in t = cos(angle)."""
        kernel = GreenKernel.from_order(dim, s)
        r, rho = 0.45, 0.6
        const = special.gamma(dim / 2.0) / (np.sqrt(np.pi) * special.gamma((dim - 1) / 2.0))

        def integrand(t):
            dist2 = r * r + rho * rho - 2.0 * r * rho * t
            value = kernel_from_distances(kernel, dist2, (1.0 - r * r) * (1.0 - rho * rho))
            return const * value * (1.0 - t * t) ** ((dim - 3) / 2.0)

        expected, _ = integrate.quad(integrand, -1.0, 1.0, limit=200)
        assert float(spherical_mean(kernel, r, rho)) == pytest.approx(expected, rel=1e-7)

    @pytest.mark.parametrize("r, a, b", [(0.4, 0.3, 0.6), (0.4, 0.5, 0.9), (0.8, 0.1, 0.3), (0.6, 0.0, 1.0)])
    def test_classical_slab(self, r, a, b):
        value = slab_integral(GreenKernel.classical(3), r, a, b)
        assert float(value[0]) == pytest.approx(self.classical_slab(r, a, b), rel=1e-8)

    def test_whole_ball_is_torsion(self, kernel):
        radii = np.array([0.0, 0.3, 0.7, 0.95])
        whole = slab_integral(kernel, radii, np.zeros(4), np.ones(4))
        points = np.column_stack((radii, np.zeros(4), np.zeros(4)))
        np.testing.assert_allclose(whole, torsion_function(kernel, points), rtol=1e-4)

    def test_slabs_add_up(self, kernel):
        r = np.full(3, 0.5)
        split = slab_integral(kernel, r, np.array([0.2, 0.45, 0.55]), np.array([0.45, 0.55, 0.8]))
        whole = slab_integral(kernel, r[:1], np.array([0.2]), np.array([0.8]))
        assert split.sum() == pytest.approx(whole[0], rel=1e-6)


class TestErrors:
    """Test argument validation."""

    def test_outside_ball(self):
        with pytest.raises(DomainError):
            kernel_eval(GreenKernel.classical(3), (1.0, 0.0, 0.0), (0.0, 0.0, 0.0))

    def test_diagonal(self):
        with pytest.raises(SingularityError):
            kernel_eval(GreenKernel.rfl(3, 0.5), (0.2, 0.1, 0.0), (0.2, 0.1, 0.0))

    def test_estimate_ratio_validates(self):
        with pytest.raises(DomainError):
            estimate_ratio(GreenKernel.rfl(3, 0.5), (0.0, 0.0, 1.2), (0.0, 0.0, 0.0))
