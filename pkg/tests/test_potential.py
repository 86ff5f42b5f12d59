"""
Tests for potential landscapes
"""

import math

import numpy as np
import pytest

from core.errors import ConstructionError
from core.grid import GridSpec
from core.potential import (
    BumpSet,
    FermiLattice,
    LatticeSpec,
    make_constant,
    make_cosine_integrable,
    make_fermi_lattice,
    make_mathieu_channel,
    make_zero,
    sample_on_grid,
)


def numeric_grad(field, x, y, h=1e-6):
    gx = (field.eval(x + h, y) - field.eval(x - h, y)) / (2 * h)
    gy = (field.eval(x, y + h) - field.eval(x, y - h)) / (2 * h)
    return gx, gy


class TestSimpleFields:
    def test_zero_and_constant(self):
        """Test trivial fields have flat values and zero gradient"""
        x = np.linspace(-3, 3, 7)
        zero = make_zero()
        constant = make_constant(2.5)

        assert np.all(zero.eval(x, x) == 0.0)
        assert np.all(constant.eval(x, 0.0) == 2.5)
        gx, gy = constant.grad(x, x)
        assert np.all(gx == 0.0) and np.all(gy == 0.0)
        assert constant.barrier_height == 0.0

    def test_cosine_values_and_barrier(self):
        """Test separable cosine lattice values and barrier height"""
        field = make_cosine_integrable(1.5)

        assert field.eval(0.0, 0.0) == pytest.approx(-3.0)
        assert field.eval(math.pi, math.pi) == pytest.approx(3.0)
        assert field.barrier_height == pytest.approx(6.0)
        assert field.periodic_cell == (2 * math.pi, 2 * math.pi)

    def test_cosine_zero_amplitude_rejected(self):
        """Test cosine lattice needs a non-zero amplitude"""
        with pytest.raises(ConstructionError):
            make_cosine_integrable(0.0)

    def test_cosine_gradient_matches_finite_difference(self):
        """Test analytic cosine gradient"""
        field = make_cosine_integrable(0.7)
        x = np.array([0.3, 1.7, -2.2])
        y = np.array([-0.4, 2.9, 0.8])

        gx, gy = field.grad(x, y)
        nx, ny = numeric_grad(field, x, y)
        assert np.allclose(gx, nx, atol=1e-7)
        assert np.allclose(gy, ny, atol=1e-7)


class TestMathieuChannel:
    def test_vanishes_on_channel_axes(self):
        """Test channel potential is zero on every line y = n*pi"""
        field = make_mathieu_channel(1.2, 0.4)
        x = np.linspace(-5, 5, 11)

        for n in range(-2, 3):
            assert np.allclose(field.eval(x, n * math.pi), 0.0, atol=1e-12)

    def test_bump_tops_and_barrier(self):
        """Test bump tops sit at a + 2|q| halfway between channels"""
        field = make_mathieu_channel(1.0, 0.5)

        assert field.eval(math.pi / 2, math.pi / 2) == pytest.approx(2.0)
        assert field.eval(0.0, math.pi / 2) == pytest.approx(0.0)
        assert field.barrier_height == pytest.approx(2.0)

    def test_gradient_matches_finite_difference(self):
        """Test analytic channel gradient"""
        field = make_mathieu_channel(0.8, -0.3)
        x = np.array([0.1, 1.3, 2.6])
        y = np.array([0.5, -1.1, 2.0])

        gx, gy = field.grad(x, y)
        nx, ny = numeric_grad(field, x, y)
        assert np.allclose(gx, nx, atol=1e-7)
        assert np.allclose(gy, ny, atol=1e-7)

    def test_batched_parameters_broadcast(self):
        """Test one channel object can carry several (a, q) nodes"""
        a = np.array([1.0, 2.0])
        q = np.array([0.0, 0.5])
        field = make_mathieu_channel(a, q)

        values = field.eval(np.zeros(2), np.full(2, math.pi / 2))
        assert np.allclose(values, [1.0, 1.0])
        assert field.parameters() == {"a": "batched", "q": "batched"}


class TestLatticeSpec:
    def test_square_centers(self):
        """Test square lattice covers the extent including its edges"""
        spec = LatticeSpec("square", 1.0, (0.0, 2.0, 0.0, 2.0))

        centers = spec.centers()
        assert centers.shape == (9, 2)
        assert spec.periodic_cell == (1.0, 1.0)

    def test_triangular_rows_are_shifted(self):
        """Test odd triangular rows are shifted by half a lattice constant"""
        spec = LatticeSpec("triangular", 2.0, (0.0, 4.0, 0.0, 2.0))

        centers = spec.centers()
        row_step = math.sqrt(3.0)
        odd = centers[np.isclose(centers[:, 1], row_step)]
        assert len(odd) > 0
        assert np.allclose(np.mod(odd[:, 0], 2.0), 1.0)
        assert spec.periodic_cell == pytest.approx((2.0, 2.0 * math.sqrt(3.0)))

    def test_random_centers_deterministic(self):
        """Test random placement is reproducible from the seed"""
        spec = LatticeSpec("random", 1.0, (0.0, 10.0, 0.0, 10.0), seed=7, count=50)

        first = spec.centers()
        second = spec.centers()
        other = LatticeSpec("random", 1.0, (0.0, 10.0, 0.0, 10.0), seed=8, count=50).centers()
        assert np.array_equal(first, second)
        assert not np.array_equal(first, other)
        assert spec.periodic_cell is None

    def test_random_min_spacing_respected(self):
        """Test rejection sampling keeps bumps apart"""
        spec = LatticeSpec(
            "random", 1.0, (0.0, 10.0, 0.0, 10.0), seed=3, count=30, min_spacing=1.0
        )

        centers = spec.centers()
        d = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
        d[np.diag_indices(len(centers))] = np.inf
        assert d.min() >= 1.0

    def test_random_placement_impossible(self):
        """Test impossible spacing is reported instead of looping forever"""
        spec = LatticeSpec(
            "random", 1.0, (0.0, 1.0, 0.0, 1.0), seed=0, count=100, min_spacing=1.0
        )

        with pytest.raises(ConstructionError):
            spec.centers()

    def test_invalid_specs(self):
        """Test invalid lattice parameters are rejected"""
        with pytest.raises(ConstructionError):
            LatticeSpec("hexagonal", 1.0, (0, 1, 0, 1))
        with pytest.raises(ConstructionError):
            LatticeSpec("square", 0.0, (0, 1, 0, 1))
        with pytest.raises(ConstructionError):
            LatticeSpec("square", 1.0, (1, 0, 0, 1))
        with pytest.raises(ConstructionError):
            LatticeSpec("random", 1.0, (0, 1, 0, 1), count=0)


class TestFermiLattice:
    @pytest.fixture
    def single_bump(self):
        bumps = BumpSet(centers=np.array([[0.0, 0.0]]), amplitude=2.0, sigma=0.2)
        return FermiLattice(bumps)

    def test_single_bump_profile(self, single_bump):
        """Test bump is A/2 at its center and vanishes far away"""
        assert float(single_bump.eval(0.0, 0.0)) == pytest.approx(1.0)
        assert float(single_bump.eval(50.0, 0.0)) == 0.0
        assert float(single_bump.eval(0.5, 0.0)) < float(single_bump.eval(0.1, 0.0))

    def test_gradient_matches_finite_difference(self, single_bump):
        """Test analytic bump gradient"""
        x = np.array([0.1, -0.3, 0.25])
        y = np.array([0.2, 0.05, -0.4])

        gx, gy = single_bump.grad(x, y)
        nx, ny = numeric_grad(single_bump, x, y)
        assert np.allclose(gx, nx, atol=1e-6)
        assert np.allclose(gy, ny, atol=1e-6)

    def test_gradient_finite_at_bump_center(self, single_bump):
        """Test gradient is defined (zero) exactly on a center"""
        gx, gy = single_bump.grad(0.0, 0.0)
        assert gx == 0.0 and gy == 0.0

    def test_non_finite_points_give_nan(self, single_bump):
        """Test NaN positions propagate as NaN values"""
        values = single_bump.eval(np.array([np.nan, 0.0]), np.array([0.0, 0.0]))
        assert np.isnan(values[0])
        assert values[1] == pytest.approx(1.0)

    def test_periodic_lattice_is_periodic(self):
        """Test a tiled square lattice repeats with its lattice constant"""
        spec = LatticeSpec("square", 1.0, (-5.0, 5.0, -5.0, 5.0))
        field = make_fermi_lattice(spec, amplitude=1.0, sigma=0.1, r_off=0.2)

        x = np.linspace(-2.0, 2.0, 9) + 0.13
        y = np.linspace(-2.0, 2.0, 9) - 0.31
        assert np.allclose(field.eval(x + 1.0, y), field.eval(x, y), atol=1e-9)
        assert np.allclose(field.eval(x, y + 1.0), field.eval(x, y), atol=1e-9)

    def test_barrier_height_positive(self):
        """Test barrier height of a soft lattice is close to the amplitude"""
        spec = LatticeSpec("square", 2.0, (-4.0, 4.0, -4.0, 4.0))
        field = make_fermi_lattice(spec, amplitude=1.0, sigma=0.1, r_off=0.3)

        assert 0.9 < field.barrier_height <= 1.0 + 1e-9

    def test_invalid_softness(self):
        """Test non-positive softness is rejected"""
        spec = LatticeSpec("square", 1.0, (0, 1, 0, 1))
        with pytest.raises(ConstructionError):
            make_fermi_lattice(spec, amplitude=1.0, sigma=0.0)


class TestSampling:
    def test_sample_on_grid_shape_and_rows(self):
        """Test grid sampling is (ny, nx) with row j at y0 + j*dy"""
        grid = GridSpec.from_extent(8, 4, (0.0, 8.0, 0.0, 4.0))
        field = make_mathieu_channel(1.0, 0.0)

        V = sample_on_grid(field, grid)
        assert V.shape == (4, 8)
        assert np.allclose(V[0], 0.0)
        assert V[1, 0] == pytest.approx(math.sin(1.0) ** 2)
