"""
Tests for split-operator wave propagation
"""

import math

import numpy as np
import pytest

from core.errors import ConstructionError, PropagationError
from core.factory import build_absorber
from core.grid import GridSpec
from core.potential import make_mathieu_channel, make_zero
from core.quantum import (
    BorderAbsorber,
    BoundaryMonitor,
    DiskAbsorber,
    EnergyAccumulator,
    NormObserver,
    axial_peak_offset,
    boundary_flux_fraction,
    calibrate_absorber,
    channel_confinement,
    coarse_grain,
    energy_expectation,
    gaussian_packet,
    make_absorber,
    mean_momentum,
    momentum_density,
    pearson_correlation,
    plane_wave,
    position_moments,
    propagate,
    shadow_ratio,
    superwire_filter,
    wedge_region,
)


@pytest.fixture
def grid():
    return GridSpec.from_extent(128, 128, (-20.0, 20.0, -20.0, 20.0))


@pytest.fixture
def packet(grid):
    return gaussian_packet(grid, (0.0, 0.0), 2.0, (1.0, 0.0))


class TestInitialStates:
    def test_gaussian_is_normalized(self, packet):
        """Test packets have unit norm and the requested mean momentum"""
        assert packet.norm() == pytest.approx(1.0)
        kx, ky = mean_momentum(packet)
        assert kx == pytest.approx(1.0, abs=1e-6)
        assert ky == pytest.approx(0.0, abs=1e-9)

    def test_gaussian_width(self, packet):
        """Test |psi|^2 has per-axis variance sigma0^2"""
        moments = position_moments(packet)

        assert moments["var_x"] == pytest.approx(4.0, rel=1e-6)
        assert moments["mean_x"] == pytest.approx(0.0, abs=1e-9)

    def test_unresolved_packet_rejected(self, grid):
        """Test packets narrower than the grid spacing are rejected"""
        with pytest.raises(ConstructionError):
            gaussian_packet(grid, (0.0, 0.0), 0.2, (0.0, 0.0))

    def test_plane_wave_snaps_to_grid(self, grid):
        """Test plane waves use the nearest box-periodic wavevector"""
        wave = plane_wave(grid, (1.01, 0.0))

        k = wave.meta["k"]
        assert k[0] * 40.0 / (2 * math.pi) == pytest.approx(round(k[0] * 40.0 / (2 * math.pi)))
        assert np.allclose(np.abs(wave.psi), np.abs(wave.psi[0, 0]))

    def test_small_grid_rejected(self):
        """Test wave grids need a minimum node count"""
        small = GridSpec.from_extent(4, 4, (0, 1, 0, 1))
        with pytest.raises(ConstructionError):
            plane_wave(small, (0.0, 0.0))


class TestFreePropagation:
    def test_norm_and_energy_conserved(self, packet):
        """Test unitary steps keep norm and energy without absorbers"""
        zero = np.zeros(packet.grid.shape)
        for scheme in ("strang", "lie"):
            final = propagate(packet, zero, 0.05, 100, scheme=scheme)
            assert final.norm() == pytest.approx(1.0, abs=1e-10)
            assert energy_expectation(final, zero) == pytest.approx(
                energy_expectation(packet, zero), rel=1e-10
            )

    def test_packet_moves_and_spreads(self, packet):
        """Test the centre moves at hbar k/m and the width follows free spreading"""
        final = propagate(packet, make_zero(), 0.05, 100)
        moments = position_moments(final)

        t = final.t
        assert t == pytest.approx(5.0)
        assert moments["mean_x"] == pytest.approx(5.0, abs=1e-3)
        expected = 4.0 * (1.0 + (t / (2.0 * 4.0)) ** 2)
        assert moments["var_x"] == pytest.approx(expected, rel=1e-3)

    def test_observers_and_monitors(self, packet):
        """Test observers are fed on the requested steps"""
        norms = NormObserver()
        boundary = BoundaryMonitor()
        propagate(packet, make_zero(), 0.05, 20, observers=[norms, boundary], observe_every=5)

        assert [round(t, 6) for t, _ in norms.history] == [0.25, 0.5, 0.75, 1.0]
        assert boundary.max_fraction < 1e-6

    def test_non_finite_amplitude_raises(self, packet):
        """Test NaN amplitudes raise with the last finite state attached"""
        V = np.zeros(packet.grid.shape)
        V[10, 10] = np.nan

        with pytest.raises(PropagationError) as info:
            propagate(packet, V, 0.05, 10)
        assert info.value.details["step"] == 1
        assert info.value.time == 0.0
        assert np.array_equal(info.value.snapshot, packet.psi)

    def test_time_reversal(self, packet):
        """Test conjugate, propagate and conjugate again undoes a run"""
        X, Y = packet.grid.mesh()
        V = 0.5 * np.cos(X) * np.cos(Y)

        forward = propagate(packet, V, 0.05, 100)
        back = propagate(forward.with_psi(np.conj(forward.psi), t=0.0), V, 0.05, 100)

        assert np.max(np.abs(np.conj(back.psi) - packet.psi)) < 1e-9

    def test_linearity(self, packet):
        """Test propagating a scaled state scales the result"""
        alpha = 0.3 - 1.7j
        V = np.full(packet.grid.shape, 0.2)

        plain = propagate(packet, V, 0.05, 50)
        scaled = propagate(packet.with_psi(alpha * packet.psi), V, 0.05, 50)

        assert np.allclose(scaled.psi, alpha * plain.psi, rtol=1e-12, atol=1e-14)

    def test_zero_strength_mask_is_identity(self, packet):
        """Test a strength-0 absorber leaves propagation bit-for-bit unchanged"""
        mask = make_absorber(packet.grid, BorderAbsorber(4.0, 0.0))

        masked = propagate(packet, make_zero(), 0.05, 40, mask=mask)
        bare = propagate(packet, make_zero(), 0.05, 40)

        assert np.all(mask.profile == 1.0)
        assert np.array_equal(masked.psi, bare.psi)


class TestAbsorbers:
    def test_border_profile(self, grid):
        """Test border mask is 1 - strength on the edge and 1 inside"""
        mask = make_absorber(grid, BorderAbsorber(width=4.0, strength=0.1))

        assert mask.minimum == pytest.approx(0.9)
        assert mask.profile[64, 64] == 1.0
        assert np.all((mask.profile > 0) & (mask.profile <= 1))

    def test_disk_profile(self, grid):
        """Test disk mask absorbs inside the radius only"""
        mask = make_absorber(grid, DiskAbsorber((0.0, 0.0), 2.0, 2.0, 0.2))

        assert mask.profile[64, 64] == pytest.approx(0.8)
        assert mask.profile[0, 0] == 1.0

    def test_masks_multiply(self, grid):
        """Test combined masks multiply profiles and keep both geometries"""
        border = make_absorber(grid, BorderAbsorber(4.0, 0.1))
        disk = make_absorber(grid, DiskAbsorber((0.0, 0.0), 2.0, 2.0, 0.2))

        combined = border * disk
        assert len(combined.geometry) == 2
        assert combined.minimum == pytest.approx(0.8)

    def test_disk_strength_overrides_border(self, grid):
        """Test a disk with its own strength keeps the border strength separate"""
        section = {
            "border_width": 4.0,
            "strength": 0.1,
            "disk": {"center": [0.0, 0.0], "radius": 2.0, "width": 2.0, "strength": 0.02},
        }

        mask = build_absorber(section, grid)
        assert mask.profile[64, 64] == pytest.approx(0.98)
        assert mask.minimum == pytest.approx(0.9)

        section["disk"]["strength"] = None
        assert build_absorber(section, grid).profile[64, 64] == pytest.approx(0.9)

    def test_invalid_absorbers(self, grid):
        """Test thin, saturated or misplaced absorbers are rejected"""
        with pytest.raises(ConstructionError):
            make_absorber(grid, BorderAbsorber(0.5, 0.1))
        with pytest.raises(ConstructionError):
            make_absorber(grid, BorderAbsorber(4.0, 1.0))
        with pytest.raises(ConstructionError):
            make_absorber(grid, DiskAbsorber((19.0, 0.0), 2.0, 2.0, 0.1))

    def test_absorber_only_removes_norm(self, grid):
        """Test norm decreases monotonically under absorption"""
        wave = gaussian_packet(grid, (10.0, 0.0), 2.0, (2.0, 0.0))
        mask = make_absorber(grid, BorderAbsorber(6.0, 0.2))
        norms = NormObserver()

        propagate(wave, make_zero(), 0.05, 200, mask=mask, observers=[norms])
        history = [n for _, n in norms.history]
        assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))
        assert history[-1] < 0.5

    def test_calibration(self):
        """Test a smooth ramp reflects little and stronger layers transmit less"""
        weak = calibrate_absorber(32, 0.02, dt=0.5)
        strong = calibrate_absorber(32, 0.2, dt=0.5)

        assert weak["reflection"] < 0.1
        assert strong["reflection"] < 0.1
        assert strong["transmission"] < weak["transmission"]

    def test_calibration_invalid(self):
        """Test calibration rejects thin layers"""
        with pytest.raises(ConstructionError):
            calibrate_absorber(2, 0.1, dt=0.5)


class TestEnergyFilter:
    def test_plane_wave_selected_at_its_energy(self, grid):
        """Test the windowed transform keeps an eigenstate only at its energy"""
        wave = plane_wave(grid, (1.0, 0.0))
        E = 0.5 * wave.meta["k"][0] ** 2
        on = EnergyAccumulator(E)
        off = EnergyAccumulator(E + 4.0)

        propagate(wave, make_zero(), 0.05, 200, accumulators=[on, off])
        on_wave = on.result(grid)
        off_wave = off.result(grid)

        overlap = abs(np.vdot(wave.psi, on_wave.psi))
        assert overlap / (np.linalg.norm(wave.psi) * np.linalg.norm(on_wave.psi)) > 0.999999
        assert off_wave.norm() < 1e-4 * on_wave.norm()

    def test_rect_window_weight(self):
        """Test the rectangular window weighs every step equally"""
        acc = EnergyAccumulator(1.0, window="rect")
        acc.start(0.0, 10.0)

        assert acc.weight(3.3) == 1.0

    def test_invalid_window(self):
        """Test unknown windows are rejected"""
        with pytest.raises(ConstructionError):
            EnergyAccumulator(1.0, window="gauss")

    def test_empty_accumulator(self, grid):
        """Test reading an accumulator that saw no steps is an error"""
        with pytest.raises(ConstructionError):
            EnergyAccumulator(1.0).result(grid)

    def test_matched_energy_grows_with_time(self, grid):
        """Test a matched eigenstate accumulates linearly and a mismatched one leaks little"""
        wave = plane_wave(grid, (1.0, 0.0))
        E = 0.5 * wave.meta["k"][0] ** 2
        short = EnergyAccumulator(E)
        long = EnergyAccumulator(E)
        off = EnergyAccumulator(E + 4.0)

        propagate(wave, make_zero(), 0.05, 200, accumulators=[short])
        propagate(wave, make_zero(), 0.05, 400, accumulators=[long, off])

        # norm is quadratic in amplitude
        assert long.result(grid).norm() == pytest.approx(4.0 * short.result(grid).norm(), rel=1e-9)
        assert math.sqrt(long.result(grid).norm() / off.result(grid).norm()) > 100.0


class TestAnalysis:
    def test_momentum_density(self, packet):
        """Test momentum density has unit sum and centred axes"""
        weight, kx, ky = momentum_density(packet)

        assert weight.sum() == pytest.approx(1.0)
        assert kx[0] < 0 < kx[-1]
        iy, ix = np.unravel_index(np.argmax(weight), weight.shape)
        assert kx[ix] == pytest.approx(1.0, abs=2 * math.pi / 40.0)

    def test_boundary_fraction(self, grid, packet):
        """Test a centred packet leaves the outer ring empty"""
        assert boundary_flux_fraction(packet) < 1e-12
        edge = gaussian_packet(grid, (-19.0, 0.0), 2.0)
        assert boundary_flux_fraction(edge) > 1e-3

    def test_coarse_grain_and_correlation(self):
        """Test block sums keep the total and correlation of equal maps is one"""
        rng = np.random.default_rng(0)
        data = rng.random((16, 16))

        coarse = coarse_grain(data, 4)
        assert coarse.shape == (4, 4)
        assert coarse.sum() == pytest.approx(data.sum())
        assert pearson_correlation(coarse, 2.0 * coarse + 1.0) == pytest.approx(1.0)
        with pytest.raises(ConstructionError):
            coarse_grain(data, 5)

    def test_wedge_and_shadow_ratio(self, grid):
        """Test sector masks and shadow ratios"""
        region = wedge_region(grid, (0.0, 0.0), 0.0, math.radians(10.0), r_min=2.0, r_max=10.0)
        X, Y = grid.mesh()

        assert region.any()
        assert np.all(X[region] > 0)
        assert np.all(np.hypot(X[region], Y[region]) <= 10.0)

        reference = np.ones(grid.shape)
        assert shadow_ratio(0.5 * reference, reference, region) == pytest.approx(0.5)
        with pytest.raises(ConstructionError):
            shadow_ratio(reference, np.zeros(grid.shape), region)

    def test_channel_confinement(self):
        """Test a narrow packet on the axis is confined"""
        grid = GridSpec.from_extent(128, 64, (-16.0, 16.0, -8.0, 8.0))
        narrow = gaussian_packet(grid, (0.0, 0.0), 0.5)
        wide = gaussian_packet(grid, (0.0, 0.0), 4.0)

        assert channel_confinement(narrow.psi, grid, 0.0, math.pi / 2) > 0.99
        assert channel_confinement(wide.psi, grid, 0.0, math.pi / 2) < 0.5

    def test_axial_peak_on_reciprocal_lattice(self):
        """Test a wave at k = 2 sits on the reciprocal vector of period pi"""
        grid = GridSpec.from_extent(64, 16, (0.0, 16 * math.pi, -math.pi, math.pi))
        X, _ = grid.mesh()
        psi = np.exp(2j * X)

        peak = axial_peak_offset(psi, grid, math.pi, 0.0, math.pi / 2)
        assert peak["peak_k"] == pytest.approx(2.0)
        assert peak["offset_bins"] == pytest.approx(0.0, abs=1e-9)


class TestSuperwire:
    def test_filter_returns_normalized_state(self):
        """Test the superwire filter reports a unit-norm filtered state"""
        grid = GridSpec.from_extent(64, 32, (-8 * math.pi, 8 * math.pi, -2 * math.pi, 2 * math.pi))
        field = make_mathieu_channel(0.3, 0.1)

        result = superwire_filter(field, grid, 1.0, 1.5, math.sqrt(2.0), 0.05, 60)
        assert result.wave.norm() == pytest.approx(1.0)
        assert 0.0 <= result.confinement_ratio <= 1.0
        assert 0.0 < result.norm_remaining <= 1.0 + 1e-9
        assert result.amplitude.shape == grid.shape
        assert "offset_bins" in result.axial_peak
