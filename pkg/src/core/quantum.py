"""
Split-operator propagation of wave fields on periodic grids.

Units default to hbar = m = 1. The grid is periodic in both directions;
absorbers are multiplicative masks applied after every step.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as spfft
from scipy import stats

from core.errors import ConstructionError, PropagationError
from core.grid import GridSpec
from core.potential import PotentialField, sample_on_grid
from utils.logger import get_logger

logger = get_logger("quantum")

MIN_NODES = 8
MIN_ABSORBER_CELLS = 4
SCHEMES = ("strang", "lie")
WINDOWS = ("hann", "rect")


def _check_grid(grid: GridSpec) -> None:
    if grid.nx < MIN_NODES or grid.ny < MIN_NODES:
        raise ConstructionError(
            f"Wave grids need at least {MIN_NODES} nodes per axis, got {grid.nx}x{grid.ny}"
        )


@dataclass(eq=False)
class WaveField:
    psi: np.ndarray
    grid: GridSpec
    t: float = 0.0
    hbar: float = 1.0
    m: float = 1.0
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _check_grid(self.grid)
        self.psi = np.asarray(self.psi, dtype=np.complex128)
        if self.psi.shape != self.grid.shape:
            raise ConstructionError(
                f"Wave array shape {self.psi.shape} does not match grid {self.grid.shape}"
            )

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm(self) -> float:
        """Integral of |psi|^2 over the grid"""
        return float(np.sum(self.density()) * self.grid.cell_area)

    def copy(self) -> "WaveField":
        return WaveField(self.psi.copy(), self.grid, self.t, self.hbar, self.m, dict(self.meta))

    def with_psi(self, psi: np.ndarray, t: Optional[float] = None) -> "WaveField":
        return WaveField(psi, self.grid, self.t if t is None else t, self.hbar, self.m, dict(self.meta))

    def normalized(self) -> "WaveField":
        norm = self.norm()
        if norm == 0.0:
            raise ConstructionError("Cannot normalize a zero wave field")
        return self.with_psi(self.psi / math.sqrt(norm))


def _normalize(psi: np.ndarray, grid: GridSpec) -> np.ndarray:
    norm = np.sum(np.abs(psi) ** 2) * grid.cell_area
    return psi / math.sqrt(norm)


def gaussian_packet(
    grid: GridSpec,
    center: Tuple[float, float],
    sigma0: float,
    k0: Tuple[float, float] = (0.0, 0.0),
    hbar: float = 1.0,
    m: float = 1.0,
) -> WaveField:
    """psi ~ exp(-|r - c|^2 / (4 sigma0^2)) exp(i k0.r), unit norm on the grid"""
    _check_grid(grid)
    if not sigma0 > max(grid.dx, grid.dy):
        raise ConstructionError(
            f"Packet width sigma0={sigma0} is not resolved by grid spacing {max(grid.dx, grid.dy):.4g}"
        )
    X, Y = grid.mesh()
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2
    psi = np.exp(-r2 / (4.0 * sigma0 ** 2) + 1j * (k0[0] * X + k0[1] * Y))
    return WaveField(
        _normalize(psi, grid),
        grid,
        hbar=hbar,
        m=m,
        meta={"initial": "gaussian", "sigma0": sigma0, "k0": list(k0), "center": list(center)},
    )


def grid_wavevector(grid: GridSpec, k: Tuple[float, float]) -> Tuple[float, float]:
    """Nearest wavevector that is periodic on the grid box"""
    lx, ly = grid.lengths
    return (
        2.0 * math.pi * round(k[0] * lx / (2.0 * math.pi)) / lx,
        2.0 * math.pi * round(k[1] * ly / (2.0 * math.pi)) / ly,
    )


def plane_wave(
    grid: GridSpec, k: Tuple[float, float], hbar: float = 1.0, m: float = 1.0, snap: bool = True
) -> WaveField:
    _check_grid(grid)
    if snap:
        k = grid_wavevector(grid, k)
    X, Y = grid.mesh()
    psi = np.exp(1j * (k[0] * X + k[1] * Y))
    return WaveField(
        _normalize(psi, grid), grid, hbar=hbar, m=m, meta={"initial": "plane", "k": list(k)}
    )


class SplitOperator:
    """Precomputed exponentials for one (grid, V, dt).

    ``strang``: half potential, kinetic, half potential (second order).
    ``lie``: full potential then kinetic (first order).
    """

    def __init__(
        self,
        grid: GridSpec,
        V: np.ndarray,
        dt: float,
        hbar: float = 1.0,
        m: float = 1.0,
        scheme: str = "strang",
        workers: Optional[int] = None,
    ):
        _check_grid(grid)
        if not dt > 0:
            raise ConstructionError(f"Time step must be > 0, got {dt}")
        if scheme not in SCHEMES:
            raise ConstructionError(f"Unknown split scheme '{scheme}', expected one of {SCHEMES}")
        V = np.asarray(V, dtype=np.float64)
        if V.shape != grid.shape:
            raise ConstructionError(f"Potential shape {V.shape} does not match grid {grid.shape}")

        self.grid = grid
        self.dt = float(dt)
        self.hbar = hbar
        self.m = m
        self.scheme = scheme
        self.workers = workers

        KX, KY = grid.wavenumbers()
        self.kinetic = np.exp(-1j * hbar * (KX ** 2 + KY ** 2) * dt / (2.0 * m))
        if scheme == "strang":
            self.potential = np.exp(-0.5j * V * dt / hbar)
        else:
            self.potential = np.exp(-1j * V * dt / hbar)

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        psi = psi * self.potential
        psi = spfft.ifft2(self.kinetic * spfft.fft2(psi, workers=self.workers), workers=self.workers)
        if self.scheme == "strang":
            psi = psi * self.potential
        return psi


def _potential_array(field_or_V: Union[PotentialField, np.ndarray], grid: GridSpec) -> np.ndarray:
    if isinstance(field_or_V, PotentialField):
        return sample_on_grid(field_or_V, grid)
    return np.asarray(field_or_V, dtype=np.float64)


def split_step(psi: WaveField, Vgrid: np.ndarray, dt: float, scheme: str = "strang") -> WaveField:
    stepper = SplitOperator(psi.grid, Vgrid, dt, psi.hbar, psi.m, scheme)
    return psi.with_psi(stepper(psi.psi), t=psi.t + dt)


@dataclass(frozen=True)
class BorderAbsorber:
    width: float
    strength: float

    kind = "border"


@dataclass(frozen=True)
class DiskAbsorber:
    center: Tuple[float, float]
    radius: float
    width: float
    strength: float

    kind = "disk"


@dataclass(eq=False)
class AbsorberMask:
    """Per-step multiplicative profile in (0, 1]"""

    profile: np.ndarray
    geometry: List[Any] = field(default_factory=list)

    @property
    def minimum(self) -> float:
        return float(self.profile.min())

    def __mul__(self, other: "AbsorberMask") -> "AbsorberMask":
        return AbsorberMask(self.profile * other.profile, self.geometry + other.geometry)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return psi * self.profile


def _ramp(depth: np.ndarray, width: float, strength: float) -> np.ndarray:
    """1 - s cos^2(pi d / 2w) for 0 <= d < w; depth 0 is the fully absorbing side"""
    profile = np.ones_like(depth)
    zone = depth < width
    profile[zone] = 1.0 - strength * np.cos(0.5 * math.pi * np.maximum(depth[zone], 0.0) / width) ** 2
    return profile


def make_absorber(grid: GridSpec, geometry: Union[BorderAbsorber, DiskAbsorber]) -> AbsorberMask:
    if not 0.0 <= geometry.strength < 1.0:
        raise ConstructionError(f"Absorber strength must lie in [0, 1), got {geometry.strength}")
    cell = max(grid.dx, grid.dy)
    if geometry.width < MIN_ABSORBER_CELLS * cell:
        raise ConstructionError(
            f"Absorber width {geometry.width} is under {MIN_ABSORBER_CELLS} grid cells ({cell:.4g} each)"
        )
    X, Y = grid.mesh()

    if isinstance(geometry, BorderAbsorber):
        if 2.0 * geometry.width >= min(grid.lengths):
            raise ConstructionError("Border absorber leaves no interior")
        depth = np.minimum.reduce([X - grid.x0, grid.x1 - X, Y - grid.y0, grid.y1 - Y])
        profile = _ramp(depth, geometry.width, geometry.strength)
    elif isinstance(geometry, DiskAbsorber):
        if not geometry.radius >= 0:
            raise ConstructionError(f"Disk radius must be >= 0, got {geometry.radius}")
        reach = geometry.radius + geometry.width
        cx, cy = geometry.center
        if cx - reach < grid.x0 or cx + reach > grid.x1 or cy - reach < grid.y0 or cy + reach > grid.y1:
            raise ConstructionError("Disk absorber does not fit inside the grid")
        rho = np.hypot(X - cx, Y - cy)
        profile = _ramp(rho - geometry.radius, geometry.width, geometry.strength)
    else:
        raise ConstructionError(f"Unknown absorber geometry {geometry!r}")
    return AbsorberMask(profile, [geometry])


def unit_mask(grid: GridSpec) -> AbsorberMask:
    return AbsorberMask(np.ones(grid.shape), [])


class EnergyAccumulator:
    """Running time-to-energy transform psi_E = sum e^{+iEt/hbar} psi(t) w(t) dt.

    The positive exponent accumulates a state evolving as e^{-iEt/hbar}
    constructively. ``hann`` weights by sin^2(pi (t - t_start) / t_total).
    """

    def __init__(self, E: float, window: str = "hann", t_total: Optional[float] = None, hbar: float = 1.0):
        if window not in WINDOWS:
            raise ConstructionError(f"Unknown window '{window}', expected one of {WINDOWS}")
        self.E = float(E)
        self.window = window
        self.t_total = t_total
        self.t_start: Optional[float] = None
        self.hbar = hbar
        self.psi_E: Optional[np.ndarray] = None
        self.t_weight = 0.0

    def start(self, t_start: float, t_total: float) -> None:
        self.t_start = t_start
        if self.t_total is None:
            self.t_total = t_total

    def weight(self, t: float) -> float:
        if self.window == "rect":
            return 1.0
        t0 = self.t_start or 0.0
        return math.sin(math.pi * (t - t0) / self.t_total) ** 2

    def add(self, psi: np.ndarray, t: float, dt: float) -> None:
        w = self.weight(t) * dt
        term = (np.exp(1j * self.E * t / self.hbar) * w) * psi
        if self.psi_E is None:
            self.psi_E = term
        else:
            self.psi_E += term
        self.t_weight += w

    def result(self, grid: GridSpec) -> WaveField:
        if self.psi_E is None:
            raise ConstructionError("Energy accumulator is empty")
        return WaveField(self.psi_E.copy(), grid, meta={"E": self.E, "window": self.window})


class DensityAccumulator:
    """Time-integrated |psi|^2"""

    def __init__(self):
        self.density: Optional[np.ndarray] = None
        self.samples = 0

    def __call__(self, wave: WaveField, step: int) -> None:
        d = wave.density()
        self.density = d if self.density is None else self.density + d
        self.samples += 1


class NormObserver:
    def __init__(self):
        self.history: List[Tuple[float, float]] = []

    def __call__(self, wave: WaveField, step: int) -> None:
        self.history.append((wave.t, wave.norm()))


class BoundaryMonitor:
    """Largest share of the density seen in the outermost grid ring"""

    def __init__(self, cells: int = 1):
        self.cells = cells
        self.max_fraction = 0.0

    def __call__(self, wave: WaveField, step: int) -> None:
        self.max_fraction = max(self.max_fraction, boundary_flux_fraction(wave, self.cells))


WaveObserver = Callable[[WaveField, int], None]


def propagate(
    psi0: WaveField,
    field: Union[PotentialField, np.ndarray],
    dt: float,
    steps: int,
    mask: Optional[AbsorberMask] = None,
    accumulators: Sequence[EnergyAccumulator] = (),
    observers: Sequence[WaveObserver] = (),
    observe_every: int = 1,
    scheme: str = "strang",
    workers: Optional[int] = None,
) -> WaveField:
    """Iterate split steps, masking after each and feeding accumulators every step.

    A non-finite amplitude raises PropagationError carrying the last finite state.
    """
    if steps < 1:
        raise ConstructionError(f"Propagation needs steps >= 1, got {steps}")
    grid = psi0.grid
    V = _potential_array(field, grid)
    stepper = SplitOperator(grid, V, dt, psi0.hbar, psi0.m, scheme, workers)
    for acc in accumulators:
        acc.start(psi0.t, steps * dt)

    psi = psi0.psi.copy()
    t = psi0.t
    wave = psi0.with_psi(psi, t)
    for n in range(steps):
        new = stepper(psi)
        if mask is not None:
            new = mask.apply(new)
        t_new = psi0.t + (n + 1) * dt
        if not np.isfinite(new).all():
            raise PropagationError(
                f"Non-finite amplitude at step {n + 1} (t={t_new:.6g})",
                snapshot=psi,
                time=t,
                details={"step": n + 1},
            )
        psi, t = new, t_new
        for acc in accumulators:
            acc.add(psi, t, dt)
        if observers and (n + 1) % observe_every == 0:
            wave = psi0.with_psi(psi, t)
            for observer in observers:
                observer(wave, n + 1)
    return psi0.with_psi(psi, t)


def energy_expectation(psi: WaveField, field: Union[PotentialField, np.ndarray]) -> float:
    """<p^2/2m + V> per unit norm"""
    grid = psi.grid
    V = _potential_array(field, grid)
    psi_k = spfft.fft2(psi.psi)
    KX, KY = grid.wavenumbers()
    weight_k = np.abs(psi_k) ** 2
    kinetic = psi.hbar ** 2 * np.sum(weight_k * (KX ** 2 + KY ** 2)) / (2.0 * psi.m * np.sum(weight_k))
    density = psi.density()
    potential = np.sum(density * V) / np.sum(density)
    return float(kinetic + potential)


def position_moments(psi: WaveField) -> Dict[str, float]:
    """Mean position and per-axis variance of |psi|^2"""
    X, Y = psi.grid.mesh()
    d = psi.density()
    total = d.sum()
    mx = float(np.sum(d * X) / total)
    my = float(np.sum(d * Y) / total)
    return {
        "mean_x": mx,
        "mean_y": my,
        "var_x": float(np.sum(d * (X - mx) ** 2) / total),
        "var_y": float(np.sum(d * (Y - my) ** 2) / total),
    }


def mean_momentum(psi: WaveField) -> Tuple[float, float]:
    weight = np.abs(spfft.fft2(psi.psi)) ** 2
    KX, KY = psi.grid.wavenumbers()
    total = weight.sum()
    return (
        float(psi.hbar * np.sum(weight * KX) / total),
        float(psi.hbar * np.sum(weight * KY) / total),
    )


def momentum_density(psi: WaveField) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centred |psi(k)|^2 with unit sum, plus the centred kx and ky axes"""
    weight = np.abs(spfft.fftshift(spfft.fft2(psi.psi))) ** 2
    kx = spfft.fftshift(2.0 * np.pi * spfft.fftfreq(psi.grid.nx, d=psi.grid.dx))
    ky = spfft.fftshift(2.0 * np.pi * spfft.fftfreq(psi.grid.ny, d=psi.grid.dy))
    return weight / weight.sum(), kx, ky


def boundary_flux_fraction(psi: WaveField, cells: int = 1) -> float:
    d = psi.density()
    total = d.sum()
    if total == 0.0:
        return 0.0
    inner = d[cells:-cells, cells:-cells].sum()
    return float((total - inner) / total)


def coarse_grain(array: np.ndarray, factor: int) -> np.ndarray:
    """Block sums over factor x factor cells"""
    ny, nx = array.shape
    if ny % factor or nx % factor:
        raise ConstructionError(f"Coarsening factor {factor} does not divide {ny}x{nx}")
    return array.reshape(ny // factor, factor, nx // factor, factor).sum(axis=(1, 3))


def pearson_correlation(a: np.ndarray, b: np.ndarray) -> float:
    result = stats.pearsonr(np.ravel(a), np.ravel(b))
    return float(result[0])


def wedge_region(
    grid: GridSpec,
    apex: Tuple[float, float],
    direction: float,
    half_angle: float,
    r_min: float = 0.0,
    r_max: float = math.inf,
) -> np.ndarray:
    """Boolean mask of grid nodes inside an angular sector"""
    X, Y = grid.mesh()
    dx, dy = X - apex[0], Y - apex[1]
    r = np.hypot(dx, dy)
    angle = np.angle(np.exp(1j * (np.arctan2(dy, dx) - direction)))
    return (np.abs(angle) <= half_angle) & (r >= r_min) & (r <= r_max)


def shadow_ratio(density: np.ndarray, reference: np.ndarray, region: np.ndarray) -> float:
    """Integrated density in ``region`` relative to an unobstructed reference run"""
    ref = float(np.sum(reference[region]))
    if ref == 0.0:
        raise ConstructionError("Reference run has no density in the shadow region")
    return float(np.sum(density[region])) / ref


def channel_confinement(psi: np.ndarray, grid: GridSpec, y0: float, half_width: float) -> float:
    """Share of |psi|^2 within |y - y0| <= half_width"""
    density = np.abs(psi) ** 2
    band = np.abs(grid.y_axis() - y0) <= half_width
    total = density.sum()
    if total == 0.0:
        return 0.0
    return float(density[band, :].sum() / total)


def axial_peak_offset(
    psi: np.ndarray, grid: GridSpec, period: float, y0: float, half_width: float
) -> Dict[str, float]:
    """Distance in spectral bins from the strongest axial component to the nearest
    reciprocal-lattice wavevector 2*pi*n/period"""
    band = np.abs(grid.y_axis() - y0) <= half_width
    spectrum = np.sum(np.abs(spfft.fft(psi[band, :], axis=1)) ** 2, axis=0)
    k = 2.0 * np.pi * spfft.fftfreq(grid.nx, d=grid.dx)
    peak = int(np.argmax(spectrum))
    bin_width = 2.0 * np.pi / grid.lengths[0]
    reciprocal = 2.0 * np.pi / period
    nearest = reciprocal * round(k[peak] / reciprocal)
    return {
        "peak_k": float(k[peak]),
        "nearest_reciprocal_k": float(nearest),
        "offset_bins": float(abs(k[peak] - nearest) / bin_width),
    }


@dataclass(eq=False)
class SuperwireResult:
    wave: WaveField
    confinement_ratio: float
    axial_peak: Dict[str, float]
    norm_remaining: float

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.wave.psi)


def superwire_filter(
    field: Union[PotentialField, np.ndarray],
    grid: GridSpec,
    E: float,
    sigma0: float,
    k0: float,
    dt: float,
    steps: int,
    mask: Optional[AbsorberMask] = None,
    launch_x: Optional[float] = None,
    y0: float = 0.0,
    half_width: float = math.pi / 2.0,
    period: float = math.pi,
    window: str = "hann",
    hbar: float = 1.0,
    m: float = 1.0,
    workers: Optional[int] = None,
) -> SuperwireResult:
    """Inject a packet along +x on the channel axis and energy-filter the flow at E.

    The returned wave is psi_E with unit norm.
    """
    if launch_x is None:
        launch_x = grid.x0 + 0.25 * grid.lengths[0]
    packet = gaussian_packet(grid, (launch_x, y0), sigma0, (k0, 0.0), hbar, m)
    acc = EnergyAccumulator(E, window=window, hbar=hbar)
    final = propagate(packet, field, dt, steps, mask=mask, accumulators=[acc], workers=workers)
    filtered = acc.result(grid).normalized()
    filtered.hbar, filtered.m = hbar, m
    ratio = channel_confinement(filtered.psi, grid, y0, half_width)
    peak = axial_peak_offset(filtered.psi, grid, period, y0, half_width)
    filtered.meta.update({"confinement_ratio": ratio, "axial_peak": peak})
    return SuperwireResult(filtered, ratio, peak, final.norm())


def calibrate_absorber(
    width_cells: int,
    strength: float,
    dt: float,
    dx: float = 1.0,
    k: Optional[float] = None,
    n: int = 2048,
    hbar: float = 1.0,
    m: float = 1.0,
) -> Dict[str, float]:
    """Reflected and transmitted amplitudes of a 1D border absorber.

    A broad packet at wavenumber k (default the grid's median |k|, pi/2dx)
    runs once through the right layer and the periodic image of the left one.
    Afterwards the interior's left-moving norm is reflection and its
    right-moving norm is what leaked through.
    """
    if width_cells < MIN_ABSORBER_CELLS:
        raise ConstructionError(f"Absorber width must be >= {MIN_ABSORBER_CELLS} cells")
    if not 0.0 <= strength < 1.0:
        raise ConstructionError(f"Absorber strength must lie in [0, 1), got {strength}")
    if 4 * width_cells >= n:
        raise ConstructionError("Calibration box too small for the absorber width")
    if k is None:
        k = 0.5 * math.pi / dx

    length = n * dx
    width = width_cells * dx
    x = dx * np.arange(n)
    depth = np.minimum(x, length - x)
    profile = _ramp(depth, width, strength)
    interior = depth >= width

    sigma0 = 0.03 * length
    psi = np.exp(-((x - 0.5 * length) ** 2) / (4.0 * sigma0 ** 2) + 1j * k * x)
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * dx)
    norm0 = np.sum(np.abs(psi) ** 2)

    kgrid = 2.0 * np.pi * spfft.fftfreq(n, d=dx)
    kinetic = np.exp(-1j * hbar * kgrid ** 2 * dt / (2.0 * m))
    speed = hbar * k / m
    steps = int(math.ceil((0.5 * length + width + 6.0 * sigma0) / (speed * dt)))
    for _ in range(steps):
        psi = spfft.ifft(kinetic * spfft.fft(psi)) * profile

    spectrum = np.abs(spfft.fft(np.where(interior, psi, 0.0))) ** 2 / n
    reflected = float(np.sum(spectrum[kgrid < 0]) / norm0)
    transmitted = float(np.sum(spectrum[kgrid > 0]) / norm0)
    return {
        "reflection": math.sqrt(reflected),
        "transmission": math.sqrt(transmitted),
        "k": k,
        "steps": steps,
    }
