"""
Classical trajectory ensembles under a PotentialField.

Phase points are rows (x, y, px, py) with m = 1. Integrators work on any
array whose last axis has length 4, so one call advances a whole ensemble.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConstructionError
from core.grid import GridSpec
from core.potential import PotentialField
from utils.logger import get_logger

logger = get_logger("classical")

# Fourth-order symmetric composition of three Verlet sub-steps
YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
YOSHIDA_W0 = 1.0 - 2.0 * YOSHIDA_W1

# Default observation interval in time units
OBSERVE_INTERVAL = 0.1


def _check_dt(dt: float) -> float:
    dt = float(dt)
    if dt == 0.0 or not math.isfinite(dt):
        raise ConstructionError(f"Time step must be finite and non-zero, got {dt}")
    return dt


def verlet_step(state, field: PotentialField, dt: float) -> np.ndarray:
    """One kick-drift-kick velocity-Verlet step"""
    dt = _check_dt(dt)
    s = np.asarray(state, dtype=np.float64)
    x, y, px, py = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    half = 0.5 * dt

    gx, gy = field.grad(x, y)
    px = px - half * gx
    py = py - half * gy
    x = x + dt * px
    y = y + dt * py
    gx, gy = field.grad(x, y)
    px = px - half * gx
    py = py - half * gy
    return np.stack([x, y, px, py], axis=-1)


def yoshida4_step(state, field: PotentialField, dt: float) -> np.ndarray:
    dt = _check_dt(dt)
    s = verlet_step(state, field, YOSHIDA_W1 * dt)
    s = verlet_step(s, field, YOSHIDA_W0 * dt)
    return verlet_step(s, field, YOSHIDA_W1 * dt)


INTEGRATORS: Dict[str, Callable] = {
    "verlet": verlet_step,
    "yoshida4": yoshida4_step,
}


def energy(state, field: PotentialField) -> np.ndarray:
    s = np.asarray(state, dtype=np.float64)
    kinetic = 0.5 * (s[..., 2] ** 2 + s[..., 3] ** 2)
    return kinetic + field.eval(s[..., 0], s[..., 1])


@dataclass(eq=False)
class Ensemble:
    """Trajectory states plus the bookkeeping propagation needs.

    ``lo``/``hi`` are running position watermarks (per trajectory, over the
    whole propagation); ``dead`` marks trajectories frozen after a non-finite
    step, ``exited`` those frozen on leaving the domain.
    """

    points: np.ndarray
    t: float = 0.0
    E0: Optional[np.ndarray] = None
    alive: Optional[np.ndarray] = None
    dead: Optional[np.ndarray] = None
    exited: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.array(self.points, dtype=np.float64).reshape(-1, 4)
        n = len(self.points)
        if self.alive is None:
            self.alive = np.ones(n, dtype=bool)
        if self.dead is None:
            self.dead = np.zeros(n, dtype=bool)
        if self.exited is None:
            self.exited = np.zeros(n, dtype=bool)
        if self.lo is None:
            self.lo = self.points[:, :2].copy()
        if self.hi is None:
            self.hi = self.points[:, :2].copy()
        if self.E0 is not None and len(self.E0) != n:
            raise ConstructionError("E0 must hold one energy per trajectory")

    def __len__(self) -> int:
        return len(self.points)

    def bind(self, field: PotentialField) -> "Ensemble":
        """Record initial energies in ``field`` if not done yet"""
        if self.E0 is None:
            self.E0 = energy(self.points, field)
        return self

    def copy(self) -> "Ensemble":
        return Ensemble(
            points=self.points.copy(),
            t=self.t,
            E0=None if self.E0 is None else self.E0.copy(),
            alive=self.alive.copy(),
            dead=self.dead.copy(),
            exited=self.exited.copy(),
            lo=self.lo.copy(),
            hi=self.hi.copy(),
        )

    def subset(self, index) -> "Ensemble":
        return Ensemble(
            points=self.points[index],
            t=self.t,
            E0=None if self.E0 is None else self.E0[index],
            alive=self.alive[index],
            dead=self.dead[index],
            exited=self.exited[index],
            lo=self.lo[index],
            hi=self.hi[index],
        )

    @classmethod
    def concatenate(cls, parts: Sequence["Ensemble"]) -> "Ensemble":
        has_e0 = all(p.E0 is not None for p in parts)
        return cls(
            points=np.concatenate([p.points for p in parts]),
            t=parts[0].t,
            E0=np.concatenate([p.E0 for p in parts]) if has_e0 else None,
            alive=np.concatenate([p.alive for p in parts]),
            dead=np.concatenate([p.dead for p in parts]),
            exited=np.concatenate([p.exited for p in parts]),
            lo=np.concatenate([p.lo for p in parts]),
            hi=np.concatenate([p.hi for p in parts]),
        )


def _ensemble(points: np.ndarray, field: Optional[PotentialField]) -> Ensemble:
    e = Ensemble(points=points)
    if field is not None:
        e.bind(field)
    return e


def sample_point_source(
    origin: Tuple[float, float],
    speed: float,
    angle_center: float,
    wedge: float,
    n: int,
    field: Optional[PotentialField] = None,
) -> Ensemble:
    """n trajectories from one point, directions evenly spaced across the wedge.

    The wedge endpoints are included; a full 2*pi wedge spaces n directions
    around the circle without repeating the seam.
    """
    if n < 1:
        raise ConstructionError("Point source needs n >= 1")
    if not (0.0 < wedge <= 2.0 * math.pi + 1e-12):
        raise ConstructionError(f"Wedge must lie in (0, 2*pi], got {wedge}")

    if n == 1:
        angles = np.array([angle_center], dtype=float)
    elif wedge >= 2.0 * math.pi:
        angles = angle_center - math.pi + 2.0 * math.pi * np.arange(n) / n
    else:
        angles = np.linspace(angle_center - 0.5 * wedge, angle_center + 0.5 * wedge, n)

    points = np.empty((n, 4))
    points[:, 0] = origin[0]
    points[:, 1] = origin[1]
    points[:, 2] = speed * np.cos(angles)
    points[:, 3] = speed * np.sin(angles)
    return _ensemble(points, field)


def sample_plane_manifold(
    y_range: Tuple[float, float],
    x0: float,
    speed: float,
    n: int,
    field: Optional[PotentialField] = None,
) -> Ensemble:
    """Vertical line of trajectories, all moving along +x (a classical plane wave)"""
    if n < 1:
        raise ConstructionError("Plane manifold needs n >= 1")
    points = np.zeros((n, 4))
    points[:, 0] = x0
    points[:, 1] = np.linspace(y_range[0], y_range[1], n)
    points[:, 2] = speed
    return _ensemble(points, field)


def sample_gaussian_source(
    center: Tuple[float, float],
    sigma0: float,
    k0: Tuple[float, float],
    n: int,
    seed: int = 0,
    hbar: float = 1.0,
    field: Optional[PotentialField] = None,
) -> Ensemble:
    """Phase-space sample of the Wigner function of a Gaussian wave packet.

    |psi|^2 has per-axis width sigma0, so positions ~ N(center, sigma0^2) and
    momenta ~ N(hbar*k0, (hbar / (2*sigma0))^2).
    """
    if n < 1:
        raise ConstructionError("Gaussian source needs n >= 1")
    if not sigma0 > 0:
        raise ConstructionError("Gaussian source needs sigma0 > 0")
    rng = np.random.Generator(np.random.Philox(seed))
    points = np.empty((n, 4))
    points[:, 0:2] = np.asarray(center, dtype=float) + sigma0 * rng.standard_normal((n, 2))
    points[:, 2:4] = hbar * np.asarray(k0, dtype=float) + (
        hbar / (2.0 * sigma0)
    ) * rng.standard_normal((n, 2))
    return _ensemble(points, field)


@dataclass(eq=False)
class DensityGrid:
    """Integer visit counts; ``dropped`` counts samples that fell outside"""

    counts: np.ndarray
    grid: GridSpec
    dropped: int = 0

    @classmethod
    def empty(cls, grid: GridSpec) -> "DensityGrid":
        return cls(np.zeros(grid.shape, dtype=np.int64), grid, 0)

    @property
    def normalization(self) -> int:
        return int(self.counts.sum())

    @property
    def recorded(self) -> int:
        return self.normalization + self.dropped

    def merge(self, other: "DensityGrid") -> None:
        self.counts += other.counts
        self.dropped += other.dropped

    def as_float(self) -> np.ndarray:
        return self.counts.astype(np.float64)


def accumulate_density(
    samples, grid: GridSpec, into: Optional[DensityGrid] = None
) -> DensityGrid:
    """Bin sample positions with weight 1.

    ``samples`` is an (M, 2) position array or a sequence of them (a trace).
    """
    density = into if into is not None else DensityGrid.empty(grid)
    if isinstance(samples, np.ndarray):
        batches = [samples]
    else:
        batches = list(samples)
    for batch in batches:
        pos = np.asarray(batch, dtype=float).reshape(-1, 2)
        if pos.size == 0:
            continue
        ix, iy, inside = grid.cell_index(pos[:, 0], pos[:, 1])
        flat = iy[inside] * grid.nx + ix[inside]
        density.counts += np.bincount(flat, minlength=grid.nx * grid.ny).reshape(grid.shape)
        density.dropped += int(np.count_nonzero(~inside))
    return density


class EnsembleObserver:
    """Called every ``observe_every`` steps; partitions are spawned and merged"""

    def __call__(self, ensemble: Ensemble, step: int) -> None:
        raise NotImplementedError

    def spawn(self) -> "EnsembleObserver":
        raise NotImplementedError

    def merge(self, other: "EnsembleObserver") -> None:
        raise NotImplementedError


class DensityObserver(EnsembleObserver):
    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.density = DensityGrid.empty(grid)

    def __call__(self, ensemble, step):
        accumulate_density(ensemble.points[ensemble.alive, :2], self.grid, into=self.density)

    def spawn(self):
        return DensityObserver(self.grid)

    def merge(self, other):
        self.density.merge(other.density)


class TraceObserver(EnsembleObserver):
    """Keeps the positions of alive trajectories at every observation"""

    def __init__(self):
        self.steps: List[int] = []
        self.positions: List[np.ndarray] = []

    def __call__(self, ensemble, step):
        self.steps.append(step)
        self.positions.append(ensemble.points[ensemble.alive, :2].copy())

    def spawn(self):
        return TraceObserver()

    def merge(self, other):
        if not self.steps:
            self.steps = list(other.steps)
            self.positions = [p.copy() for p in other.positions]
            return
        self.positions = [
            np.concatenate([mine, theirs])
            for mine, theirs in zip(self.positions, other.positions)
        ]


class EnergyObserver(EnsembleObserver):
    """Maximum relative energy error over alive trajectories, per observation"""

    def __init__(self, field: PotentialField):
        self.field = field
        self.history: List[float] = []

    def __call__(self, ensemble, step):
        alive = ensemble.alive
        if not np.any(alive):
            self.history.append(0.0)
            return
        e0 = ensemble.E0[alive]
        e = energy(ensemble.points[alive], self.field)
        scale = np.maximum(np.abs(e0), np.finfo(float).tiny)
        self.history.append(float(np.max(np.abs(e - e0) / scale)))

    def spawn(self):
        return EnergyObserver(self.field)

    def merge(self, other):
        if not self.history:
            self.history = list(other.history)
            return
        self.history = [max(a, b) for a, b in zip(self.history, other.history)]

    @property
    def max_drift(self) -> float:
        return max(self.history) if self.history else 0.0

    @property
    def growth_ratio(self) -> float:
        """Second-half maximum drift over first-half maximum drift"""
        if len(self.history) < 2:
            return 1.0
        half = len(self.history) // 2
        first = max(self.history[:half])
        second = max(self.history[half:])
        if first == 0.0:
            return 1.0 if second == 0.0 else float("inf")
        return second / first


def default_observe_every(dt: float) -> int:
    return max(1, math.ceil(OBSERVE_INTERVAL / dt))


def _propagate_serial(e, field, dt, steps, observers, step_fn, every, domain):
    pts = e.points
    for n in range(steps):
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            new = step_fn(pts, field, dt)
        finite = np.isfinite(new).all(axis=1)
        move = e.alive & finite
        newly_dead = e.alive & ~finite
        if np.any(newly_dead):
            logger.debug(f"{int(newly_dead.sum())} trajectories went non-finite at t={e.t + dt:.6g}")
        pts = np.where(move[:, None], new, pts)
        e.dead |= newly_dead
        e.alive = move

        if domain is not None:
            x0, x1, y0, y1 = domain
            outside = move & ~(
                (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
            )
            e.exited |= outside
            e.alive = e.alive & ~outside

        e.lo = np.minimum(e.lo, pts[:, :2])
        e.hi = np.maximum(e.hi, pts[:, :2])
        e.points = pts
        e.t += dt
        if (n + 1) % every == 0:
            for observer in observers:
                observer(e, n + 1)
    return e


def propagate_ensemble(
    e: Ensemble,
    field: PotentialField,
    dt: float,
    steps: int,
    observers: Sequence[EnsembleObserver] = (),
    integrator: str = "yoshida4",
    observe_every: Optional[int] = None,
    domain: Optional[Tuple[float, float, float, float]] = None,
    workers: int = 1,
) -> Ensemble:
    """Advance every alive trajectory by ``steps`` integrator steps.

    Trajectories leaving ``domain`` are frozen where they exited; non-finite
    steps freeze the trajectory at its last finite state and mark it dead.
    With ``workers`` > 1 contiguous partitions run concurrently; each
    observer is spawned per partition and merged back in partition order.
    """
    if not dt > 0:
        raise ConstructionError(f"Propagation needs dt > 0, got {dt}")
    if steps < 1:
        raise ConstructionError(f"Propagation needs steps >= 1, got {steps}")
    if integrator not in INTEGRATORS:
        raise ConstructionError(
            f"Unknown integrator '{integrator}', expected one of {sorted(INTEGRATORS)}"
        )
    step_fn = INTEGRATORS[integrator]
    every = observe_every or default_observe_every(dt)

    result = e.copy().bind(field)
    workers = max(1, min(int(workers), len(result)))
    if workers == 1:
        return _propagate_serial(result, field, dt, steps, observers, step_fn, every, domain)

    chunks = np.array_split(np.arange(len(result)), workers)
    parts = [result.subset(idx) for idx in chunks]
    spawned = [[obs.spawn() for obs in observers] for _ in parts]

    def run(i):
        return _propagate_serial(parts[i], field, dt, steps, spawned[i], step_fn, every, domain)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        finished = list(pool.map(run, range(len(parts))))

    for children in spawned:
        for observer, child in zip(observers, children):
            observer.merge(child)
    return Ensemble.concatenate(finished)


def channel_retention(
    e: Ensemble,
    y0: float = 0.0,
    half_width: float = math.pi / 2.0,
    axis: str = "horizontal",
) -> float:
    """Fraction of trajectories that never strayed more than half_width from the axis"""
    if len(e) == 0:
        raise ConstructionError("Retention of an empty ensemble is undefined")
    if not half_width > 0:
        raise ConstructionError(f"Channel half-width must be > 0, got {half_width}")
    column = 1 if axis == "horizontal" else 0
    excursion = np.maximum(e.hi[:, column] - y0, y0 - e.lo[:, column])
    retained = (excursion <= half_width) & ~e.dead
    return float(np.mean(retained))


def relative_energy_drift(e: Ensemble, field: PotentialField) -> float:
    alive = e.alive
    if e.E0 is None or not np.any(alive):
        return 0.0
    e0 = e.E0[alive]
    scale = np.maximum(np.abs(e0), np.finfo(float).tiny)
    return float(np.max(np.abs(energy(e.points[alive], field) - e0) / scale))


def suggest_timestep(
    field: PotentialField, safety: float = 0.05, max_dt: float = 0.1, samples: int = 64
) -> float:
    """dt with dt * omega_max = safety, omega_max^2 the largest curvature of V"""
    x0, x1, y0, y1 = field.representative_window()
    X, Y = np.meshgrid(np.linspace(x0, x1, samples), np.linspace(y0, y1, samples))
    h = 1e-5 * max(x1 - x0, y1 - y0)
    gxp, gyp = field.grad(X + h, Y)
    gxm, gym = field.grad(X - h, Y)
    hxx = (gxp - gxm) / (2 * h)
    hxy = (gyp - gym) / (2 * h)
    _, gyp = field.grad(X, Y + h)
    _, gym = field.grad(X, Y - h)
    hyy = (gyp - gym) / (2 * h)
    # largest |eigenvalue| of the symmetric 2x2 Hessian
    mean = 0.5 * (hxx + hyy)
    radius = np.sqrt((0.5 * (hxx - hyy)) ** 2 + hxy ** 2)
    curvature = float(np.max(np.abs(mean) + radius))
    if curvature <= 0.0:
        return max_dt
    return min(max_dt, safety / math.sqrt(curvature))


def paired_log_divergence(
    field: PotentialField,
    points,
    dt: float,
    steps: int,
    delta0: float = 1e-8,
    integrator: str = "yoshida4",
) -> np.ndarray:
    """ln(|twin separation| / delta0) after ``steps``, twins offset by delta0 in x"""
    base = np.asarray(points, dtype=float).reshape(-1, 4)
    twins = base.copy()
    twins[:, 0] += delta0
    both = Ensemble(points=np.concatenate([base, twins]))
    out = propagate_ensemble(
        both, field, dt, steps, integrator=integrator, observe_every=steps + 1
    )
    n = len(base)
    separation = np.linalg.norm(out.points[n:] - out.points[:n], axis=1)
    result = np.log(np.maximum(separation, np.finfo(float).tiny) / delta0)
    result[out.dead[:n] | out.dead[n:]] = np.nan
    return result


def cross_contrast(
    density: DensityGrid, center: Tuple[float, float], half_width: float
) -> float:
    """Mean density on the four arms through ``center`` over the mean elsewhere.

    The central crossing square counts as neither arm nor background.
    """
    grid = density.grid
    xc = grid.x_axis() + 0.5 * grid.dx
    yc = grid.y_axis() + 0.5 * grid.dy
    X, Y = np.meshgrid(xc, yc)
    horizontal = np.abs(Y - center[1]) <= half_width
    vertical = np.abs(X - center[0]) <= half_width
    arms = horizontal ^ vertical
    background = ~(horizontal | vertical)
    counts = density.as_float()
    if not np.any(arms) or not np.any(background):
        raise ConstructionError("Density grid too small to separate arms from background")
    arm_mean = counts[arms].mean()
    background_mean = counts[background].mean()
    if background_mean == 0.0:
        return float("inf") if arm_mean > 0 else 0.0
    return float(arm_mean / background_mean)


def fold_count(u_in, u_out) -> int:
    """Sign changes of d(u_out)/d(u_in) along an ordered manifold"""
    u_in = np.asarray(u_in, dtype=float)
    u_out = np.asarray(u_out, dtype=float)
    slope = np.diff(u_out) / np.diff(u_in)
    signs = np.sign(slope[np.isfinite(slope)])
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))
