"""
Kick-and-drift maps on the (x, p) plane, the standard map in particular.

Positions are stored unwrapped; wrap with ``wrap_phase`` only for display.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from core.errors import ConstructionError
from utils.logger import get_logger

logger = get_logger("stdmap")

Kick = Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class MapManifold:
    """Ordered point set; ``labels`` groups points into stripes/circles"""

    x: np.ndarray
    p: np.ndarray
    labels: np.ndarray = None
    n: int = 0

    def __post_init__(self):
        self.x = np.array(self.x, dtype=np.float64).ravel()
        self.p = np.array(self.p, dtype=np.float64).ravel()
        if self.x.shape != self.p.shape:
            raise ConstructionError("Manifold x and p must have equal length")
        if self.labels is None:
            self.labels = np.zeros(self.x.shape, dtype=np.int64)
        else:
            self.labels = np.array(self.labels, dtype=np.int64).ravel()
            if self.labels.shape != self.x.shape:
                raise ConstructionError("Manifold labels must match the point count")

    def __len__(self) -> int:
        return len(self.x)

    def copy(self) -> "MapManifold":
        return MapManifold(self.x.copy(), self.p.copy(), self.labels.copy(), self.n)

    def points(self) -> np.ndarray:
        """(N, 3) array of x, p, label"""
        return np.column_stack([self.x, self.p, self.labels.astype(np.float64)])

    @classmethod
    def concatenate(cls, parts: Sequence["MapManifold"]) -> "MapManifold":
        return cls(
            np.concatenate([m.x for m in parts]),
            np.concatenate([m.p for m in parts]),
            np.concatenate([m.labels for m in parts]),
            parts[0].n if parts else 0,
        )


def sine_kick(K: float) -> Kick:
    return lambda x: K * np.sin(x)


def kick_from_potential(dV_dx: Kick) -> Kick:
    """Kick for p' = p - dV/dx"""
    return lambda x: -dV_dx(x)


def kick(x, p, kick_fn: Kick):
    x = np.asarray(x, dtype=np.float64)
    return x, np.asarray(p, dtype=np.float64) + kick_fn(x)


def drift(x, p):
    p = np.asarray(p, dtype=np.float64)
    return np.asarray(x, dtype=np.float64) + p, p


def kickdrift_step(x, p, kick_fn: Kick):
    """Momentum kick by the force, then free drift with the new momentum"""
    x, p = kick(x, p, kick_fn)
    return drift(x, p)


def std_step(x, p, K: float):
    x = np.asarray(x, dtype=np.float64)
    p_next = np.asarray(p, dtype=np.float64) + K * np.sin(x)
    return x + p_next, p_next


def std_step_inverse(x, p, K: float):
    x_prev = np.asarray(x, dtype=np.float64) - np.asarray(p, dtype=np.float64)
    return x_prev, np.asarray(p, dtype=np.float64) - K * np.sin(x_prev)


def wrap_phase(x) -> np.ndarray:
    """Positions folded into [0, 2*pi)"""
    return np.mod(x, 2.0 * math.pi)


def evolve_manifold(
    m: MapManifold,
    K: float,
    n_steps: int,
    snapshot_at: Optional[Sequence[int]] = None,
) -> List[MapManifold]:
    """Iterate the standard map, returning copies at the requested iteration counts"""
    if n_steps < 0:
        raise ConstructionError(f"n_steps must be >= 0, got {n_steps}")
    marks = [n_steps] if snapshot_at is None else [int(s) for s in snapshot_at]
    if any(b < a for a, b in zip(marks, marks[1:])):
        raise ConstructionError(f"snapshot_at must be sorted, got {marks}")
    if marks and (marks[0] < 0 or marks[-1] > n_steps):
        raise ConstructionError(f"snapshot_at must lie in [0, {n_steps}], got {marks}")

    snapshots: List[MapManifold] = []
    x, p = m.x.copy(), m.p.copy()
    pending = list(marks)
    for n in range(n_steps + 1):
        while pending and pending[0] == n:
            snapshots.append(MapManifold(x.copy(), p.copy(), m.labels.copy(), m.n + n))
            pending.pop(0)
        if n < n_steps:
            x, p = std_step(x, p, K)
    return snapshots


def stripe_manifold(p: float, n: int, x_range=(0.0, 2.0 * math.pi), label: int = 0) -> MapManifold:
    """Horizontal stripe of constant momentum"""
    x = np.linspace(x_range[0], x_range[1], n)
    return MapManifold(x, np.full(n, float(p)), np.full(n, label))


def circle_manifold(center, radius: float, n: int, label: int = 0) -> MapManifold:
    theta = 2.0 * math.pi * np.arange(n) / n
    return MapManifold(
        center[0] + radius * np.cos(theta),
        center[1] + radius * np.sin(theta),
        np.full(n, label),
    )


def fold_scene(points_per_curve: int = 400, p_span: float = math.pi) -> MapManifold:
    """Six horizontal stripes plus twelve small circles on a 4x3 layout.

    Labels 0-5 are stripes (bottom to top), 6-17 the circles.
    """
    parts = []
    stripe_p = np.linspace(-p_span, p_span, 8)[1:-1]
    for i, p in enumerate(stripe_p):
        parts.append(stripe_manifold(p, points_per_curve, label=i))
    radius = 0.25
    cx = (np.arange(4) + 0.5) * (2.0 * math.pi / 4)
    cy = np.linspace(-0.6 * p_span, 0.6 * p_span, 3)
    label = len(stripe_p)
    for y in cy:
        for x in cx:
            parts.append(circle_manifold((x, y), radius, points_per_curve, label=label))
            label += 1
    return MapManifold.concatenate(parts)


def momentum_diffusion(K: float, n_traj: int, n_steps: int, seed: int = 0) -> np.ndarray:
    """<(p_n - p_0)^2> for n = 1..n_steps, x_0 uniform on [0, 2*pi), p_0 = 0"""
    if n_traj < 1 or n_steps < 1:
        raise ConstructionError("momentum_diffusion needs n_traj >= 1 and n_steps >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.uniform(0.0, 2.0 * math.pi, n_traj)
    p = np.zeros(n_traj)
    out = np.empty(n_steps)
    for n in range(n_steps):
        x, p = std_step(x, p, K)
        out[n] = np.mean(p * p)
    return out


def diffusion_slope(msd: np.ndarray, skip: int = 0) -> float:
    """Least-squares slope of the squared-momentum sequence against n"""
    msd = np.asarray(msd, dtype=float)[skip:]
    n = np.arange(skip + 1, skip + 1 + len(msd), dtype=float)
    slope, _ = np.polyfit(n, msd, 1)
    return float(slope)


def signed_area(x, p) -> float:
    """Shoelace area of a closed polygon"""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    return 0.5 * float(np.sum(x * np.roll(p, -1) - np.roll(x, -1) * p))


@dataclass
class MapRun:
    """Snapshots of one manifold-map experiment"""

    K: float
    snapshots: List[MapManifold] = field(default_factory=list)
    half_steps: List[MapManifold] = field(default_factory=list)

    @property
    def finite(self) -> bool:
        return all(np.isfinite(s.x).all() and np.isfinite(s.p).all() for s in self.snapshots)


def run_manifold_map(
    m: MapManifold, K: float, n_steps: int, snapshot_at: Optional[Sequence[int]] = None
) -> MapRun:
    """Snapshots plus the first kick and first drift as separate panels"""
    run = MapRun(K=K, snapshots=evolve_manifold(m, K, n_steps, snapshot_at))
    x, p = kick(m.x, m.p, sine_kick(K))
    run.half_steps.append(MapManifold(x, p, m.labels.copy(), m.n))
    x, p = drift(x, p)
    run.half_steps.append(MapManifold(x, p, m.labels.copy(), m.n + 1))
    logger.debug(f"Manifold map: {len(m)} points, K={K}, {len(run.snapshots)} snapshots")
    return run
