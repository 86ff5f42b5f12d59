"""
Floquet stability of the Mathieu equation x'' + (a - 2q cos 2wt) x = 0 and
the classical channel-retention scan over the (a, q) plane.

Channel mapping: near its axis the channel potential is (a - 2q cos 2x) y^2,
so a trajectory moving along x at speed v = sqrt(2T) sees
y'' + (2a - 4q cos 2vt) y = 0, i.e. Mathieu parameters (2a, 2q) at w = v.
Rescaling time shows the trace only depends on (2a/v^2, 2q/v^2), which is
(a, q) at T = 1.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import contourpy
import numpy as np

from core.classical import Ensemble, propagate_ensemble, sample_point_source
from core.errors import ConstructionError, ConvergenceError
from core.potential import MathieuChannel
from utils.logger import get_logger

logger = get_logger("mathieu")

BASE_STEPS = 2048
TRACE_TOLERANCE = 1e-10
DET_TOLERANCE = 1e-9
MAX_STEPS = 2 ** 20

_GAUSS_OFFSET = math.sqrt(3.0) / 6.0
# Taylor coefficients of the step exponential hold to rounding below this |delta|
_SERIES_LIMIT = 0.05

REGION_TRAPPED = "energetically-trapped"
REGION_BETWEEN = "between-bumps"
REGION_OVER = "over-barrier"

Resolution = Union[int, Tuple[int, int]]


@dataclass(frozen=True)
class MonodromyResult:
    matrix: np.ndarray
    trace: float
    stable: bool
    a: float
    q: float
    det: float
    omega: float = 1.0
    steps: int = BASE_STEPS

    @property
    def floquet_exponent(self) -> float:
        """Growth rate per unit time, zero when stable"""
        if self.stable:
            return 0.0
        return math.acosh(abs(self.trace) / 2.0) * self.omega / math.pi


@dataclass(eq=False)
class StabilityGrid:
    """Node arrays have shape (len(q_axis), len(a_axis)); q runs along rows"""

    a_axis: np.ndarray
    q_axis: np.ndarray
    trace: np.ndarray
    stable: np.ndarray
    det: np.ndarray
    omega: float = 1.0
    retention: Optional[np.ndarray] = None
    T: Optional[float] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.trace.shape

    @property
    def extent(self) -> Tuple[float, float, float, float]:
        return (
            float(self.a_axis[0]),
            float(self.a_axis[-1]),
            float(self.q_axis[0]),
            float(self.q_axis[-1]),
        )

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.a_axis, self.q_axis, indexing="xy")

    def regions(self, T: Optional[float] = None) -> np.ndarray:
        T = self.T if T is None else T
        if T is None:
            raise ConstructionError("Energy regions need a kinetic energy T")
        A, Q = self.mesh()
        return np.vectorize(energy_region)(A, Q, T)


def _step_coefficients(delta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """cosh(r) and sinh(r)/r for r = sqrt(delta), continued to delta < 0 as cos and sin"""
    if np.max(np.abs(delta)) < _SERIES_LIMIT:
        c = 1 + delta / 2 * (1 + delta / 12 * (1 + delta / 30 * (1 + delta / 56 * (1 + delta / 90))))
        s = 1 + delta / 6 * (1 + delta / 20 * (1 + delta / 42 * (1 + delta / 72 * (1 + delta / 110))))
        return c, s
    r = np.sqrt(np.abs(delta))
    grow = delta > 0
    c = np.where(grow, np.cosh(r), np.cos(r))
    s = np.where(grow, np.sinh(r), np.sin(r))
    return c, np.divide(s, r, out=np.ones_like(r), where=r > 0)


def _magnus_fundamental(a, q, omega: float, n_steps: int, dtype=np.float64) -> np.ndarray:
    """Fundamental matrices over one period pi/omega, shape (nodes, 2, 2).

    Column j evolves the solution started from the j-th unit vector. Each
    step is the exact exponential of the fourth-order Magnus generator,
    a traceless 2x2 matrix, so every step has unit determinant.
    """
    a = np.asarray(a, dtype=dtype).ravel()
    q = np.asarray(q, dtype=dtype).ravel()
    h = dtype(math.pi) / dtype(omega) / n_steps
    w2 = 2 * dtype(omega)
    lo = (dtype(0.5) - dtype(_GAUSS_OFFSET)) * h
    hi = (dtype(0.5) + dtype(_GAUSS_OFFSET)) * h
    bend = np.sqrt(dtype(3)) * h * h / 12

    m00, m01 = np.ones_like(a), np.zeros_like(a)
    m10, m11 = np.zeros_like(a), np.ones_like(a)
    for i in range(n_steps):
        t = i * h
        k1 = a - 2 * q * np.cos(w2 * (t + lo))
        k2 = a - 2 * q * np.cos(w2 * (t + hi))
        k_mid = (k1 + k2) / 2
        c = bend * (k2 - k1)
        ch, sh = _step_coefficients(c * c - h * h * k_mid)

        e00, e01 = ch + sh * c, sh * h
        e10, e11 = -sh * h * k_mid, ch - sh * c
        m00, m01, m10, m11 = (
            e00 * m00 + e01 * m10,
            e00 * m01 + e01 * m11,
            e10 * m00 + e11 * m10,
            e10 * m01 + e11 * m11,
        )

    return np.stack([np.stack([m00, m01], axis=-1), np.stack([m10, m11], axis=-1)], axis=-2)


def _det(matrices: np.ndarray) -> np.ndarray:
    return matrices[:, 0, 0] * matrices[:, 1, 1] - matrices[:, 0, 1] * matrices[:, 1, 0]


def _converged_fundamental(a, q, omega, base_steps, tol, max_steps, dtype):
    n = len(a)
    matrices = np.empty((n, 2, 2), dtype=dtype)
    steps = np.zeros(n, dtype=np.int64)
    pending = np.arange(n)
    n_steps = int(base_steps)
    current = _magnus_fundamental(a, q, omega, n_steps, dtype)

    while pending.size:
        if 2 * n_steps > max_steps:
            raise ConvergenceError(
                f"Monodromy trace not converged for {pending.size} node(s) at {n_steps} steps per period"
            )
        refined = _magnus_fundamental(a[pending], q[pending], omega, 2 * n_steps, dtype)
        tr_old = np.trace(current, axis1=1, axis2=2)
        tr_new = np.trace(refined, axis1=1, axis2=2)
        done = np.abs(tr_new - tr_old) < tol * np.maximum(1, np.abs(tr_new))
        done &= np.isfinite(tr_new)

        matrices[pending[done]] = refined[done]
        steps[pending[done]] = 2 * n_steps
        pending = pending[~done]
        current = refined[~done]
        n_steps *= 2
        if pending.size:
            logger.debug(f"{pending.size} monodromy node(s) refining to {2 * n_steps} steps")
    return matrices, steps


def monodromy_batch(
    a,
    q,
    omega: float = 1.0,
    base_steps: int = BASE_STEPS,
    tol: float = TRACE_TOLERANCE,
    max_steps: int = MAX_STEPS,
    det_tol: float = DET_TOLERANCE,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Monodromy matrices for many (a, q) nodes at once.

    Step counts double per node until the trace moves by less than ``tol``
    (relative to max(1, |trace|)). Rounding in the step products moves the
    determinant by about eps |M|^2, so nodes with entries large enough to
    threaten ``det_tol`` in float64 are recomputed in extended precision;
    a node still off unity by ``det_tol`` raises ConvergenceError.
    Returns (matrices (N, 2, 2), steps (N,), det (N,)).
    """
    if not omega > 0:
        raise ConstructionError(f"Forcing frequency must be > 0, got {omega}")
    a, q = np.broadcast_arrays(np.asarray(a, dtype=float).ravel(), np.asarray(q, dtype=float).ravel())
    if not (np.isfinite(a).all() and np.isfinite(q).all()):
        raise ConstructionError("Mathieu parameters must be finite")

    matrices, steps = _converged_fundamental(a, q, omega, base_steps, tol, max_steps, np.float64)
    det = _det(matrices)

    limit = math.sqrt(det_tol / (64.0 * np.finfo(np.float64).eps))
    wide = (np.abs(matrices).max(axis=(1, 2)) > limit) | ~(np.abs(det - 1.0) < det_tol)
    if wide.any():
        logger.debug(f"{int(wide.sum())} monodromy node(s) recomputed in extended precision")
        extended, extended_steps = _converged_fundamental(
            a[wide], q[wide], omega, base_steps, tol, max_steps, np.longdouble
        )
        matrices[wide] = extended.astype(np.float64)
        steps[wide] = extended_steps
        det[wide] = _det(extended).astype(np.float64)

    off = ~(np.abs(det - 1.0) < det_tol)
    if off.any():
        raise ConvergenceError(
            f"Monodromy determinant off unity by {np.max(np.abs(det[off] - 1.0)):.3g} "
            f"at {int(off.sum())} node(s)"
        )
    return matrices, steps, det


def monodromy(a: float, q: float, omega: float = 1.0, **kwargs) -> MonodromyResult:
    matrices, steps, det = monodromy_batch([a], [q], omega, **kwargs)
    matrix = matrices[0]
    trace = float(np.trace(matrix))
    return MonodromyResult(
        matrix=matrix,
        trace=trace,
        stable=abs(trace) <= 2.0,
        a=float(a),
        q=float(q),
        det=float(det[0]),
        omega=float(omega),
        steps=int(steps[0]),
    )


def _axis(bounds: Sequence[float], count: int, name: str) -> np.ndarray:
    lo, hi = float(bounds[0]), float(bounds[1])
    if not hi > lo:
        raise ConstructionError(f"{name} range must satisfy min < max, got [{lo}, {hi}]")
    if count < 2:
        raise ConstructionError(f"{name} resolution must be >= 2, got {count}")
    return np.linspace(lo, hi, count)


def _axes(a_range, q_range, resolution: Resolution) -> Tuple[np.ndarray, np.ndarray]:
    na, nq = (resolution, resolution) if np.isscalar(resolution) else resolution
    return _axis(a_range, int(na), "a"), _axis(q_range, int(nq), "q")


def stability_diagram(
    a_range: Sequence[float],
    q_range: Sequence[float],
    resolution: Resolution,
    omega: float = 1.0,
    **kwargs,
) -> StabilityGrid:
    """Monodromy trace at every node; marginal |trace| = 2 counts as stable"""
    a_axis, q_axis = _axes(a_range, q_range, resolution)
    A, Q = np.meshgrid(a_axis, q_axis, indexing="xy")
    matrices, _, det = monodromy_batch(A.ravel(), Q.ravel(), omega, **kwargs)
    trace = np.trace(matrices, axis1=1, axis2=2).reshape(A.shape)
    det = det.reshape(A.shape)
    return StabilityGrid(
        a_axis=a_axis,
        q_axis=q_axis,
        trace=trace,
        stable=np.abs(trace) <= 2.0,
        det=det,
        omega=float(omega),
    )


def stability_contours(grid: StabilityGrid) -> Dict[str, List[np.ndarray]]:
    """|trace| = 2 polylines in (a, q) coordinates, keyed by level"""
    generator = contourpy.contour_generator(
        x=grid.a_axis, y=grid.q_axis, z=grid.trace, line_type="Separate"
    )
    return {
        "trace=+2": [np.asarray(line) for line in generator.lines(2.0)],
        "trace=-2": [np.asarray(line) for line in generator.lines(-2.0)],
    }


def energetic_lines(a_axis, T: float) -> Dict[str, np.ndarray]:
    """The two lines q = (a - T)/2 and q = (T - a)/2 as (N, 2) arrays of (a, q)"""
    a_axis = np.asarray(a_axis, dtype=float)
    return {
        "q=(a-T)/2": np.column_stack([a_axis, (a_axis - T) / 2.0]),
        "q=(T-a)/2": np.column_stack([a_axis, (T - a_axis) / 2.0]),
    }


def energy_region(a: float, q: float, T: float) -> str:
    """Classify (a, q) by the two energetic lines at kinetic energy T.

    Trapped on the closed wedge (T - a)/2 <= q <= (a - T)/2; over-barrier when
    T exceeds the bump tops a + 2|q|; between-bumps otherwise.
    """
    if not T > 0:
        raise ConstructionError(f"Kinetic energy must be > 0, got {T}")
    if (T - a) / 2.0 <= q <= (a - T) / 2.0:
        return REGION_TRAPPED
    if T > a + 2.0 * abs(q):
        return REGION_OVER
    return REGION_BETWEEN


def channel_mathieu_parameters(a: float, q: float, T: float) -> Tuple[float, float, float]:
    """Mathieu (a', q', omega) seen by a trajectory running along the channel axis"""
    if not T > 0:
        raise ConstructionError(f"Kinetic energy must be > 0, got {T}")
    return 2.0 * a, 2.0 * q, math.sqrt(2.0 * T)


def integrate_mathieu(
    a: float,
    q: float,
    t_final: float,
    x0: Tuple[float, float] = (1.0, 0.0),
    omega: float = 1.0,
    steps_per_period: int = BASE_STEPS,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Direct RK4 solution (t, x, x') sampled at every step"""
    if not omega > 0:
        raise ConstructionError(f"Forcing frequency must be > 0, got {omega}")
    h = math.pi / omega / steps_per_period
    n = max(1, int(math.ceil(t_final / h)))
    t = h * np.arange(n + 1)
    xs = np.empty(n + 1)
    vs = np.empty(n + 1)
    x, v = float(x0[0]), float(x0[1])
    xs[0], vs[0] = x, v

    def accel(time, pos):
        return -(a - 2.0 * q * math.cos(2.0 * omega * time)) * pos

    for i in range(n):
        ti = t[i]
        dx1, dv1 = v, accel(ti, x)
        dx2, dv2 = v + 0.5 * h * dv1, accel(ti + 0.5 * h, x + 0.5 * h * dx1)
        dx3, dv3 = v + 0.5 * h * dv2, accel(ti + 0.5 * h, x + 0.5 * h * dx2)
        dx4, dv4 = v + h * dv3, accel(ti + h, x + h * dx3)
        x += (h / 6.0) * (dx1 + 2.0 * dx2 + 2.0 * dx3 + dx4)
        v += (h / 6.0) * (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4)
        xs[i + 1], vs[i + 1] = x, v
    return t, xs, vs


def channel_timestep(a_max: float, q_max: float, safety: float = 0.05, max_dt: float = 0.1) -> float:
    """Step bound from the largest curvature of the channel potential, 2|a| + 12|q|"""
    curvature = 2.0 * abs(a_max) + 12.0 * abs(q_max)
    if curvature <= 0:
        return max_dt
    return min(max_dt, safety / math.sqrt(curvature))


def _retention_chunk(
    a_nodes: np.ndarray,
    q_nodes: np.ndarray,
    T: float,
    wedge: float,
    n_traj: int,
    t_final: float,
    dt: float,
    half_width: float,
    integrator: str,
) -> np.ndarray:
    speed = math.sqrt(2.0 * T)
    source = sample_point_source((0.0, 0.0), speed, 0.0, wedge, n_traj)
    nodes = len(a_nodes)
    rows = Ensemble(points=np.tile(source.points, (nodes, 1)))
    field = MathieuChannel(np.repeat(a_nodes, n_traj), np.repeat(q_nodes, n_traj))
    steps = max(1, int(math.ceil(t_final / dt)))

    out = propagate_ensemble(
        rows, field, dt, steps, integrator=integrator, observe_every=steps + 1
    )
    excursion = np.maximum(out.hi[:, 1], -out.lo[:, 1]).reshape(nodes, n_traj)
    dead = out.dead.reshape(nodes, n_traj)
    n_dead = int(dead.sum())
    if n_dead:
        logger.warning(f"{n_dead} retention trajectories died; counted as escaped")
    return np.mean((excursion <= half_width) & ~dead, axis=1)


def retention_diagram(
    a_range: Sequence[float],
    q_range: Sequence[float],
    resolution: Resolution,
    T: float = 1.0,
    wedge: float = math.pi / 3.0,
    n_traj: int = 100,
    t_final: Optional[float] = None,
    dt: Optional[float] = None,
    half_width: float = math.pi / 2.0,
    integrator: str = "yoshida4",
    workers: int = 1,
    nodes_per_chunk: int = 16,
) -> StabilityGrid:
    """Fraction of a wedge source, launched along the channel at y = 0, retained per node.

    The trace and stability columns are those of the channel-mapped Mathieu
    equation at the same T. Trajectories that die count as escaped; nodes of
    a chunk whose propagation raises hold NaN.
    """
    if not T > 0:
        raise ConstructionError(f"Kinetic energy must be > 0, got {T}")
    if not wedge > 0:
        raise ConstructionError(f"Wedge must be > 0, got {wedge}")
    if n_traj < 1:
        raise ConstructionError("Retention scan needs n_traj >= 1")

    a_axis, q_axis = _axes(a_range, q_range, resolution)
    speed = math.sqrt(2.0 * T)
    if t_final is None:
        t_final = 200.0 * math.pi / speed
    if dt is None:
        dt = channel_timestep(np.max(np.abs(a_axis)), np.max(np.abs(q_axis)))

    A, Q = np.meshgrid(a_axis, q_axis, indexing="xy")
    a_flat, q_flat = A.ravel(), Q.ravel()
    chunks = [
        np.arange(i, min(i + nodes_per_chunk, len(a_flat)))
        for i in range(0, len(a_flat), nodes_per_chunk)
    ]

    def run(idx):
        try:
            return _retention_chunk(
                a_flat[idx], q_flat[idx], T, wedge, n_traj, t_final, dt, half_width, integrator
            )
        except Exception as e:
            logger.warning(f"Retention chunk at nodes {idx[0]}-{idx[-1]} failed: {e}")
            return np.full(len(idx), np.nan)

    logger.debug(
        f"Retention scan: {len(a_flat)} nodes x {n_traj} trajectories, dt={dt:.4g}, t_final={t_final:.4g}"
    )
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(idx) for idx in chunks]
    retention = np.concatenate(results).reshape(A.shape)

    a_m, q_m, omega = channel_mathieu_parameters(a_flat, q_flat, T)
    matrices, _, det = monodromy_batch(a_m, q_m, omega)
    trace = np.trace(matrices, axis1=1, axis2=2).reshape(A.shape)
    return StabilityGrid(
        a_axis=a_axis,
        q_axis=q_axis,
        trace=trace,
        stable=np.abs(trace) <= 2.0,
        det=det.reshape(A.shape),
        omega=omega,
        retention=retention,
        T=float(T),
    )
