"""
Potential landscapes: soft Fermi-bump lattices, the separable cosine lattice,
the channel potential and trivial fields.

Every field exposes vectorised ``eval(x, y)`` and analytic ``grad(x, y)``;
both are pure functions of position.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit

from core.errors import ConstructionError
from core.grid import GridSpec

# Relative amplitude below which a bump tail is dropped
CUTOFF_EPS = 1e-12

# Points per neighbour query batch (bounds the (points x neighbours) work arrays)
QUERY_CHUNK = 65536

LATTICE_KINDS = ("square", "triangular", "random")


@dataclass(frozen=True, eq=False)
class BumpSet:
    """Soft Fermi bumps sharing amplitude, softness and radial offset"""

    centers: np.ndarray
    amplitude: float
    sigma: float
    r_off: float = 0.0

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 2)
        if centers.shape[0] == 0:
            raise ConstructionError("Bump set needs at least one center")
        if not np.isfinite(centers).all():
            raise ConstructionError("Bump centers must be finite")
        if not self.sigma > 0:
            raise ConstructionError(f"Bump softness sigma must be > 0, got {self.sigma}")
        if self.r_off < 0:
            raise ConstructionError(f"Radial offset must be >= 0, got {self.r_off}")
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    @property
    def cutoff(self) -> float:
        """Radius beyond which a single bump contributes less than CUTOFF_EPS*|A|"""
        return self.r_off + self.sigma * math.log(1.0 / CUTOFF_EPS)


@dataclass(frozen=True)
class LatticeSpec:
    """Placement of bump centers inside a bounding box"""

    kind: str
    lattice_constant: float
    extent: Tuple[float, float, float, float]
    origin: Tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    count: int = 0
    min_spacing: Optional[float] = None

    def __post_init__(self):
        if self.kind not in LATTICE_KINDS:
            raise ConstructionError(
                f"Unknown lattice kind '{self.kind}', expected one of {LATTICE_KINDS}"
            )
        x0, x1, y0, y1 = self.extent
        if x1 <= x0 or y1 <= y0:
            raise ConstructionError(f"Degenerate lattice extent {self.extent}")
        if self.kind == "random":
            if self.count < 1:
                raise ConstructionError("Random lattice needs count >= 1")
            if self.min_spacing is not None and self.min_spacing < 0:
                raise ConstructionError("Random lattice min_spacing must be >= 0")
        elif not self.lattice_constant > 0:
            raise ConstructionError(
                f"Lattice constant must be > 0, got {self.lattice_constant}"
            )

    @property
    def periodic(self) -> bool:
        return self.kind != "random"

    @property
    def periodic_cell(self) -> Optional[Tuple[float, float]]:
        """Rectangular cell that tiles the lattice (two sites for triangular)"""
        a = self.lattice_constant
        if self.kind == "square":
            return (a, a)
        if self.kind == "triangular":
            return (a, a * math.sqrt(3.0))
        return None

    def centers(self, halo: float = 0.0, min_spacing: float = 0.0) -> np.ndarray:
        """Bump centers covering the extent widened by ``halo`` on every side"""
        if self.kind == "random":
            spacing = self.min_spacing if self.min_spacing is not None else min_spacing
            return _random_centers(self.extent, self.count, spacing, self.seed)

        a = self.lattice_constant
        x0, x1, y0, y1 = self.extent
        ox, oy = self.origin
        row_step = a if self.kind == "square" else a * math.sqrt(3.0) / 2.0

        j_lo = math.ceil((y0 - halo - oy) / row_step)
        j_hi = math.floor((y1 + halo - oy) / row_step)
        rows = []
        for j in range(j_lo, j_hi + 1):
            shift = 0.5 * a if (self.kind == "triangular" and j % 2) else 0.0
            i_lo = math.ceil((x0 - halo - ox - shift) / a)
            i_hi = math.floor((x1 + halo - ox - shift) / a)
            if i_hi < i_lo:
                continue
            xs = ox + shift + a * np.arange(i_lo, i_hi + 1)
            rows.append(np.column_stack([xs, np.full(xs.shape, oy + j * row_step)]))
        if not rows:
            raise ConstructionError(f"Lattice extent {self.extent} holds no bumps")
        return np.vstack(rows)


def _random_centers(extent, count: int, min_spacing: float, seed: int) -> np.ndarray:
    """Uniform rejection sampling with a counter-based generator"""
    rng = np.random.Generator(np.random.Philox(seed))
    x0, x1, y0, y1 = extent
    accepted = np.empty((count, 2))
    n = 0
    budget = 1000 * count
    spacing2 = min_spacing * min_spacing

    while n < count and budget > 0:
        batch = rng.random((256, 2))
        batch[:, 0] = x0 + (x1 - x0) * batch[:, 0]
        batch[:, 1] = y0 + (y1 - y0) * batch[:, 1]
        for candidate in batch:
            budget -= 1
            if n and spacing2 > 0:
                d2 = np.sum((accepted[:n] - candidate) ** 2, axis=1)
                if d2.min() < spacing2:
                    continue
            accepted[n] = candidate
            n += 1
            if n == count:
                break

    if n < count:
        raise ConstructionError(
            f"Could only place {n} of {count} bumps with min_spacing {min_spacing}"
        )
    return accepted


class PotentialField:
    """Base class for scalar potentials V(x, y)"""

    kind = "abstract"

    def __init__(self, periodic_cell: Optional[Tuple[float, float]] = None):
        self.periodic_cell = periodic_cell
        self._barrier_height: Optional[float] = None

    def eval(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def barrier_height(self) -> float:
        """max V - min V, computed once"""
        if self._barrier_height is None:
            self._barrier_height = float(self._compute_barrier_height())
        return self._barrier_height

    def _compute_barrier_height(self) -> float:
        raise NotImplementedError

    def representative_window(self) -> Tuple[float, float, float, float]:
        """A region whose samples show every feature of the field (one cell if periodic)"""
        if self.periodic_cell is not None:
            return (0.0, self.periodic_cell[0], 0.0, self.periodic_cell[1])
        return (-1.0, 1.0, -1.0, 1.0)

    def parameters(self) -> Dict[str, Any]:
        return {}

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "parameters": self.parameters(),
            "periodic_cell": list(self.periodic_cell) if self.periodic_cell else None,
            "barrier_height": self.barrier_height,
        }


class ConstantField(PotentialField):
    kind = "constant"

    def __init__(self, value: float = 0.0):
        super().__init__(periodic_cell=None)
        self.value = float(value)

    def eval(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.full(x.shape, self.value)

    def grad(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.zeros(x.shape), np.zeros(x.shape)

    def _compute_barrier_height(self):
        return 0.0

    def parameters(self):
        return {"value": self.value}


class ZeroField(ConstantField):
    kind = "zero"

    def __init__(self):
        super().__init__(0.0)

    def parameters(self):
        return {}


class CosineField(PotentialField):
    """Separable lattice V = -A (cos x + cos y)"""

    kind = "cosine"

    def __init__(self, amplitude: float):
        super().__init__(periodic_cell=(2.0 * math.pi, 2.0 * math.pi))
        self.amplitude = float(amplitude)

    def eval(self, x, y):
        return -self.amplitude * (np.cos(x) + np.cos(y))

    def grad(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self.amplitude * np.sin(x), self.amplitude * np.sin(y)

    def _compute_barrier_height(self):
        return 4.0 * abs(self.amplitude)

    def parameters(self):
        return {"amplitude": self.amplitude}


class MathieuChannel(PotentialField):
    """Channel lattice V = -(2q cos 2x - a) sin^2 y, zero on every line y = n*pi.

    ``a`` and ``q`` may be arrays broadcasting against the evaluation points,
    which lets one propagation carry many (a, q) nodes side by side.
    """

    kind = "mathieu"

    def __init__(self, a, q):
        super().__init__(periodic_cell=(math.pi, math.pi))
        self.a = np.asarray(a, dtype=float) if np.ndim(a) else float(a)
        self.q = np.asarray(q, dtype=float) if np.ndim(q) else float(q)

    def eval(self, x, y):
        return -(2.0 * self.q * np.cos(2.0 * x) - self.a) * np.sin(y) ** 2

    def grad(self, x, y):
        s = np.sin(y)
        gx = 4.0 * self.q * np.sin(2.0 * x) * s * s
        gy = -(2.0 * self.q * np.cos(2.0 * x) - self.a) * np.sin(2.0 * y)
        return gx, gy

    def _compute_barrier_height(self):
        top = np.maximum(0.0, self.a + 2.0 * np.abs(self.q))
        bottom = np.minimum(0.0, self.a - 2.0 * np.abs(self.q))
        return float(np.max(top - bottom))

    def parameters(self):
        if np.ndim(self.a) or np.ndim(self.q):
            return {"a": "batched", "q": "batched"}
        return {"a": self.a, "q": self.q}


class FermiLattice(PotentialField):
    """Sum of soft bumps A / (1 + exp((|r - r0| - r_off) / sigma)).

    Bumps are truncated at ``BumpSet.cutoff``; neighbours are found with a
    k-d tree so one evaluation costs O(neighbours) per point.
    """

    kind = "fermi"

    def __init__(
        self,
        bumps: BumpSet,
        periodic_cell: Optional[Tuple[float, float]] = None,
        lattice: Optional[LatticeSpec] = None,
    ):
        super().__init__(periodic_cell=periodic_cell)
        self.bumps = bumps
        self.lattice = lattice
        self.cutoff = bumps.cutoff
        self._tree = cKDTree(bumps.centers)
        self._padded = np.vstack([bumps.centers, np.zeros((1, 2))])

    def eval(self, x, y):
        return self._apply(x, y, want_grad=False)

    def grad(self, x, y):
        return self._apply(x, y, want_grad=True)

    def _apply(self, x, y, want_grad: bool):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        shape = x.shape
        pts = np.column_stack([x.ravel(), y.ravel()])
        finite = np.isfinite(pts).all(axis=1)
        pts[~finite] = 0.0

        n = pts.shape[0]
        value = np.zeros(n)
        gx = np.zeros(n)
        gy = np.zeros(n)
        for start in range(0, n, QUERY_CHUNK):
            sl = slice(start, min(start + QUERY_CHUNK, n))
            self._accumulate(pts[sl], value[sl], gx[sl], gy[sl], want_grad)

        if want_grad:
            gx[~finite] = np.nan
            gy[~finite] = np.nan
            return gx.reshape(shape), gy.reshape(shape)
        value[~finite] = np.nan
        return value.reshape(shape)

    def _accumulate(self, pts, value, gx, gy, want_grad):
        counts = self._tree.query_ball_point(pts, r=self.cutoff, return_length=True)
        k = int(np.max(counts)) if len(counts) else 0
        if k == 0:
            return
        dist, idx = self._tree.query(pts, k=k, distance_upper_bound=self.cutoff)
        dist = dist.reshape(len(pts), k)
        idx = idx.reshape(len(pts), k)

        b = self.bumps
        u = (dist - b.r_off) / b.sigma
        if not want_grad:
            value += np.sum(b.amplitude * expit(-u), axis=1)
            return

        # dV/drho = -A e^u / (sigma (1 + e^u)^2); the direction is (r - r0)/rho
        dv_drho = -b.amplitude * expit(u) * expit(-u) / b.sigma
        weight = np.zeros_like(dist)
        np.divide(dv_drho, dist, out=weight, where=(dist > 0) & np.isfinite(dist))
        delta = pts[:, None, :] - self._padded[idx]
        gx += np.sum(weight * delta[..., 0], axis=1)
        gy += np.sum(weight * delta[..., 1], axis=1)

    def representative_window(self):
        if self.periodic_cell is not None and self.lattice is not None:
            x0, x1, y0, y1 = self.lattice.extent
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            lx, ly = self.periodic_cell
            return (cx, cx + lx, cy, cy + ly)
        lo = self.bumps.centers.min(axis=0)
        hi = self.bumps.centers.max(axis=0)
        pad = self.bumps.sigma
        return (lo[0] - pad, hi[0] + pad, lo[1] - pad, hi[1] + pad)

    def _compute_barrier_height(self):
        x0, x1, y0, y1 = self.representative_window()
        n = 97 if self.periodic_cell is not None else 257
        X, Y = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n))
        samples = np.concatenate(
            [
                self.eval(X, Y).ravel(),
                self.eval(self.bumps.centers[:, 0], self.bumps.centers[:, 1]),
            ]
        )
        return samples.max() - samples.min()

    def parameters(self):
        b = self.bumps
        params = {
            "amplitude": b.amplitude,
            "sigma": b.sigma,
            "r_off": b.r_off,
            "bumps": b.count,
        }
        if self.lattice is not None:
            params["lattice"] = self.lattice.kind
            params["lattice_constant"] = self.lattice.lattice_constant
        return params


def make_fermi_lattice(
    spec: LatticeSpec, amplitude: float, sigma: float, r_off: float = 0.0
) -> FermiLattice:
    """Fermi-bump lattice; periodic kinds are tiled into a halo around the box"""
    if not sigma > 0:
        raise ConstructionError(f"Bump softness sigma must be > 0, got {sigma}")
    halo = 0.0
    if spec.periodic:
        # one full cell beyond the cutoff radius so edge points see bulk surroundings
        cutoff = r_off + sigma * math.log(1.0 / CUTOFF_EPS)
        a = spec.lattice_constant
        halo = a * (math.ceil(cutoff / a) + 1)
    centers = spec.centers(halo=halo, min_spacing=2.0 * sigma)
    bumps = BumpSet(centers=centers, amplitude=float(amplitude), sigma=float(sigma), r_off=float(r_off))
    return FermiLattice(bumps, periodic_cell=spec.periodic_cell, lattice=spec)


def make_cosine_integrable(amplitude: float) -> CosineField:
    if amplitude == 0:
        raise ConstructionError("Cosine lattice amplitude must be non-zero")
    return CosineField(amplitude)


def make_mathieu_channel(a: float, q: float) -> MathieuChannel:
    return MathieuChannel(a, q)


def make_zero() -> ZeroField:
    return ZeroField()


def make_constant(value: float) -> ConstantField:
    return ConstantField(value)


def sample_on_grid(field: PotentialField, grid: GridSpec) -> np.ndarray:
    """Potential at every grid node, shape (ny, nx)"""
    X, Y = grid.mesh()
    return np.ascontiguousarray(field.eval(X, Y), dtype=np.float64)
