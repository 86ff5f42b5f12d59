"""
Uniform 2D grids shared by potential sampling, density histograms and
spectral propagation
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core.errors import ConstructionError


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid, endpoint excluded: node i sits at x0 + i*dx, dx = (x1-x0)/nx.

    Arrays sampled on the grid are row-major with shape (ny, nx); row j holds
    y = y0 + j*dy.
    """

    nx: int
    ny: int
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if int(self.nx) < 2 or int(self.ny) < 2:
            raise ConstructionError(
                f"Grid needs at least 2x2 nodes, got {self.nx}x{self.ny}"
            )
        if not (np.isfinite([self.x0, self.x1, self.y0, self.y1]).all()):
            raise ConstructionError("Grid extents must be finite")
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ConstructionError(
                f"Degenerate grid extents [{self.x0}, {self.x1}] x [{self.y0}, {self.y1}]"
            )

    @classmethod
    def from_extent(cls, nx: int, ny: int, extent) -> "GridSpec":
        x0, x1, y0, y1 = (float(v) for v in extent)
        return cls(int(nx), int(ny), x0, x1, y0, y1)

    @property
    def extent(self) -> Tuple[float, float, float, float]:
        return (self.x0, self.x1, self.y0, self.y1)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def dx(self) -> float:
        return (self.x1 - self.x0) / self.nx

    @property
    def dy(self) -> float:
        return (self.y1 - self.y0) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def lengths(self) -> Tuple[float, float]:
        return (self.x1 - self.x0, self.y1 - self.y0)

    def x_axis(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    def y_axis(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Node coordinates (X, Y), each of shape (ny, nx)"""
        return np.meshgrid(self.x_axis(), self.y_axis(), indexing="xy")

    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Spectral wavenumbers in standard FFT ordering, k_max = pi/dx"""
        kx = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)
        ky = 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)
        return np.meshgrid(kx, ky, indexing="xy")

    def cell_index(self, x: np.ndarray, y: np.ndarray):
        """Histogram bin of each position; bins are [x0 + i*dx, x0 + (i+1)*dx).

        Returns (ix, iy, inside) where inside flags positions within the box.
        """
        ix = np.floor((np.asarray(x) - self.x0) / self.dx)
        iy = np.floor((np.asarray(y) - self.y0) / self.dy)
        with np.errstate(invalid="ignore"):
            inside = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        ix = np.where(inside, ix, 0).astype(np.int64)
        iy = np.where(inside, iy, 0).astype(np.int64)
        return ix, iy, inside

    def contains(self, x, y) -> np.ndarray:
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)

    def coarsened(self, factor: int) -> "GridSpec":
        if self.nx % factor or self.ny % factor:
            raise ConstructionError(
                f"Coarsening factor {factor} does not divide {self.nx}x{self.ny}"
            )
        return GridSpec(
            self.nx // factor, self.ny // factor, self.x0, self.x1, self.y0, self.y1
        )
