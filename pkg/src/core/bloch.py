"""
Bloch states of periodic fields by plane-wave diagonalization of one cell
"""

import math
from typing import Optional, Tuple

import numpy as np
from scipy import fft as spfft
from scipy import linalg

from core.errors import ConstructionError
from core.grid import GridSpec
from core.potential import ConstantField, PotentialField
from core.quantum import WaveField, _check_grid, _normalize
from utils.logger import get_logger

logger = get_logger("bloch")

EIGEN_TOLERANCE = 1e-8
START_CUTOFF = 4
MAX_CUTOFF = 16


def _cell_of(field: PotentialField, grid: GridSpec) -> Tuple[float, float]:
    if isinstance(field, ConstantField):
        return grid.lengths
    if field.periodic_cell is None:
        raise ConstructionError(f"Bloch states need a periodic field, got '{field.kind}'")
    cell = field.periodic_cell
    for length, side, axis in zip(grid.lengths, cell, "xy"):
        ratio = length / side
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ConstructionError(
                f"Grid length {length:.6g} along {axis} is not a multiple of the cell {side:.6g}"
            )
    return cell


def _fourier_coefficients(field, grid: GridSpec, cell, samples: int) -> np.ndarray:
    """V_G relative to the grid origin, numpy FFT ordering, shape (samples, samples)"""
    xs = grid.x0 + cell[0] * np.arange(samples) / samples
    ys = grid.y0 + cell[1] * np.arange(samples) / samples
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return spfft.fft2(field.eval(X, Y)) / samples ** 2


def _solve(field, grid, cell, k, cutoff, hbar, m, bands: int):
    orders = np.arange(-cutoff, cutoff + 1)
    size = len(orders)
    samples = max(64, 1 << int(math.ceil(math.log2(4 * cutoff + 2))))
    VG = _fourier_coefficients(field, grid, cell, samples)

    gx = 2.0 * math.pi * orders / cell[0]
    gy = 2.0 * math.pi * orders / cell[1]
    # basis index = n * size + m for G = (gx[m], gy[n])
    M = np.tile(orders, size)
    N = np.repeat(orders, size)
    kinetic = hbar ** 2 * ((k[0] + gx[M - orders[0]]) ** 2 + (k[1] + gy[N - orders[0]]) ** 2) / (2.0 * m)
    H = VG[(N[:, None] - N[None, :]) % samples, (M[:, None] - M[None, :]) % samples]
    H = H + np.diag(kinetic)
    values, vectors = linalg.eigh(H, subset_by_index=[0, bands - 1])
    return values, vectors, gx, gy, size


def bloch_bands(
    field: PotentialField,
    grid: GridSpec,
    k: Tuple[float, float] = (0.0, 0.0),
    bands: int = 1,
    cutoff: int = START_CUTOFF,
    hbar: float = 1.0,
    m: float = 1.0,
) -> np.ndarray:
    """Lowest ``bands`` eigenvalues at a fixed plane-wave cutoff"""
    cell = _cell_of(field, grid)
    values, *_ = _solve(field, grid, cell, k, cutoff, hbar, m, bands)
    return values


def bloch_state(
    grid: GridSpec,
    field: PotentialField,
    k: Tuple[float, float] = (0.0, 0.0),
    band: int = 0,
    cutoff: Optional[int] = None,
    max_cutoff: int = MAX_CUTOFF,
    tol: float = EIGEN_TOLERANCE,
    envelope: Optional[Tuple[Tuple[float, float], float]] = None,
    hbar: float = 1.0,
    m: float = 1.0,
) -> WaveField:
    """Band ``band`` at Bloch vector ``k`` tiled over the grid, unit norm.

    The cutoff (largest reciprocal-vector order per axis) rises by two until
    the eigenvalues up to ``band`` move by less than ``tol``; an unconverged
    result is logged and flagged in ``meta["converged"]``. ``envelope`` =
    (center, sigma) multiplies a Gaussian for a localized launch.
    """
    _check_grid(grid)
    if band < 0:
        raise ConstructionError(f"Band index must be >= 0, got {band}")
    cell = _cell_of(field, grid)
    bands = band + 1

    current = cutoff if cutoff is not None else START_CUTOFF
    values, vectors, gx, gy, size = _solve(field, grid, cell, k, current, hbar, m, bands)
    converged = cutoff is not None
    change = float("nan")
    while not converged:
        if current + 2 > max_cutoff:
            break
        refined = _solve(field, grid, cell, k, current + 2, hbar, m, bands)
        change = float(np.max(np.abs(refined[0] - values)))
        current += 2
        values, vectors, gx, gy, size = refined
        converged = change < tol

    if not converged:
        logger.warning(
            f"Bloch band {band} not converged at cutoff {current} (last change {change:.3g})"
        )

    coefficients = vectors[:, band].reshape(size, size)
    Ex = np.exp(1j * np.outer(grid.x_axis() - grid.x0, k[0] + gx))
    Ey = np.exp(1j * np.outer(grid.y_axis() - grid.y0, k[1] + gy))
    psi = Ey @ coefficients @ Ex.T

    lx, ly = grid.lengths
    commensurate = all(
        abs(ki * L / (2.0 * math.pi) - round(ki * L / (2.0 * math.pi))) < 1e-9
        for ki, L in zip(k, (lx, ly))
    )
    if not commensurate:
        logger.warning(f"Bloch vector {tuple(k)} is not periodic on the grid box")

    if envelope is not None:
        (cx, cy), sigma = envelope
        X, Y = grid.mesh()
        psi = psi * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (4.0 * sigma ** 2))

    return WaveField(
        _normalize(psi, grid),
        grid,
        hbar=hbar,
        m=m,
        meta={
            "initial": "bloch",
            "k": list(k),
            "band": band,
            "energy": float(values[band]),
            "cutoff": current,
            "converged": bool(converged),
            "k_commensurate": commensurate,
        },
    )
