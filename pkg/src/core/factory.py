"""
Scenario sections -> physics objects
"""

import math
from typing import Any, Dict, Optional

from core.bloch import bloch_state
from core.classical import (
    Ensemble,
    sample_gaussian_source,
    sample_plane_manifold,
    sample_point_source,
)
from core.errors import ConstructionError
from core.grid import GridSpec
from core.potential import (
    LatticeSpec,
    PotentialField,
    make_constant,
    make_cosine_integrable,
    make_fermi_lattice,
    make_mathieu_channel,
    make_zero,
)
from core.quantum import (
    AbsorberMask,
    BorderAbsorber,
    DiskAbsorber,
    WaveField,
    gaussian_packet,
    make_absorber,
    plane_wave,
)


def _lattice(section: Dict[str, Any], seed: int) -> LatticeSpec:
    return LatticeSpec(
        kind=section["kind"],
        lattice_constant=section["constant"],
        extent=tuple(section["extent"]),
        origin=tuple(section["origin"]),
        seed=seed,
        count=section["count"],
        min_spacing=section["min_spacing"],
    )


def build_potential(section: Dict[str, Any], seed: int = 0) -> PotentialField:
    kind = section["kind"]
    builders = {
        "zero": lambda: make_zero(),
        "constant": lambda: make_constant(section["value"]),
        "cosine": lambda: make_cosine_integrable(section["amplitude"]),
        "mathieu": lambda: make_mathieu_channel(section["a"], section["q"]),
        "fermi": lambda: make_fermi_lattice(
            _lattice(section["lattice"], seed),
            section["amplitude"],
            section["sigma"],
            section["r_off"],
        ),
    }
    if kind not in builders:
        raise ConstructionError(f"Unsupported potential kind: {kind}")
    if kind == "fermi" and section.get("lattice") is None:
        raise ConstructionError("Fermi potential needs a lattice section")
    return builders[kind]()


def build_grid(numerics: Dict[str, Any]) -> GridSpec:
    grid = numerics.get("grid")
    if grid is None:
        raise ConstructionError("Scenario has no numerics.grid")
    return GridSpec.from_extent(grid["nx"], grid["ny"], grid["extent"])


def build_classical_ensemble(
    initial_state: Dict[str, Any], field: PotentialField, seed: int = 0, hbar: float = 1.0
) -> Ensemble:
    kind = initial_state["kind"]
    if kind == "point-source":
        return sample_point_source(
            tuple(initial_state["center"]),
            initial_state["speed"],
            math.radians(initial_state["angle_deg"]),
            math.radians(initial_state["wedge_deg"]),
            initial_state["n"],
            field,
        )
    if kind == "plane-manifold":
        return sample_plane_manifold(
            tuple(initial_state["y_range"]),
            initial_state["x0"],
            initial_state["speed"],
            initial_state["n"],
            field,
        )
    if kind == "gaussian-ensemble":
        return sample_gaussian_source(
            tuple(initial_state["center"]),
            initial_state["sigma0"],
            tuple(initial_state["k0"]),
            initial_state["n"],
            seed=seed,
            hbar=hbar,
            field=field,
        )
    raise ConstructionError(f"'{kind}' is not a classical initial state")


def build_wave(
    initial_state: Dict[str, Any],
    grid: GridSpec,
    field: PotentialField,
    hbar: float = 1.0,
    m: float = 1.0,
    settings: Optional[Dict[str, Any]] = None,
) -> WaveField:
    kind = initial_state["kind"]
    if kind == "gaussian":
        return gaussian_packet(
            grid,
            tuple(initial_state["center"]),
            initial_state["sigma0"],
            tuple(initial_state["k0"]),
            hbar,
            m,
        )
    if kind == "plane-wave":
        return plane_wave(grid, tuple(initial_state["k"]), hbar, m)
    if kind == "bloch":
        settings = settings or {}
        envelope = None
        if initial_state["envelope_sigma"] is not None:
            envelope = (tuple(initial_state["center"]), initial_state["envelope_sigma"])
        kwargs = {}
        if "bloch_max_cutoff" in settings:
            kwargs["max_cutoff"] = settings["bloch_max_cutoff"]
        if "bloch_tolerance" in settings:
            kwargs["tol"] = settings["bloch_tolerance"]
        return bloch_state(
            grid,
            field,
            tuple(initial_state["k"]),
            initial_state["band"],
            envelope=envelope,
            hbar=hbar,
            m=m,
            **kwargs,
        )
    raise ConstructionError(f"'{kind}' is not a quantum initial state")


def build_absorber(
    section: Dict[str, Any], grid: GridSpec, include_disk: bool = True
) -> Optional[AbsorberMask]:
    """Border and disk layers multiplied into one mask; None when neither is set"""
    masks = []
    if section.get("border_width") is not None:
        masks.append(make_absorber(grid, BorderAbsorber(section["border_width"], section["strength"])))
    disk = section.get("disk")
    if include_disk and disk is not None:
        strength = disk.get("strength")
        geometry = DiskAbsorber(
            tuple(disk["center"]),
            disk["radius"],
            disk["width"],
            section["strength"] if strength is None else strength,
        )
        masks.append(make_absorber(grid, geometry))
    if not masks:
        return None
    mask = masks[0]
    for extra in masks[1:]:
        mask = mask * extra
    return mask
