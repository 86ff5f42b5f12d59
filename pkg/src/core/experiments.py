"""
The seven experiment kinds.

Each experiment takes a validated Scenario, an ArtifactWriter and an
ExperimentContext, writes its artifacts and returns a flat metrics dict that
the validity rules inspect.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from core.classical import (
    DensityObserver,
    EnergyObserver,
    accumulate_density,
    cross_contrast,
    paired_log_divergence,
    propagate_ensemble,
    suggest_timestep,
)
from core.errors import ConstructionError
from core.factory import (
    build_absorber,
    build_classical_ensemble,
    build_grid,
    build_potential,
    build_wave,
)
from core.grid import GridSpec
from core.mathieu import (
    REGION_OVER,
    REGION_TRAPPED,
    energetic_lines,
    retention_diagram,
    stability_contours,
    stability_diagram,
)
from core.potential import make_zero, sample_on_grid
from core.quantum import (
    BoundaryMonitor,
    DensityAccumulator,
    EnergyAccumulator,
    NormObserver,
    WaveField,
    coarse_grain,
    energy_expectation,
    gaussian_packet,
    mean_momentum,
    momentum_density,
    pearson_correlation,
    propagate,
    shadow_ratio,
    superwire_filter,
    wedge_region,
)
from core import stdmap
from parsers.scenario import Scenario
from utils.artifacts import ArtifactWriter
from utils.logger import get_logger

logger = get_logger("experiments")

Metrics = Dict[str, Any]


@dataclass
class ExperimentContext:
    settings: Dict[str, Any] = field(default_factory=dict)
    workers: int = 1

    @property
    def numerics(self) -> Dict[str, Any]:
        return self.settings.get("numerics", {})

    @property
    def fft_workers(self) -> Optional[int]:
        return self.workers if self.workers > 1 else None

    def integrator(self, requested: Optional[str]) -> str:
        return requested or self.numerics.get("integrator", "yoshida4")

    def observe_every(self, dt: float, requested: Optional[int]) -> int:
        if requested is not None:
            return requested
        interval = self.numerics.get("observe_interval", 0.1)
        return max(1, math.ceil(interval / dt))

    def monodromy_options(self) -> Dict[str, Any]:
        num = self.numerics
        options = {}
        if "monodromy_base_steps" in num:
            options["base_steps"] = int(num["monodromy_base_steps"])
        if "monodromy_tolerance" in num:
            options["tol"] = float(num["monodromy_tolerance"])
        if "monodromy_max_steps" in num:
            options["max_steps"] = int(num["monodromy_max_steps"])
        if "monodromy_det_tolerance" in num:
            options["det_tol"] = float(num["monodromy_det_tolerance"])
        return options


class _Throttled:
    """Forward to ``observer`` only on multiples of ``every``"""

    def __init__(self, observer, every: int):
        self.observer = observer
        self.every = every

    def __call__(self, wave: WaveField, step: int) -> None:
        if step % self.every == 0:
            self.observer(wave, step)


class _SnapshotWriter:
    def __init__(self, writer: ArtifactWriter, steps: List[int], prefix: str = ""):
        self.writer = writer
        self.steps = set(steps)
        self.prefix = prefix

    def __call__(self, wave: WaveField, step: int) -> None:
        if step in self.steps:
            relpath = f"{self.prefix}snapshots/psi_{step:06d}.bflow"
            self.writer.grid(relpath, wave.psi, "psi", wave.grid.extent)


# ---------------------------------------------------------------- classical


def run_classical_density(s: Scenario, writer: ArtifactWriter, ctx: ExperimentContext) -> Metrics:
    pot, init, num, analysis, out = (
        s["potential"], s["initial_state"], s["numerics"], s["analysis"], s["outputs"]
    )
    potential = build_potential(pot, s.seed)
    grid = build_grid(num)
    ensemble = build_classical_ensemble(init, potential, s.seed, num["hbar"])

    dt = num["dt"]
    if dt is None:
        dt = suggest_timestep(
            potential, ctx.numerics.get("dt_safety", 0.05), ctx.numerics.get("max_dt", 0.1)
        )
        logger.info(f"Using suggested time step dt={dt:.4g}")
    steps = num["steps"]
    every = ctx.observe_every(dt, num["observe_every"])
    integrator = ctx.integrator(num["integrator"])

    density_obs = DensityObserver(grid)
    energy_obs = EnergyObserver(potential)
    final = propagate_ensemble(
        ensemble,
        potential,
        dt,
        steps,
        observers=[density_obs, energy_obs],
        integrator=integrator,
        observe_every=every,
        domain=num["domain"],
        workers=ctx.workers,
    )
    density = density_obs.density
    V = sample_on_grid(potential, grid)

    if out["grids"]:
        writer.grid("density.bflow", density.as_float(), "density", grid.extent)
        writer.grid("potential.bflow", V, "potential", grid.extent)
    if out["images"]:
        writer.image("density.pgm", density.as_float(), "gray-density")
        writer.image("density_overlay.ppm", density.as_float(), "overlay-potential", V)

    metrics: Metrics = {
        "trajectories": len(final),
        "integrator": integrator,
        "dt": dt,
        "steps": steps,
        "observe_every": every,
        "energy_drift": energy_obs.max_drift,
        "drift_growth": energy_obs.growth_ratio,
        "dead": int(final.dead.sum()),
        "exited": int(final.exited.sum()),
        "density_recorded": density.recorded,
        "density_dropped": density.dropped,
        "barrier_height": potential.barrier_height,
    }

    if analysis["cross_half_width"] is not None:
        metrics["cross_contrast"] = cross_contrast(
            density, tuple(init["center"]), analysis["cross_half_width"]
        )

    if analysis["divergence_samples"] > 0:
        sample = ensemble.points[: analysis["divergence_samples"]]
        horizon = analysis["divergence_time"]
        divergence_steps = steps if horizon is None else max(1, int(math.ceil(horizon / dt - 1e-9)))
        logs = paired_log_divergence(
            potential, sample, dt, divergence_steps, analysis["divergence_delta0"], integrator
        )
        metrics["divergence_time"] = divergence_steps * dt
        finite = logs[np.isfinite(logs)]
        metrics["median_log_divergence"] = float(np.median(finite)) if finite.size else None
        metrics["divergence_dead_pairs"] = int(logs.size - finite.size)

    if analysis["quantum_correspondence"]:
        metrics.update(_quantum_correspondence(s, writer, ctx, potential, grid, final, dt))
    return metrics


def _quantum_correspondence(s, writer, ctx, potential, grid, final, dt) -> Metrics:
    """Final-time |psi|^2 of the matching packet against the final classical positions"""
    init, num, absorber, analysis = s["initial_state"], s["numerics"], s["absorber"], s["analysis"]
    if init["kind"] != "gaussian-ensemble":
        raise ConstructionError("Quantum correspondence needs a gaussian-ensemble initial state")
    wave = gaussian_packet(
        grid, tuple(init["center"]), init["sigma0"], tuple(init["k0"]), num["hbar"], num["mass"]
    )
    mask = build_absorber(absorber, grid)
    psi = propagate(
        wave,
        sample_on_grid(potential, grid),
        dt,
        num["steps"],
        mask=mask,
        scheme=num["scheme"],
        workers=ctx.fft_workers,
    )
    classical = accumulate_density(final.points[final.alive, :2], grid).as_float()
    factor = analysis["coarse_factor"]
    correlation = pearson_correlation(coarse_grain(psi.density(), factor), coarse_grain(classical, factor))

    if s["outputs"]["grids"]:
        writer.grid("quantum_density.bflow", psi.density(), "density", grid.extent)
        writer.grid("classical_final_density.bflow", classical, "density", grid.extent)
    if s["outputs"]["images"]:
        writer.image("quantum_density.pgm", psi.density(), "gray-density")
    return {"quantum_pearson": correlation, "quantum_norm_final": psi.norm()}


# ---------------------------------------------------------------- quantum


def _propagate_recorded(
    s: Scenario,
    writer: ArtifactWriter,
    ctx: ExperimentContext,
    potential,
    grid: GridSpec,
    mask,
    prefix: str = "",
):
    init, num = s["initial_state"], s["numerics"]
    wave = build_wave(init, grid, potential, num["hbar"], num["mass"], ctx.numerics)
    V = sample_on_grid(potential, grid)
    every = num["observe_every"] or 1

    density = DensityAccumulator()
    norms = NormObserver()
    boundary = BoundaryMonitor(cells=1)
    observers = [_Throttled(density, every), _Throttled(norms, every), _Throttled(boundary, every)]
    if s["outputs"]["snapshots"]:
        observers.append(_SnapshotWriter(writer, s["outputs"]["snapshots"], prefix))

    filters = [
        EnergyAccumulator(E, window=s["energy_filter"]["window"], hbar=num["hbar"])
        for E in s["energy_filter"]["energies"]
    ]
    final = propagate(
        wave,
        V,
        num["dt"],
        num["steps"],
        mask=mask,
        accumulators=filters,
        observers=observers,
        observe_every=1,
        scheme=num["scheme"],
        workers=ctx.fft_workers,
    )
    return wave, final, V, density, norms, boundary, filters


def run_quantum_branched(s: Scenario, writer: ArtifactWriter, ctx: ExperimentContext) -> Metrics:
    num, out = s["numerics"], s["outputs"]
    potential = build_potential(s["potential"], s.seed)
    grid = build_grid(num)
    mask = build_absorber(s["absorber"], grid)

    wave, final, V, density, norms, boundary, filters = _propagate_recorded(
        s, writer, ctx, potential, grid, mask
    )
    E0 = energy_expectation(wave, V)
    E1 = energy_expectation(final, V)
    norm0 = wave.norm()
    history = [n for _, n in norms.history] or [final.norm()]

    if out["grids"]:
        writer.grid("psi_final.bflow", final.psi, "psi", grid.extent)
        writer.grid("potential.bflow", V, "potential", grid.extent)
        if density.density is not None:
            writer.grid("integrated_density.bflow", density.density, "density", grid.extent)
    if out["images"]:
        writer.image("density.pgm", final.density(), "gray-density")
        writer.image("psi_real.ppm", final.psi.real, "signed-redblue")
        writer.image("density_overlay.ppm", final.density(), "overlay-potential", V)
        if density.density is not None:
            writer.image("integrated_density.pgm", density.density, "gray-density")

    weight, kx, ky = momentum_density(final)
    if out["grids"]:
        writer.grid(
            "momentum_density.bflow",
            weight,
            "momentum_density",
            (float(kx[0]), float(kx[-1]), float(ky[0]), float(ky[-1])),
        )
    if out["images"]:
        writer.image("momentum_density.pgm", weight, "gray-density")

    for i, acc in enumerate(filters):
        psi_E = acc.result(grid)
        if out["grids"]:
            writer.grid(f"energy/psi_E_{i}.bflow", psi_E.psi, "psi_E", grid.extent)
        if out["images"]:
            writer.image(f"energy/psi_E_{i}_real.ppm", psi_E.psi.real, "signed-redblue")
            writer.image(f"energy/psi_E_{i}_amplitude.pgm", np.abs(psi_E.psi), "gray-density")

    kx_mean, ky_mean = mean_momentum(final)
    metrics: Metrics = {
        "dt": num["dt"],
        "steps": num["steps"],
        "absorber": mask is not None,
        "norm_initial": norm0,
        "norm_final": final.norm(),
        "norm_loss": norm0 - final.norm(),
        "norm_gain": max(history) - norm0,
        "energy_initial": E0,
        "energy_final": E1,
        "energy_drift": abs(E1 - E0) / max(abs(E0), np.finfo(float).tiny),
        "boundary_fraction": boundary.max_fraction,
        "mean_momentum": [kx_mean, ky_mean],
        "energies_filtered": [acc.E for acc in filters],
    }
    if mask is not None:
        metrics["absorber_minimum"] = mask.minimum
    if wave.meta.get("initial") == "bloch":
        metrics["bloch_converged"] = wave.meta["converged"]
        metrics["bloch_cutoff"] = wave.meta["cutoff"]
        metrics["bloch_energy"] = wave.meta["energy"]
    return metrics


def run_shadow_comparison(s: Scenario, writer: ArtifactWriter, ctx: ExperimentContext) -> Metrics:
    """Lattice and free runs behind an absorbing disk, plus an unobstructed free reference"""
    num, absorber, analysis, out = s["numerics"], s["absorber"], s["analysis"], s["outputs"]
    grid = build_grid(num)
    lattice = build_potential(s["potential"], s.seed)
    free = make_zero()
    with_disk = build_absorber(absorber, grid)
    border_only = build_absorber(absorber, grid, include_disk=False)

    runs = {
        "lattice": (lattice, with_disk),
        "free": (free, with_disk),
        "reference": (free, border_only),
    }
    integrated: Dict[str, np.ndarray] = {}
    metrics: Metrics = {"dt": num["dt"], "steps": num["steps"]}
    launch: Optional[WaveField] = None
    for name, (potential, mask) in runs.items():
        logger.info(f"Shadow comparison: {name} run")
        wave, final, V, density, _, boundary, _ = _propagate_recorded(
            s, writer, ctx, potential, grid, mask, prefix=f"{name}/"
        )
        if launch is None:
            launch = wave
        integrated[name] = density.density
        metrics[f"norm_final_{name}"] = final.norm()
        metrics[f"boundary_fraction_{name}"] = boundary.max_fraction
        if out["grids"]:
            writer.grid(f"{name}/integrated_density.bflow", density.density, "integrated_density", grid.extent)
        if out["images"]:
            writer.image(f"{name}/integrated_density.pgm", density.density, "gray-density")
            if name == "lattice":
                writer.image(
                    f"{name}/integrated_overlay.ppm", density.density, "overlay-potential", V
                )

    disk = absorber["disk"]
    kx, ky = mean_momentum(launch)
    direction = math.atan2(ky, kx)
    region = wedge_region(
        grid,
        tuple(disk["center"]),
        direction,
        math.radians(analysis["shadow_half_angle_deg"]),
        r_min=disk["radius"] + disk["width"],
        r_max=analysis["shadow_length"] if analysis["shadow_length"] is not None else math.inf,
    )
    if not region.any():
        raise ConstructionError("Shadow wedge contains no grid nodes")
    lattice_ratio = shadow_ratio(integrated["lattice"], integrated["reference"], region)
    free_ratio = shadow_ratio(integrated["free"], integrated["reference"], region)
    metrics.update(
        {
            "shadow_nodes": int(region.sum()),
            "shadow_direction": direction,
            "shadow_ratio_lattice": lattice_ratio,
            "shadow_ratio_free": free_ratio,
            "shadow_fill_gain": lattice_ratio / free_ratio if free_ratio > 0 else None,
        }
    )
    return metrics


def run_superwire(s: Scenario, writer: ArtifactWriter, ctx: ExperimentContext) -> Metrics:
    init, num, analysis, out = s["initial_state"], s["numerics"], s["analysis"], s["outputs"]
    potential = build_potential(s["potential"], s.seed)
    grid = build_grid(num)
    mask = build_absorber(s["absorber"], grid)

    def filtered(field, E):
        return superwire_filter(
            field,
            grid,
            E,
            init["sigma0"],
            init["k0"][0],
            num["dt"],
            num["steps"],
            mask=mask,
            launch_x=init["center"][0],
            y0=analysis["channel_y0"],
            half_width=analysis["channel_half_width"],
            period=analysis["lattice_period"],
            window=s["energy_filter"]["window"],
            hbar=num["hbar"],
            m=num["mass"],
            workers=ctx.fft_workers,
        )

    V = sample_on_grid(potential, grid)
    confinement: List[float] = []
    offsets: List[float] = []
    for i, E in enumerate(s["energy_filter"]["energies"]):
        result = filtered(potential, E)
        confinement.append(result.confinement_ratio)
        offsets.append(result.axial_peak["offset_bins"])
        if out["grids"]:
            writer.grid(f"psi_E_{i}.bflow", result.wave.psi, "psi_E", grid.extent)
        if out["images"]:
            writer.image(f"psi_E_{i}_amplitude.pgm", result.amplitude, "gray-density")
            writer.image(f"psi_E_{i}_real.ppm", result.wave.psi.real, "signed-redblue")
            writer.image(f"psi_E_{i}_overlay.ppm", result.amplitude, "overlay-potential", V)
        if i == 0:
            primary = result

    metrics: Metrics = {
        "energies": list(s["energy_filter"]["energies"]),
        "confinement_ratio": primary.confinement_ratio,
        "confinement_by_energy": confinement,
        "axial_peak_k": primary.axial_peak["peak_k"],
        "axial_offset_bins": primary.axial_peak["offset_bins"],
        "axial_offset_by_energy": offsets,
        "norm_remaining": primary.norm_remaining,
    }
    if analysis["baseline"]:
        baseline = filtered(make_zero(), s["energy_filter"]["energies"][0])
        if out["grids"]:
            writer.grid("baseline/psi_E_0.bflow", baseline.wave.psi, "psi_E", grid.extent)
        metrics["baseline_confinement"] = baseline.confinement_ratio
        metrics["confinement_gain"] = (
            primary.confinement_ratio / baseline.confinement_ratio
            if baseline.confinement_ratio > 0
            else None
        )
    return metrics


# ---------------------------------------------------------------- maps and scans


def run_manifold_map(s: Scenario, writer: ArtifactWriter, ctx: ExperimentContext) -> Metrics:
    section, out = s["map"], s["outputs"]
    scene = stdmap.fold_scene(section["points_per_curve"])
    run = stdmap.run_manifold_map(scene, section["K"], section["n_steps"], section["snapshot_at"])

    if out["points"]:
        writer.points("points/initial.bflow", scene.points(), "manifold")
        writer.points("points/after_kick.bflow", run.half_steps[0].points(), "manifold")
        writer.points("points/after_drift.bflow", run.half_steps[1].points(), "manifold")
        for snap in run.snapshots:
            writer.points(f"points/step_{snap.n:05d}.bflow", snap.points(), "manifold")

    sup_p = max(float(np.nanmax(np.abs(snap.p))) for snap in run.snapshots) if run.snapshots else 0.0
    metrics: Metrics = {
        "K": section["K"],
        "n_steps": section["n_steps"],
        "map_points": len(scene),
        "snapshots": [snap.n for snap in run.snapshots],
        "map_finite": run.finite,
        "sup_abs_p": sup_p,
    }

    diffusion = section["diffusion"]
    if diffusion is not None:
        msd = stdmap.momentum_diffusion(section["K"], diffusion["n_traj"], diffusion["n_steps"], s.seed)
        slope = stdmap.diffusion_slope(msd, skip=len(msd) // 10)
        metrics["diffusion_slope"] = slope
        metrics["diffusion_ratio"] = slope / (0.5 * section["K"] ** 2) if section["K"] else None
        writer.data("diffusion.json", {"K": section["K"], "msd": msd.tolist()})
    return metrics


def _write_scan(writer: ArtifactWriter, grid, out, T: float) -> None:
    if out["grids"]:
        writer.grid("trace.bflow", grid.trace, "trace", grid.extent)
        writer.grid("stable.bflow", grid.stable.astype(np.float64), "stable", grid.extent)
        writer.grid("det.bflow", grid.det, "det", grid.extent)
    if out["images"]:
        writer.image("stable.pgm", grid.stable.astype(np.float64), "gray-density")
        writer.image("trace.ppm", np.clip(grid.trace, -4.0, 4.0), "signed-redblue")
    contours = stability_contours(grid)
    lines = energetic_lines(grid.a_axis, T)
    writer.data(
        "boundaries.json",
        {
            "T": T,
            "contours": {key: [line.tolist() for line in polylines] for key, polylines in contours.items()},
            "energetic_lines": {key: line.tolist() for key, line in lines.items()},
        },
    )


def _scan_metrics(grid) -> Metrics:
    return {
        "nodes": int(grid.trace.size),
        "det_deviation": float(np.nanmax(np.abs(grid.det - 1.0))),
        "stable_fraction": float(np.mean(grid.stable)),
    }


def run_stability_scan(s: Scenario, writer: ArtifactWriter, ctx: ExperimentContext) -> Metrics:
    scan = s["scan"]
    grid = stability_diagram(
        scan["a_range"], scan["q_range"], tuple(scan["resolution"]), scan["omega"],
        **ctx.monodromy_options(),
    )
    _write_scan(writer, grid, s["outputs"], scan["T"])
    metrics = _scan_metrics(grid)
    metrics["omega"] = scan["omega"]
    return metrics


def run_retention_scan(s: Scenario, writer: ArtifactWriter, ctx: ExperimentContext) -> Metrics:
    scan, num, analysis, out = s["scan"], s["numerics"], s["analysis"], s["outputs"]
    grid = retention_diagram(
        scan["a_range"],
        scan["q_range"],
        tuple(scan["resolution"]),
        T=scan["T"],
        wedge=math.radians(scan["wedge_deg"]),
        n_traj=scan["n_traj"],
        t_final=scan["t_final"],
        dt=num["dt"],
        half_width=analysis["channel_half_width"],
        integrator=ctx.integrator(num["integrator"]),
        workers=ctx.workers,
    )
    _write_scan(writer, grid, out, scan["T"])
    if out["grids"]:
        writer.grid("retention.bflow", grid.retention, "retention", grid.extent)
    if out["images"]:
        writer.image("retention.pgm", grid.retention, "gray-density")

    regions = grid.regions()
    retention = grid.retention
    over = regions == REGION_OVER
    trapped = regions == REGION_TRAPPED

    def mean(mask):
        values = retention[mask & np.isfinite(retention)]
        return float(values.mean()) if values.size else None

    metrics = _scan_metrics(grid)
    stable_over = mean(over & grid.stable)
    unstable_over = mean(over & ~grid.stable)
    trapped_values = retention[trapped & np.isfinite(retention)]
    metrics.update(
        {
            "T": scan["T"],
            "nan_nodes": int(np.count_nonzero(~np.isfinite(retention))),
            "mean_retention": float(np.nanmean(retention)) if np.isfinite(retention).any() else None,
            "mean_retention_stable_over": stable_over,
            "mean_retention_unstable_over": unstable_over,
            "retention_contrast": (
                stable_over - unstable_over
                if stable_over is not None and unstable_over is not None
                else None
            ),
            "min_trapped_retention": float(trapped_values.min()) if trapped_values.size else None,
            "trapped_nodes": int(trapped.sum()),
            "over_barrier_nodes": int(over.sum()),
        }
    )
    return metrics


EXPERIMENTS: Dict[str, Callable[[Scenario, ArtifactWriter, ExperimentContext], Metrics]] = {
    "classical-density": run_classical_density,
    "quantum-branched": run_quantum_branched,
    "shadow-comparison": run_shadow_comparison,
    "manifold-map": run_manifold_map,
    "stability-scan": run_stability_scan,
    "retention-scan": run_retention_scan,
    "superwire": run_superwire,
}
