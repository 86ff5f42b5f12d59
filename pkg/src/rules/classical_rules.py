"""
Classical ensemble validity rules
"""

from typing import Any, Dict, List, Optional

# Below this the growth ratio of the drift is round-off noise
DRIFT_FLOOR = 1e-12


class ClassicalRules:
    def __init__(self):
        self.rules = [
            {
                "id": "classical_energy_drift",
                "name": "Energy Drift Beyond Tolerance",
                "category": "conservation",
                "severity": "high",
                "tolerance": 1e-5,
                "description": "Maximum relative energy error of the ensemble exceeds the tolerance",
                "hint": "Reduce numerics.dt or switch numerics.integrator to yoshida4",
                "evaluate": self._check_energy_drift,
            },
            {
                "id": "classical_secular_drift",
                "name": "Secular Energy Drift",
                "category": "conservation",
                "severity": "medium",
                "tolerance": 2.0,
                "description": "Energy error keeps growing instead of oscillating",
                "hint": "A growing error points at a non-symplectic step or a rough potential",
                "evaluate": self._check_secular_drift,
            },
            {
                "id": "classical_dead_trajectories",
                "name": "Non-finite Trajectories",
                "category": "stability",
                "severity": "high",
                "tolerance": 0,
                "description": "Trajectories went non-finite and were frozen",
                "hint": "Check the potential for singular gradients or reduce numerics.dt",
                "evaluate": self._check_dead_trajectories,
            },
            {
                "id": "classical_dropped_samples",
                "name": "Density Samples Outside Grid",
                "category": "coverage",
                "severity": "low",
                "tolerance": 0.5,
                "description": "Most density samples fell outside the histogram grid",
                "hint": "Enlarge numerics.grid.extent or bound the flow with numerics.domain",
                "evaluate": self._check_dropped_samples,
            },
        ]

    def get_rules(self, metrics: Dict[str, Any]) -> List[Dict[str, Any]]:
        return self.rules

    def _check_energy_drift(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        drift = metrics.get("energy_drift")
        if drift is None or "trajectories" not in metrics:
            return []
        if drift > tolerance:
            return [
                {
                    "message": f"Relative energy drift {drift:.3g} exceeds {tolerance:g}",
                    "metric": "energy_drift",
                    "value": drift,
                }
            ]
        return []

    def _check_secular_drift(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        growth = metrics.get("drift_growth")
        drift = metrics.get("energy_drift") or 0.0
        if growth is None or drift <= DRIFT_FLOOR:
            return []
        if growth >= tolerance:
            return [
                {
                    "message": f"Second-half energy error is {growth:.3g}x the first-half error",
                    "metric": "drift_growth",
                    "value": growth,
                }
            ]
        return []

    def _check_dead_trajectories(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        dead = metrics.get("dead")
        if dead is None or dead <= tolerance:
            return []
        return [
            {
                "message": f"{dead} of {metrics.get('trajectories', '?')} trajectories went non-finite",
                "metric": "dead",
                "value": dead,
            }
        ]

    def _check_dropped_samples(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        recorded = metrics.get("density_recorded")
        dropped = metrics.get("density_dropped", 0)
        if not recorded:
            return []
        share = dropped / recorded
        if share > tolerance:
            return [
                {
                    "message": f"{share:.1%} of density samples fell outside the grid",
                    "metric": "density_dropped",
                    "value": dropped,
                }
            ]
        return []
