"""
Wave propagation validity rules
"""

from typing import Any, Dict, List, Optional


def _boundary_fractions(metrics: Dict[str, Any]) -> Dict[str, float]:
    return {
        key: value
        for key, value in metrics.items()
        if key.startswith("boundary_fraction") and value is not None
    }


class QuantumRules:
    def __init__(self):
        self.rules = [
            {
                "id": "quantum_norm_gain",
                "name": "Norm Increased",
                "category": "conservation",
                "severity": "critical",
                "tolerance": 1e-9,
                "description": "The wave norm grew during propagation",
                "hint": "Absorber masks must stay within (0, 1]; check absorber.strength",
                "evaluate": self._check_norm_gain,
            },
            {
                "id": "quantum_energy_drift",
                "name": "Energy Drift Without Absorber",
                "category": "conservation",
                "severity": "high",
                "tolerance": 1e-3,
                "description": "<H> changed although nothing absorbs the wave",
                "hint": "Reduce numerics.dt or use the strang scheme",
                "evaluate": self._check_energy_drift,
            },
            {
                "id": "quantum_unabsorbed_flux",
                "name": "Flux Reaches Grid Edge",
                "category": "boundary",
                "severity": "medium",
                "tolerance": 1e-3,
                "description": "Density reached the outermost grid ring despite the absorber",
                "hint": "Widen absorber.border_width or raise absorber.strength",
                "evaluate": self._check_unabsorbed_flux,
            },
            {
                "id": "quantum_periodic_wrap",
                "name": "Wave Wraps Around Periodic Box",
                "category": "boundary",
                "severity": "low",
                "tolerance": 1e-3,
                "description": "Without an absorber the density crossed the periodic boundary",
                "hint": "Add absorber.border_width unless periodic wrapping is intended",
                "evaluate": self._check_periodic_wrap,
            },
            {
                "id": "quantum_bloch_unconverged",
                "name": "Bloch State Not Converged",
                "category": "initial_state",
                "severity": "medium",
                "tolerance": None,
                "description": "Plane-wave cutoff hit its maximum before the band energy settled",
                "hint": "Raise numerics.bloch_max_cutoff in settings.yaml",
                "evaluate": self._check_bloch,
            },
        ]

    def get_rules(self, metrics: Dict[str, Any]) -> List[Dict[str, Any]]:
        return self.rules

    def _check_norm_gain(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        gain = metrics.get("norm_gain")
        if gain is None or gain <= tolerance:
            return []
        return [
            {
                "message": f"Norm grew by {gain:.3g} (tolerance {tolerance:g})",
                "metric": "norm_gain",
                "value": gain,
            }
        ]

    def _check_energy_drift(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        if metrics.get("absorber") is not False or "norm_final" not in metrics:
            return []
        drift = metrics.get("energy_drift")
        if drift is None or drift <= tolerance:
            return []
        return [
            {
                "message": f"Relative change of <H> is {drift:.3g} without absorption",
                "metric": "energy_drift",
                "value": drift,
            }
        ]

    def _check_unabsorbed_flux(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        if metrics.get("absorber") is False:
            return []
        return [
            {
                "message": f"{key} peaked at {value:.3g}",
                "metric": key,
                "value": value,
            }
            for key, value in sorted(_boundary_fractions(metrics).items())
            if value > tolerance
        ]

    def _check_periodic_wrap(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        if metrics.get("absorber") is not False:
            return []
        value = metrics.get("boundary_fraction")
        if value is None or value <= tolerance:
            return []
        return [
            {
                "message": f"{value:.3g} of the density reached the periodic boundary",
                "metric": "boundary_fraction",
                "value": value,
            }
        ]

    def _check_bloch(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        if metrics.get("bloch_converged") is False:
            return [
                {
                    "message": f"Bloch state unconverged at cutoff {metrics.get('bloch_cutoff')}",
                    "metric": "bloch_converged",
                    "value": False,
                }
            ]
        return []
