"""
Parameter scan and standard map validity rules
"""

from typing import Any, Dict, List, Optional


class ScanRules:
    def __init__(self):
        self.rules = [
            {
                "id": "scan_monodromy_determinant",
                "name": "Monodromy Determinant Off Unity",
                "category": "conservation",
                "severity": "high",
                "tolerance": 1e-9,
                "description": "det(M) must equal 1 for the area-preserving Mathieu flow",
                "hint": "Lower numerics.monodromy_tolerance or raise monodromy_base_steps",
                "evaluate": self._check_determinant,
            },
            {
                "id": "scan_nan_retention",
                "name": "Failed Retention Nodes",
                "category": "stability",
                "severity": "medium",
                "tolerance": 0,
                "description": "Retention scan nodes failed and hold NaN",
                "hint": "Reduce numerics.dt; failing nodes are logged with their index range",
                "evaluate": self._check_nan_retention,
            },
            {
                "id": "scan_trapped_leak",
                "name": "Trapped Node Leaked",
                "category": "conservation",
                "severity": "medium",
                "tolerance": 1.0,
                "description": "A node below the energetic barrier lost trajectories",
                "hint": "Energy errors let trajectories cross the barrier; reduce numerics.dt",
                "evaluate": self._check_trapped_leak,
            },
            {
                "id": "map_non_finite",
                "name": "Non-finite Map Points",
                "category": "stability",
                "severity": "high",
                "tolerance": None,
                "description": "Standard map snapshots contain NaN or infinite coordinates",
                "hint": "Check map.K; the map itself cannot overflow for finite K",
                "evaluate": self._check_map_finite,
            },
        ]

    def get_rules(self, metrics: Dict[str, Any]) -> List[Dict[str, Any]]:
        return self.rules

    def _check_determinant(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        deviation = metrics.get("det_deviation")
        if deviation is None or deviation <= tolerance:
            return []
        return [
            {
                "message": f"max |det M - 1| = {deviation:.3g} exceeds {tolerance:g}",
                "metric": "det_deviation",
                "value": deviation,
            }
        ]

    def _check_nan_retention(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        nan_nodes = metrics.get("nan_nodes")
        if nan_nodes is None or nan_nodes <= tolerance:
            return []
        return [
            {
                "message": f"{nan_nodes} of {metrics.get('nodes', '?')} nodes hold NaN retention",
                "metric": "nan_nodes",
                "value": nan_nodes,
            }
        ]

    def _check_trapped_leak(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        lowest = metrics.get("min_trapped_retention")
        if lowest is None or lowest >= tolerance:
            return []
        return [
            {
                "message": f"Lowest retention in the trapped region is {lowest:.3g}",
                "metric": "min_trapped_retention",
                "value": lowest,
            }
        ]

    def _check_map_finite(
        self, metrics: Dict[str, Any], tolerance: Optional[float]
    ) -> List[Dict[str, Any]]:
        if metrics.get("map_finite") is False:
            return [
                {
                    "message": "Map snapshots contain non-finite points",
                    "metric": "map_finite",
                    "value": False,
                }
            ]
        return []
