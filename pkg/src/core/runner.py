"""
Scenario runner: executes one experiment into a run directory and writes
its manifest
"""

import math
import platform
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import scipy

from core import __version__
from core.errors import PropagationError
from core.experiments import EXPERIMENTS, ExperimentContext
from core.factory import build_grid
from core.rule_engine import RuleEngine
from parsers.scenario import Scenario, serialize_scenario
from rules.classical_rules import ClassicalRules
from rules.quantum_rules import QuantumRules
from rules.scan_rules import ScanRules
from utils.artifacts import ArtifactWriter
from utils.helpers import (
    save_report,
    sha256_bytes,
    summarize_findings,
)
from utils.logger import get_logger

logger = get_logger("runner")

KIND_RULES = {
    "classical-density": ["classical"],
    "quantum-branched": ["quantum"],
    "shadow-comparison": ["quantum"],
    "superwire": ["quantum"],
    "manifold-map": ["scan"],
    "stability-scan": ["scan"],
    "retention-scan": ["scan"],
}

STATUS_OK = "ok"
STATUS_FAILED = "failed"
STATUS_PROPAGATION = "propagation_error"


def _plain(value: Any) -> Any:
    """JSON-ready copy: numpy scalars unwrapped, non-finite floats as None"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def inputs_hash(scenario: Scenario) -> str:
    return sha256_bytes(serialize_scenario(scenario).encode("utf-8"))


class ScenarioRunner:
    def __init__(self, config: Dict[str, Any], rules_config: Optional[Dict[str, Dict[str, Any]]] = None):
        self.config = config
        self.rule_engine = RuleEngine(rules_config)

        self.rule_sets = {
            "classical": ClassicalRules(),
            "quantum": QuantumRules(),
            "scan": ScanRules(),
        }

    @property
    def fail_severity(self) -> str:
        return self.config.get("validation", {}).get("fail_severity", "high")

    def run(self, scenario: Scenario, out_dir: Path, threads: Optional[int] = None) -> Dict[str, Any]:
        """Run ``scenario`` into ``out_dir``; returns the manifest that was written"""
        out_dir = Path(out_dir)
        writer = ArtifactWriter(out_dir)
        workers = threads or self.config.get("runtime", {}).get("workers", 1)
        ctx = ExperimentContext(settings=self.config, workers=max(1, int(workers)))
        experiment = EXPERIMENTS[scenario.kind]

        logger.info(f"Running {scenario.kind} scenario '{scenario.name}' into {out_dir}")
        started = time.perf_counter()
        findings: List[Dict[str, Any]] = []
        blocking: List[Dict[str, Any]] = []
        status = STATUS_OK
        try:
            metrics = experiment(scenario, writer, ctx)
        except PropagationError as e:
            logger.error(f"Propagation failed: {e}")
            metrics = {"failure_time": e.time, **e.details}
            self._write_failure_snapshot(scenario, writer, e)
            findings.append(
                {
                    "scenario": scenario.name,
                    "rule_id": "propagation_nan",
                    "rule_name": "Propagation Produced Non-finite Values",
                    "severity": "critical",
                    "category": "stability",
                    "message": str(e),
                    "hint": "The last finite state is in failure_snapshot.bflow; reduce numerics.dt",
                }
            )
            status = STATUS_PROPAGATION
        wall_time = time.perf_counter() - started

        metrics["nan_pixels"] = writer.nan_pixels
        metrics = _plain(metrics)
        if status == STATUS_OK:
            findings.extend(self._evaluate(scenario, metrics))
            blocking = self.rule_engine.filter_by_severity(findings, self.fail_severity)
            if blocking:
                status = STATUS_FAILED

        manifest = {
            "scenario": scenario.name,
            "kind": scenario.kind,
            "status": status,
            "inputs_hash": inputs_hash(scenario),
            "versions": self._versions(),
            "timestamp": datetime.now().isoformat(),
            "wall_time_s": wall_time,
            "workers": ctx.workers,
            "metrics": metrics,
            "findings": _plain(findings),
            "summary": summarize_findings(findings),
            "blocking_findings": [f["rule_id"] for f in blocking],
            "artifacts": writer.listing(),
            "images": writer.images,
        }
        self._write_manifest(manifest, out_dir)
        logger.info(f"Finished '{scenario.name}' with status {status} in {wall_time:.2f} s")
        return manifest

    def _evaluate(self, scenario: Scenario, metrics: Dict[str, Any]) -> List[Dict[str, Any]]:
        findings = []
        for key in KIND_RULES.get(scenario.kind, []):
            rules = self.rule_sets[key].get_rules(metrics)
            findings.extend(self.rule_engine.evaluate_all(rules, metrics, scenario.name))
        return findings

    def _write_failure_snapshot(self, scenario: Scenario, writer: ArtifactWriter, error: PropagationError) -> None:
        if error.snapshot is None:
            return
        snapshot = np.asarray(error.snapshot)
        try:
            extent = build_grid(scenario["numerics"]).extent
        except Exception:
            ny, nx = snapshot.shape
            extent = (0.0, float(nx), 0.0, float(ny))
        writer.grid("failure_snapshot.bflow", snapshot, "failure_snapshot", extent)

    def _versions(self) -> Dict[str, str]:
        return {
            "branched_flow": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        }

    def _write_manifest(self, manifest: Dict[str, Any], out_dir: Path) -> None:
        output = self.config.get("output", {})
        formats = output.get("manifest_formats", ["json"])
        save_report(manifest, str(out_dir / "manifest.json"))
        if "yaml" in formats:
            save_report(manifest, str(out_dir / "manifest.yaml"))
        if output.get("html_report", True) or "html" in formats:
            save_report(manifest, str(out_dir / "report.html"))
