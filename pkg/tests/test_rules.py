"""
Tests for physics-validity rules
"""

from pathlib import Path

import pytest

from core.rule_engine import RuleEngine
from rules.classical_rules import ClassicalRules
from rules.quantum_rules import QuantumRules
from rules.scan_rules import ScanRules
from utils.helpers import load_rules_config

RULES_FILE = Path(__file__).parent.parent / "config" / "rules.yaml"


def rule_by_id(rule_set, rule_id):
    return next(r for r in rule_set.rules if r["id"] == rule_id)


class TestClassicalRules:
    @pytest.fixture
    def classical_rules(self):
        return ClassicalRules()

    def test_energy_drift_detection(self, classical_rules):
        """Test energy drift above tolerance is reported"""
        rule = rule_by_id(classical_rules, "classical_energy_drift")
        metrics = {"trajectories": 100, "energy_drift": 1e-3}

        violations = rule["evaluate"](metrics, rule["tolerance"])
        assert len(violations) == 1
        assert violations[0]["metric"] == "energy_drift"
        assert rule["evaluate"]({"trajectories": 100, "energy_drift": 1e-8}, rule["tolerance"]) == []

    def test_energy_drift_needs_trajectories(self, classical_rules):
        """Test the drift rule ignores runs without a classical ensemble"""
        rule = rule_by_id(classical_rules, "classical_energy_drift")

        assert rule["evaluate"]({"energy_drift": 1.0}, rule["tolerance"]) == []

    def test_secular_drift_ignores_round_off(self, classical_rules):
        """Test growth of a round-off sized error is not reported"""
        rule = rule_by_id(classical_rules, "classical_secular_drift")

        assert rule["evaluate"]({"drift_growth": 10.0, "energy_drift": 1e-14}, 2.0) == []
        assert len(rule["evaluate"]({"drift_growth": 10.0, "energy_drift": 1e-6}, 2.0)) == 1

    def test_dead_trajectories(self, classical_rules):
        """Test any frozen trajectory is reported"""
        rule = rule_by_id(classical_rules, "classical_dead_trajectories")

        violations = rule["evaluate"]({"dead": 3, "trajectories": 50}, 0)
        assert "3 of 50" in violations[0]["message"]
        assert rule["evaluate"]({"dead": 0}, 0) == []

    def test_dropped_samples(self, classical_rules):
        """Test mostly-outside density histograms are reported"""
        rule = rule_by_id(classical_rules, "classical_dropped_samples")

        assert len(rule["evaluate"]({"density_recorded": 10, "density_dropped": 8}, 0.5)) == 1
        assert rule["evaluate"]({"density_recorded": 10, "density_dropped": 2}, 0.5) == []
        assert rule["evaluate"]({"density_recorded": 0}, 0.5) == []


class TestQuantumRules:
    @pytest.fixture
    def quantum_rules(self):
        return QuantumRules()

    def test_norm_gain(self, quantum_rules):
        """Test norm growth is a critical violation"""
        rule = rule_by_id(quantum_rules, "quantum_norm_gain")

        assert rule["severity"] == "critical"
        assert len(rule["evaluate"]({"norm_gain": 1e-6}, rule["tolerance"])) == 1
        assert rule["evaluate"]({"norm_gain": 0.0}, rule["tolerance"]) == []

    def test_energy_drift_only_without_absorber(self, quantum_rules):
        """Test energy drift is only checked for unitary runs"""
        rule = rule_by_id(quantum_rules, "quantum_energy_drift")
        metrics = {"energy_drift": 0.1, "norm_final": 1.0}

        assert len(rule["evaluate"](dict(metrics, absorber=False), 1e-3)) == 1
        assert rule["evaluate"](dict(metrics, absorber=True), 1e-3) == []

    def test_unabsorbed_flux_per_run(self, quantum_rules):
        """Test every boundary fraction above tolerance gives one violation"""
        rule = rule_by_id(quantum_rules, "quantum_unabsorbed_flux")
        metrics = {
            "absorber": True,
            "boundary_fraction": 0.01,
            "boundary_fraction_baseline": 1e-6,
            "boundary_fraction_E1": 0.2,
        }

        violations = rule["evaluate"](metrics, 1e-3)
        assert [v["metric"] for v in violations] == ["boundary_fraction", "boundary_fraction_E1"]

    def test_periodic_wrap(self, quantum_rules):
        """Test wrapping is reported only for runs without absorber"""
        rule = rule_by_id(quantum_rules, "quantum_periodic_wrap")

        assert len(rule["evaluate"]({"absorber": False, "boundary_fraction": 0.1}, 1e-3)) == 1
        assert rule["evaluate"]({"absorber": True, "boundary_fraction": 0.1}, 1e-3) == []

    def test_bloch_unconverged(self, quantum_rules):
        """Test an unconverged Bloch launch is flagged"""
        rule = rule_by_id(quantum_rules, "quantum_bloch_unconverged")

        assert len(rule["evaluate"]({"bloch_converged": False, "bloch_cutoff": 16}, None)) == 1
        assert rule["evaluate"]({"bloch_converged": True}, None) == []
        assert rule["evaluate"]({}, None) == []


class TestScanRules:
    @pytest.fixture
    def scan_rules(self):
        return ScanRules()

    def test_determinant(self, scan_rules):
        """Test det(M) deviations above tolerance are reported"""
        rule = rule_by_id(scan_rules, "scan_monodromy_determinant")

        assert len(rule["evaluate"]({"det_deviation": 1e-6}, 1e-9)) == 1
        assert rule["evaluate"]({"det_deviation": 1e-12}, 1e-9) == []

    def test_nan_retention(self, scan_rules):
        """Test failed retention nodes are reported"""
        rule = rule_by_id(scan_rules, "scan_nan_retention")

        violations = rule["evaluate"]({"nan_nodes": 2, "nodes": 16}, 0)
        assert "2 of 16" in violations[0]["message"]

    def test_trapped_leak(self, scan_rules):
        """Test trapped nodes must retain every trajectory"""
        rule = rule_by_id(scan_rules, "scan_trapped_leak")

        assert len(rule["evaluate"]({"min_trapped_retention": 0.9}, 1.0)) == 1
        assert rule["evaluate"]({"min_trapped_retention": 1.0}, 1.0) == []

    def test_map_finite(self, scan_rules):
        """Test non-finite map snapshots are reported"""
        rule = rule_by_id(scan_rules, "map_non_finite")

        assert len(rule["evaluate"]({"map_finite": False}, None)) == 1
        assert rule["evaluate"]({"map_finite": True}, None) == []


class TestRuleEngine:
    @pytest.fixture
    def rules(self):
        return ClassicalRules().rules

    def test_findings_carry_rule_fields(self, rules):
        """Test findings are built from the rule and the violation"""
        engine = RuleEngine()
        metrics = {"trajectories": 10, "energy_drift": 0.5}

        findings = engine.evaluate_all(rules, metrics, "demo")
        assert len(findings) == 1
        finding = findings[0]
        assert finding["scenario"] == "demo"
        assert finding["rule_id"] == "classical_energy_drift"
        assert finding["severity"] == "high"
        assert finding["value"] == 0.5
        assert finding["hint"]

    def test_disabled_rule_skipped(self, rules):
        """Test disabled rules produce no findings"""
        engine = RuleEngine({"classical_energy_drift": {"enabled": False}})

        assert engine.evaluate_all(rules, {"trajectories": 10, "energy_drift": 0.5}, "demo") == []

    def test_overrides_applied(self, rules):
        """Test severity and tolerance overrides replace the defaults"""
        engine = RuleEngine({"classical_energy_drift": {"severity": "low", "tolerance": 1.0}})
        metrics = {"trajectories": 10, "energy_drift": 0.5}

        assert engine.evaluate_all(rules, metrics, "demo") == []
        engine = RuleEngine({"classical_energy_drift": {"severity": "low", "tolerance": 0.1}})
        assert engine.evaluate_all(rules, metrics, "demo")[0]["severity"] == "low"

    def test_failing_rule_becomes_finding(self):
        """Test exceptions inside a rule are reported as rule errors"""

        def broken(metrics, tolerance):
            raise KeyError("missing")

        engine = RuleEngine()
        findings = engine.evaluate_rule({"id": "broken", "evaluate": broken}, {}, "demo")

        assert findings[0]["category"] == "rule_error"
        assert "Rule evaluation failed" in findings[0]["message"]

    def test_filter_by_severity(self):
        """Test filtering keeps findings at or above the threshold"""
        engine = RuleEngine()
        findings = [{"severity": s} for s in ("low", "medium", "high", "critical")]

        kept = engine.filter_by_severity(findings, "high")
        assert [f["severity"] for f in kept] == ["high", "critical"]


class TestRulesConfig:
    def test_shipped_config_covers_every_rule(self):
        """Test config/rules.yaml lists every rule with valid settings"""
        settings = load_rules_config(str(RULES_FILE))
        ids = {
            r["id"] for rule_set in (ClassicalRules(), QuantumRules(), ScanRules()) for r in rule_set.rules
        }

        assert set(settings) == ids
        assert all(s["severity"] in ("low", "medium", "high", "critical") for s in settings.values())
        assert settings["quantum_norm_gain"]["tolerance"] == pytest.approx(1e-9)

    def test_missing_file_gives_no_overrides(self):
        """Test a missing rules file leaves the defaults"""
        assert load_rules_config("/nonexistent/rules.yaml") == {}
