"""
Rule engine for evaluating physics-validity rules against run metrics
"""

from typing import Any, Dict, List, Optional

from utils.helpers import SEVERITY_LEVELS


class RuleEngine:
    def __init__(self, rules_config: Optional[Dict[str, Dict[str, Any]]] = None):
        self.severity_weights = dict(SEVERITY_LEVELS)
        self.rules_config = rules_config or {}

    def configure(self, rule: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        """Rule with its config overrides applied; None when disabled"""
        settings = self.rules_config.get(rule.get("id"), {})
        if not settings.get("enabled", True):
            return None
        configured = dict(rule)
        if "severity" in settings:
            configured["severity"] = settings["severity"]
        if "tolerance" in settings:
            configured["tolerance"] = settings["tolerance"]
        return configured

    def evaluate_rule(
        self, rule: Dict[str, Any], metrics: Dict[str, Any], scenario_name: str
    ) -> List[Dict[str, Any]]:
        """Evaluate a single rule against the metrics of one run"""
        findings = []

        try:
            evaluate_func = rule.get("evaluate")
            if not evaluate_func:
                return findings

            violations = evaluate_func(metrics, rule.get("tolerance"))

            for violation in violations:
                findings.append(
                    {
                        "scenario": scenario_name,
                        "rule_id": rule.get("id"),
                        "rule_name": rule.get("name"),
                        "severity": rule.get("severity", "medium"),
                        "category": rule.get("category"),
                        "message": violation.get("message", rule.get("description")),
                        "metric": violation.get("metric"),
                        "value": violation.get("value"),
                        "tolerance": rule.get("tolerance"),
                        "hint": rule.get("hint"),
                    }
                )

        except Exception as e:
            findings.append(
                {
                    "scenario": scenario_name,
                    "rule_id": rule.get("id", "unknown"),
                    "rule_name": rule.get("name", "Unknown Rule"),
                    "severity": "medium",
                    "category": "rule_error",
                    "message": f"Rule evaluation failed: {str(e)}",
                }
            )

        return findings

    def evaluate_all(
        self, rules: List[Dict[str, Any]], metrics: Dict[str, Any], scenario_name: str
    ) -> List[Dict[str, Any]]:
        findings = []
        for rule in rules:
            configured = self.configure(rule)
            if configured is not None:
                findings.extend(self.evaluate_rule(configured, metrics, scenario_name))
        return findings

    def filter_by_severity(
        self, findings: List[Dict[str, Any]], min_severity: str
    ) -> List[Dict[str, Any]]:
        """Filter findings by minimum severity level"""
        min_weight = self.severity_weights.get(min_severity, 2)

        return [
            finding
            for finding in findings
            if self.severity_weights.get(finding.get("severity", "medium"), 2)
            >= min_weight
        ]
