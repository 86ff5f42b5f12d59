"""
Helper utilities
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from colorama import Fore, Style
from jinja2 import Environment
from tabulate import tabulate

from utils.logger import get_logger

logger = get_logger("config")

DEFAULT_SETTINGS: Dict[str, Any] = {
    "numerics": {
        "integrator": "yoshida4",
        "observe_interval": 0.1,
        "dt_safety": 0.05,
        "max_dt": 0.1,
        "monodromy_base_steps": 2048,
        "monodromy_tolerance": 1e-10,
        "monodromy_det_tolerance": 1e-9,
        "monodromy_max_steps": 1048576,
        "bloch_tolerance": 1e-8,
        "bloch_max_cutoff": 16,
    },
    "output": {
        "manifest_formats": ["json"],
        "html_report": True,
    },
    "runtime": {"workers": 1},
    "validation": {"fail_severity": "high"},
}

CONFIG_LOCATIONS = [
    "config/settings.yaml",
    "settings.yaml",
    ".branched-flow.yaml",
]

SEVERITY_LEVELS = {"low": 1, "medium": 2, "high": 3, "critical": 4}


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """Load configuration from file or return defaults"""

    if not config_path:
        for path in CONFIG_LOCATIONS:
            if Path(path).exists():
                config_path = path
                break

    if config_path and Path(config_path).exists():
        try:
            with open(config_path, "r") as f:
                if str(config_path).endswith(".json"):
                    file_config = json.load(f)
                else:
                    file_config = yaml.safe_load(f)

            return merge_configs(DEFAULT_SETTINGS, file_config or {})
        except Exception as e:
            logger.warning(f"Failed to load config from {config_path}: {e}")

    return merge_configs(DEFAULT_SETTINGS, {})


def load_rules_config(rules_path: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    """Per-rule overrides keyed by rule id (enabled, severity, tolerances)"""
    path = Path(rules_path) if rules_path else Path("config/rules.yaml")
    if not path.exists():
        return {}
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except Exception as e:
        logger.warning(f"Failed to load rules from {path}: {e}")
        return {}

    settings: Dict[str, Dict[str, Any]] = {}
    for group in (data.get("rules") or {}).values():
        # group -> category -> entries, or group -> entries
        categories = group.values() if isinstance(group, dict) else [group]
        for entries in categories:
            for entry in entries or []:
                entry = dict(entry)
                rule_id = entry.pop("rule_id", None)
                if rule_id:
                    settings[rule_id] = entry
    return settings


def merge_configs(default: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge configuration dictionaries"""
    result = default.copy()

    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = merge_configs(result[key], value)
        else:
            result[key] = value

    return result


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def summarize_findings(findings: List[Dict[str, Any]]) -> Dict[str, int]:
    summary = {"total_issues": 0, "critical": 0, "high": 0, "medium": 0, "low": 0}
    for finding in findings:
        severity = finding.get("severity", "medium").lower()
        summary["total_issues"] += 1
        summary[severity] = summary.get(severity, 0) + 1
    return summary


def save_report(results: Dict[str, Any], output_path: str) -> None:
    """Save a run manifest to file; the format follows the extension"""
    output_file = Path(output_path)

    if output_file.suffix.lower() in [".yaml", ".yml"]:
        with open(output_file, "w") as f:
            yaml.safe_dump(json.loads(json.dumps(results, default=str)), f, sort_keys=False)

    elif output_file.suffix.lower() == ".html":
        generate_html_report(results, output_file)

    else:
        with open(output_file, "w") as f:
            json.dump(results, f, indent=2, sort_keys=True, default=str)


HTML_TEMPLATE = """<!DOCTYPE html>
<html>
<head>
    <title>{{ manifest.scenario }} - run report</title>
    <style>
        body { font-family: Arial, sans-serif; margin: 20px; }
        .header { background-color: #f0f0f0; padding: 20px; margin-bottom: 20px; }
        .summary { display: flex; gap: 20px; margin-bottom: 30px; }
        .metric { background-color: #fff; border: 1px solid #ddd; padding: 15px; border-radius: 5px; }
        .critical { border-left: 5px solid #dc3545; }
        .high { border-left: 5px solid #fd7e14; }
        .medium { border-left: 5px solid #ffc107; }
        .low { border-left: 5px solid #28a745; }
        .finding { margin: 10px 0; padding: 15px; border-radius: 5px; }
        table { border-collapse: collapse; }
        td, th { border: 1px solid #ddd; padding: 4px 10px; text-align: left; }
    </style>
</head>
<body>
    <div class="header">
        <h1>{{ manifest.scenario }} ({{ manifest.kind }})</h1>
        <p>Status: <strong>{{ manifest.status }}</strong> &middot; Generated: {{ manifest.timestamp }}
           &middot; Wall time: {{ "%.2f"|format(manifest.wall_time_s) }} s</p>
        <p>Inputs hash: <code>{{ manifest.inputs_hash }}</code></p>
    </div>

    <div class="summary">
        {% for level in ["critical", "high", "medium", "low"] %}
        <div class="metric {{ level }}">
            <h3>{{ level|title }}</h3>
            <p style="font-size: 2em; margin: 0;">{{ manifest.summary[level] }}</p>
        </div>
        {% endfor %}
    </div>

    <h2>Metrics</h2>
    <table>
        {% for key, value in manifest.metrics|dictsort %}
        <tr><th>{{ key }}</th><td>{{ value }}</td></tr>
        {% endfor %}
    </table>

    <h2>Findings</h2>
    {% for finding in manifest.findings %}
    <div class="finding {{ finding.severity }}">
        <h4>{{ finding.rule_name }}</h4>
        <p>{{ finding.message }}</p>
        {% if finding.hint %}<p><em>{{ finding.hint }}</em></p>{% endif %}
    </div>
    {% else %}
    <p>No findings.</p>
    {% endfor %}

    <h2>Artifacts</h2>
    <table>
        <tr><th>Path</th><th>Bytes</th><th>SHA-256</th></tr>
        {% for artifact in manifest.artifacts %}
        <tr><td>{{ artifact.path }}</td><td>{{ artifact.bytes }}</td><td><code>{{ artifact.sha256 }}</code></td></tr>
        {% endfor %}
    </table>
</body>
</html>
"""


def generate_html_report(results: Dict[str, Any], output_file: Path) -> None:
    """Render a run manifest as a standalone HTML page"""
    env = Environment(autoescape=True)
    template = env.from_string(HTML_TEMPLATE)
    defaults = {
        "scenario": "unknown",
        "kind": "unknown",
        "status": "unknown",
        "timestamp": "unknown",
        "wall_time_s": 0.0,
        "inputs_hash": "",
        "metrics": {},
        "findings": [],
        "artifacts": [],
        "summary": summarize_findings(results.get("findings", [])),
    }
    output_file.write_text(template.render(manifest=merge_configs(defaults, results)))


SEVERITY_COLORS = {
    "critical": Fore.RED + Style.BRIGHT,
    "high": Fore.YELLOW,
    "medium": Fore.BLUE,
    "low": Fore.GREEN,
}


def format_finding_for_console(finding: Dict[str, Any]) -> str:
    """Format a finding for console output"""
    severity = finding.get("severity", "medium").lower()
    color = SEVERITY_COLORS.get(severity, "")
    return (
        f"{color}[{severity.upper()}]{Style.RESET_ALL} "
        f"{finding.get('rule_id', 'unknown')}: {finding.get('message', 'No message')}"
    )


def format_metrics_table(metrics: Dict[str, Any]) -> str:
    rows = []
    for key in sorted(metrics):
        value = metrics[key]
        if isinstance(value, float):
            value = f"{value:.6g}"
        elif isinstance(value, (dict, list)):
            value = json.dumps(value, default=str)
        rows.append([key, value])
    return tabulate(rows, headers=["metric", "value"], tablefmt="simple")
