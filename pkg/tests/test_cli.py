"""
Tests for the command-line interface
"""

import json
from pathlib import Path

import click
import numpy as np
import pytest
from click.testing import CliRunner

from main import EXIT_FINDINGS, cli, parse_grid_spec
from parsers.grid_file import write_grid

SCENARIO_DIR = Path(__file__).parent.parent / "docs" / "examples" / "scenarios"

MAP = """
scenario:
  name: cli-map
  kind: manifold-map
map:
  K: 0.5
  n_steps: 2
  points_per_curve: 10
"""

CLASSICAL = """
scenario:
  name: cli-classical
  kind: classical-density
potential:
  kind: cosine
initial_state:
  speed: 3.0
  n: 20
numerics:
  dt: 0.01
  steps: 50
  grid:
    nx: 16
    ny: 16
"""

STRICT_RULES = """
rules:
  classical:
    coverage:
      - rule_id: classical_dropped_samples
        severity: critical
        tolerance: -1.0
"""


@pytest.fixture
def runner():
    return CliRunner()


class TestValidateCommand:
    def test_shipped_scenario_is_valid(self, runner):
        """Test validate accepts an example scenario"""
        result = runner.invoke(cli, ["validate", str(SCENARIO_DIR / "superwire.yaml")])

        assert result.exit_code == 0
        assert "✅ superwire (superwire) is valid" in result.output
        assert "Inputs hash:" in result.output

    def test_invalid_scenario(self, runner):
        """Test validate lists problems and exits 1"""
        with runner.isolated_filesystem():
            Path("bad.yaml").write_text("scenario:\n  name: x\n  kind: quantum\n")
            result = runner.invoke(cli, ["validate", "bad.yaml"])

        assert result.exit_code == 1
        assert "Invalid scenario" in result.output
        assert "scenario.kind" in result.output

    def test_override_applied(self, runner):
        """Test overrides can make a scenario invalid"""
        result = runner.invoke(
            cli,
            ["validate", str(SCENARIO_DIR / "stability_scan.yaml"), "--override", "scan.omega=0"],
        )

        assert result.exit_code == 1
        assert "scan.omega" in result.output


class TestRunCommand:
    def test_run_writes_manifest(self, runner):
        """Test run writes a run directory and exits 0 on a clean run"""
        with runner.isolated_filesystem():
            Path("map.yaml").write_text(MAP)
            result = runner.invoke(cli, ["run", "map.yaml", "--out", "out"])

            assert result.exit_code == 0, result.output
            manifest = json.loads(Path("out/manifest.json").read_text())
            assert manifest["status"] == "ok"
            assert "Run passed validity checks" in result.output

    def test_default_run_directory(self, runner):
        """Test runs default to runs/<scenario name>"""
        with runner.isolated_filesystem():
            Path("map.yaml").write_text(MAP)
            result = runner.invoke(cli, ["run", "map.yaml"])

            assert result.exit_code == 0, result.output
            assert Path("runs/cli-map/manifest.json").exists()

    def test_log_file(self, runner):
        """Test --log-file captures debug records from the physics modules"""
        with runner.isolated_filesystem():
            Path("map.yaml").write_text(MAP)
            result = runner.invoke(cli, ["--log-file", "run.log", "run", "map.yaml", "-o", "out"])

            assert result.exit_code == 0, result.output
            assert "branched_flow.stdmap - DEBUG - Manifold map" in Path("run.log").read_text()

    def test_findings_exit_code(self, runner):
        """Test a failing validity rule exits with the findings code"""
        with runner.isolated_filesystem():
            Path("classical.yaml").write_text(CLASSICAL)
            Path("rules.yaml").write_text(STRICT_RULES)
            result = runner.invoke(
                cli, ["run", "classical.yaml", "--out", "out", "--rules", "rules.yaml"]
            )

        assert result.exit_code == EXIT_FINDINGS
        assert "classical_dropped_samples" in result.output

    def test_invalid_scenario_exits_1(self, runner):
        """Test run rejects invalid scenarios before simulating"""
        with runner.isolated_filesystem():
            Path("map.yaml").write_text(MAP)
            result = runner.invoke(cli, ["run", "map.yaml", "--override", "map.K=fast"])

        assert result.exit_code == 1
        assert "map.K" in result.output


class TestRenderCommand:
    def test_render_grid(self, runner):
        """Test render writes an image next to the grid"""
        with runner.isolated_filesystem():
            write_grid("density.bflow", np.arange(12.0).reshape(3, 4), "density", (0, 4, 0, 3))
            result = runner.invoke(cli, ["render", "density.bflow", "--style", "gray-density"])

            assert result.exit_code == 0, result.output
            assert Path("density.pgm").read_bytes().startswith(b"P5\n4 3\n255\n")
        assert "Range [0, 11], NaN pixels: 0" in result.output

    def test_render_complex_grid(self, runner):
        """Test complex grids render their real part in the signed style"""
        with runner.isolated_filesystem():
            psi = np.exp(1j * np.linspace(0, 3, 16)).reshape(4, 4)
            write_grid("psi.bflow", psi, "psi", (0, 1, 0, 1))
            result = runner.invoke(
                cli, ["render", "psi.bflow", "-s", "signed-redblue", "-o", "psi.ppm"]
            )

            assert result.exit_code == 0, result.output
            assert Path("psi.ppm").read_bytes().startswith(b"P6")

    def test_render_bad_file(self, runner):
        """Test malformed grid files exit 1"""
        with runner.isolated_filesystem():
            Path("broken.bflow").write_bytes(b"NOTAGRID\n\n")
            result = runner.invoke(cli, ["render", "broken.bflow", "-s", "gray-density"])

        assert result.exit_code == 1
        assert "Error rendering" in result.output

    def test_overlay_needs_background(self, runner):
        """Test overlay rendering without a background fails cleanly"""
        with runner.isolated_filesystem():
            write_grid("density.bflow", np.ones((2, 2)), "density", (0, 1, 0, 1))
            result = runner.invoke(cli, ["render", "density.bflow", "-s", "overlay-potential"])

        assert result.exit_code == 1


class TestScanCommand:
    def test_parse_grid_spec(self):
        """Test the scan window becomes scenario overrides"""
        overrides = parse_grid_spec("-1:5:40,0:2:30")

        assert overrides == [
            "scan.a_range=[-1.0, 5.0]",
            "scan.q_range=[0.0, 2.0]",
            "scan.resolution=[40, 30]",
        ]

    def test_parse_grid_spec_invalid(self):
        """Test malformed windows are rejected"""
        with pytest.raises(click.BadParameter):
            parse_grid_spec("0:1:10")
        with pytest.raises(click.BadParameter):
            parse_grid_spec("0:1:x,0:1:10")

    def test_scan_runs_window(self, runner):
        """Test scan overrides the window of a stability scenario"""
        with runner.isolated_filesystem():
            Path("scan.yaml").write_text("scenario:\n  name: cli-scan\n  kind: stability-scan\n")
            result = runner.invoke(cli, ["scan", "scan.yaml", "--grid", "0:2:3,0:1:2", "-o", "out"])

            assert result.exit_code == 0, result.output
            manifest = json.loads(Path("out/manifest.json").read_text())
            assert manifest["metrics"]["nodes"] == 6

    def test_scan_rejects_other_kinds(self, runner):
        """Test scan needs a scan scenario"""
        with runner.isolated_filesystem():
            Path("map.yaml").write_text(MAP)
            result = runner.invoke(cli, ["scan", "map.yaml", "--grid", "0:1:2,0:1:2"])

        assert result.exit_code == 1
        assert "Error during scan" in result.output
