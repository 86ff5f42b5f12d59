"""
Tests for scenario parsing and validation
"""

import tempfile
from pathlib import Path

import pytest

from core.runner import inputs_hash
from parsers.scenario import (
    EXPERIMENT_KINDS,
    ScenarioError,
    ScenarioParser,
    parse_scenario,
    serialize_scenario,
)

SCENARIO_DIR = Path(__file__).parent.parent / "docs" / "examples" / "scenarios"

MINIMAL = """
scenario:
  name: tiny
  kind: classical-density
numerics:
  dt: 0.01
  grid:
    nx: 16
    ny: 16
"""

QUANTUM = """
scenario:
  name: waves
  kind: quantum-branched
initial_state:
  kind: gaussian
  sigma0: 2.0
numerics:
  dt: 0.05
  grid:
    nx: 64
    ny: 64
    extent: [-16, 16, -16, 16]
"""


class TestScenarioParser:
    def test_minimal_scenario_gets_defaults(self):
        """Test omitted keys are filled with their defaults"""
        scenario = parse_scenario(MINIMAL)

        assert scenario.name == "tiny"
        assert scenario.kind == "classical-density"
        assert scenario.seed == 0
        assert scenario["numerics"]["integrator"] is None
        assert scenario["numerics"]["grid"]["extent"] == [-10.0, 10.0, -10.0, 10.0]
        assert scenario["initial_state"]["kind"] == "point-source"
        assert set(scenario.to_dict()) >= {"scenario", "potential", "outputs"}

    def test_unknown_key_suggests_nearest(self):
        """Test misspelled keys are reported with a suggestion"""
        text = MINIMAL.replace("dt: 0.01", "dtt: 0.01")

        with pytest.raises(ScenarioError) as info:
            parse_scenario(text)
        assert any("numerics.dtt: unknown key (did you mean 'dt'?)" in e for e in info.value.errors)

    def test_errors_are_collected(self):
        """Test every problem is reported in one pass"""
        text = MINIMAL + "potential:\n  kind: cosin\n  amplitude: big\n"

        with pytest.raises(ScenarioError) as info:
            parse_scenario(text)
        errors = info.value.errors
        assert len(errors) == 2
        assert any(e.startswith("potential.kind") and "cosine" in e for e in errors)
        assert any(e.startswith("potential.amplitude") for e in errors)

    def test_physics_checked_beside_parse_errors(self):
        """Test cross-field checks still run on sections that parsed cleanly"""
        text = MINIMAL.replace("dt: 0.01", "dt: -0.01") + "potential:\n  kind: cosine\n  amplitude: big\n"

        with pytest.raises(ScenarioError) as info:
            parse_scenario(text)
        errors = info.value.errors
        assert any(e.startswith("potential.amplitude: expected a finite number") for e in errors)
        assert "numerics.dt: must be > 0, got -0.01" in errors

    def test_divergence_time_must_be_positive(self):
        """Test a non-positive divergence horizon is rejected"""
        with pytest.raises(ScenarioError) as info:
            parse_scenario(MINIMAL, ["analysis.divergence_time=0"])
        assert "analysis.divergence_time: must be > 0, got 0.0" in info.value.errors

    def test_missing_required_keys(self):
        """Test name and kind are required"""
        with pytest.raises(ScenarioError) as info:
            parse_scenario("scenario: {}\n")
        assert "scenario.name: required" in info.value.errors
        assert "scenario.kind: required" in info.value.errors

    def test_unknown_kind(self):
        """Test experiment kinds are checked"""
        with pytest.raises(ScenarioError):
            parse_scenario("scenario:\n  name: x\n  kind: chaos\n")

    def test_invalid_yaml(self):
        """Test YAML syntax errors become scenario errors"""
        with pytest.raises(ScenarioError, match="not valid YAML"):
            parse_scenario("scenario: [unclosed\n")

    def test_overrides(self):
        """Test section.key=value overrides are parsed as YAML"""
        scenario = parse_scenario(
            MINIMAL, overrides=["numerics.steps=50", "numerics.grid.nx=32", "scenario.seed=9"]
        )

        assert scenario["numerics"]["steps"] == 50
        assert scenario["numerics"]["grid"]["nx"] == 32
        assert scenario.seed == 9

    def test_malformed_override(self):
        """Test overrides need a dotted path and a value"""
        with pytest.raises(ScenarioError):
            parse_scenario(MINIMAL, overrides=["steps"])
        with pytest.raises(ScenarioError):
            parse_scenario(MINIMAL, overrides=["steps=5"])

    def test_parser_reads_file(self):
        """Test ScenarioParser loads scenarios from disk"""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "tiny.yaml"
            path.write_text(MINIMAL)
            scenario = ScenarioParser().parse(path)

        assert scenario.name == "tiny"

    def test_missing_file(self):
        """Test unreadable files raise a scenario error"""
        with pytest.raises(ScenarioError):
            ScenarioParser().parse(Path("/nonexistent/scenario.yaml"))


class TestKindChecks:
    def test_quantum_scenario_valid(self):
        """Test a resolved Gaussian packet passes"""
        scenario = parse_scenario(QUANTUM)

        assert scenario["initial_state"]["sigma0"] == 2.0

    def test_quantum_needs_dt(self):
        """Test wave propagation needs an explicit time step"""
        with pytest.raises(ScenarioError, match="numerics.dt: required"):
            parse_scenario(QUANTUM.replace("  dt: 0.05\n", ""))

    def test_unresolved_packet(self):
        """Test sigma0 must exceed the grid spacing"""
        with pytest.raises(ScenarioError, match="sigma0"):
            parse_scenario(QUANTUM.replace("sigma0: 2.0", "sigma0: 0.25"))

    def test_thin_absorber(self):
        """Test absorbing layers need at least four cells"""
        with pytest.raises(ScenarioError, match="border_width"):
            parse_scenario(QUANTUM + "absorber:\n  border_width: 1.0\n")

    def test_disk_strength_range(self):
        """Test a disk's own strength must lie in [0, 1)"""
        disk = "absorber:\n  disk:\n    radius: 3.0\n    width: 3.0\n    strength: 1.5\n"
        with pytest.raises(ScenarioError, match="absorber.disk.strength"):
            parse_scenario(QUANTUM + disk)

    def test_shadow_needs_disk(self):
        """Test shadow comparisons need an absorbing disk"""
        with pytest.raises(ScenarioError, match="absorber.disk: required"):
            parse_scenario(QUANTUM.replace("quantum-branched", "shadow-comparison"))

    def test_superwire_needs_energies(self):
        """Test superwire runs need at least one filter energy"""
        with pytest.raises(ScenarioError, match="energy_filter.energies"):
            parse_scenario(QUANTUM.replace("quantum-branched", "superwire"))

    def test_classical_rejects_wave_source(self):
        """Test classical runs need a classical source"""
        text = MINIMAL + "initial_state:\n  kind: plane-wave\n"

        with pytest.raises(ScenarioError, match="not a classical source"):
            parse_scenario(text)

    def test_scan_ranges(self):
        """Test scan windows must be ordered"""
        text = "scenario:\n  name: s\n  kind: stability-scan\nscan:\n  a_range: [2.0, 1.0]\n"

        with pytest.raises(ScenarioError, match="scan.a_range"):
            parse_scenario(text)

    def test_snapshot_marks(self):
        """Test map snapshots must be sorted and inside the run"""
        text = "scenario:\n  name: m\n  kind: manifold-map\nmap:\n  n_steps: 3\n  snapshot_at: [0, 5]\n"

        with pytest.raises(ScenarioError, match="map.snapshot_at"):
            parse_scenario(text)


class TestShippedScenarios:
    @pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.yaml")), ids=lambda p: p.stem)
    def test_shipped_scenarios_validate(self, path):
        """Test every example scenario is valid"""
        scenario = ScenarioParser().parse(path)

        assert scenario.kind in EXPERIMENT_KINDS

    def test_every_kind_has_an_example(self):
        """Test the examples cover all experiment kinds"""
        kinds = {ScenarioParser().parse(p).kind for p in SCENARIO_DIR.glob("*.yaml")}

        assert kinds == set(EXPERIMENT_KINDS)


class TestInputsHash:
    def test_hash_is_deterministic(self):
        """Test equal scenarios hash equally and edits change the hash"""
        first = parse_scenario(MINIMAL)
        second = parse_scenario(MINIMAL)
        changed = parse_scenario(MINIMAL, overrides=["numerics.steps=7"])

        assert inputs_hash(first) == inputs_hash(second)
        assert inputs_hash(first) != inputs_hash(changed)
        assert len(inputs_hash(first)) == 64

    def test_serialized_scenario_reparses(self):
        """Test the canonical form parses back to the same scenario"""
        scenario = parse_scenario(QUANTUM)

        assert parse_scenario(serialize_scenario(scenario)).to_dict() == scenario.to_dict()
