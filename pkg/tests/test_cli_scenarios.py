"""Tests for the scenario catalogue, the scenario manager and the command line."""
import numba
import pytest

from conelab.checks import CheckResult
from conelab.checks.registry import get_available_checks
from conelab.cli import build_parser, main, resolve_config
from conelab.config import parse_config_text
from conelab.errors import CriterionFailed
from conelab.reports import CHECKS_FILE, GEODESIC_FILE, LEDGER_FILE, MANIFEST_FILE, NORMS_FILE, read_csv
from conelab.scenario_manager import (
    ScenarioManager,
    ScenarioResult,
    apply_threads,
    describe_scenario,
    list_scenarios,
    run_scenario,
    scenario_config,
)

SHORT_RUN = """
[grid]
n_cells = 16

[data]
radius = 0.3
amplitude = 0.3

[run]
name = short
t_end = 0.1

[diagnostics]
checks = energy_conservation, finite_speed
energy_drift_tol = 5e-2
"""

GEOMETRY_RUN = """
[grid]
n_cells = 16

[run]
name = geometry
enabled = false

[diagnostics]
checks = eikonal_flat
"""


def config_for(text, directory):
    return parse_config_text(text).with_overrides(output_dir=str(directory))


class TestCatalogue:
    """Test the built-in scenarios."""

    def test_listing(self):
        names = list_scenarios()
        assert len(names) >= 9
        assert {"flat_sanity", "geometry_only", "identity_suite"} <= set(names)

    def test_every_scenario_validates(self):
        for name in list_scenarios():
            config = scenario_config(name)
            assert config.name == name
            assert config.diagnostics["checks"]

    def test_every_check_is_exercised(self):
        used = set()
        for name in list_scenarios():
            used.update(scenario_config(name).diagnostics["checks"])
        assert set(get_available_checks()) <= used

    def test_describe(self):
        text = describe_scenario("geometry_only")
        assert text.startswith("geometry_only")
        assert "comparison bounds" in text
        assert "[metric]" in text

    def test_unknown_scenario(self):
        with pytest.raises(KeyError):
            describe_scenario("supercritical")


class TestScenarioManager:
    """Test runs end to end on coarse grids."""

    def test_geometry_only(self, tmp_path):
        manager = ScenarioManager(config_for(GEOMETRY_RUN, tmp_path))
        result = manager.run()
        assert result.passed and result.exit_code == 0
        assert manager.context.ledger is None
        assert result.summary == {}
        assert {path.name for path in result.files} == {GEODESIC_FILE, CHECKS_FILE}

    def test_short_run(self, tmp_path):
        config = config_for(SHORT_RUN, tmp_path)
        result = run_scenario(config)
        assert result.passed
        assert result.summary["t_end"] == pytest.approx(0.1)
        names = {path.name for path in result.files}
        assert {MANIFEST_FILE, LEDGER_FILE, NORMS_FILE, CHECKS_FILE} <= names
        digest, columns, rows = read_csv(tmp_path / CHECKS_FILE)
        assert digest == config.config_hash()
        assert columns[0] == "criterion"
        assert [row[0] for row in rows] == ["energy_conservation", "finite_speed"]

    def test_failure_raises(self):
        failing = CheckResult("flux_agreement", False, 0.2, 0.05, "too far")
        result = ScenarioResult("short", "0" * 64, [CheckResult("finite_speed", True), failing])
        assert result.exit_code == 1
        assert result.failed == [failing]
        with pytest.raises(CriterionFailed) as err:
            result.raise_for_failure()
        assert err.value.criterion == "flux_agreement"

    def test_apply_threads(self, monkeypatch):
        calls = []
        monkeypatch.setattr(numba, "set_num_threads", calls.append)
        apply_threads(None)
        assert calls == []
        apply_threads(1)
        assert calls == [1]

    def test_reports_do_not_depend_on_threads(self, tmp_path):
        threads = numba.get_num_threads()
        outputs = []
        try:
            for count in (1, min(2, numba.config.NUMBA_NUM_THREADS)):
                directory = tmp_path / f"threads_{count}"
                run_scenario(config_for(SHORT_RUN, directory).with_overrides(threads=count))
                outputs.append({path.name: path.read_bytes() for path in sorted(directory.glob("*.csv"))})
        finally:
            numba.set_num_threads(threads)
        assert outputs[0]
        assert outputs[0] == outputs[1]


class TestCommandLine:
    """Test argument parsing and exit codes."""

    def test_parser(self):
        args = build_parser().parse_args(["--threads", "2", "run", "flat_sanity"])
        assert args.threads == 2
        assert args.config == "flat_sanity"
        args = build_parser().parse_args(["convergence", "identity_suite", "--levels", "4"])
        assert args.levels == 4

    def test_list(self, capsys):
        assert main(["list"]) == 0
        assert "flat_sanity" in capsys.readouterr().out

    def test_describe_unknown(self):
        assert main(["describe", "supercritical"]) == 2

    def test_config_error_exit_code(self, tmp_path):
        path = tmp_path / "empty.ini"
        path.write_text("[run]\nname = empty\n", encoding="utf-8")
        assert main(["run", str(path)]) == 2

    def test_run_file(self, tmp_path, capsys):
        path = tmp_path / "geometry.ini"
        path.write_text(GEOMETRY_RUN, encoding="utf-8")
        assert main(["--out", str(tmp_path / "out"), "run", str(path)]) == 0
        assert "PASS  eikonal_flat" in capsys.readouterr().out
        assert (tmp_path / "out" / CHECKS_FILE).exists()

    def test_scenario_output_directory(self):
        config = resolve_config("geometry_only", threads=2)
        assert config.threads == 2
        assert config.output_dir.name == "geometry_only"

    def test_levels_must_be_two(self):
        with pytest.raises(SystemExit):
            main(["convergence", "identity_suite", "--levels", "1"])
