"""Tests for INI parsing, schema validation and the config hash."""
import pytest
import voluptuous as vol

from conelab.config import (
    boolean,
    config_from_sections,
    float_list,
    int_triple,
    load_config,
    parameter_value,
    parse_config_text,
    triple,
    validate_sections,
)
from conelab.const import ERROR_CODES
from conelab.errors import ConfigError

MINIMAL = """
[grid]
n_cells = 24

[metric]
name = wavy
amplitude = 0.2
"""


class TestConverters:
    """Test the field converters used by the schemas."""

    def test_triple(self):
        assert triple("0.5") == (0.5, 0.5, 0.5)
        assert triple("0, 0.1, -2") == (0.0, 0.1, -2.0)
        assert triple([1, 2, 3]) == (1.0, 2.0, 3.0)
        with pytest.raises(vol.Invalid):
            triple("1, 2")

    def test_int_triple(self):
        assert int_triple("16") == (16, 16, 16)
        assert int_triple("8, 16, 32") == (8, 16, 32)
        with pytest.raises(vol.Invalid):
            int_triple("1")
        with pytest.raises(vol.Invalid):
            int_triple("16.5")

    @pytest.mark.parametrize("text, expected", [("yes", True), ("On", True), ("1", True), ("false", False), ("off", False)])
    def test_boolean(self, text, expected):
        assert boolean(text) is expected

    def test_boolean_rejects_text(self):
        with pytest.raises(vol.Invalid):
            boolean("maybe")

    def test_float_list(self):
        assert float_list("6, 8, 12") == (6.0, 8.0, 12.0)
        with pytest.raises(vol.Invalid):
            float_list("6, eight")

    def test_parameter_value(self):
        assert parameter_value("none") is None
        assert parameter_value("0.25") == 0.25
        assert parameter_value("0.5, 0, 0") == (0.5, 0.0, 0.0)
        assert parameter_value("sphere") == "sphere"
        assert parameter_value(3) == 3


class TestValidation:
    """Test section validation and defaults."""

    def test_defaults(self):
        config = config_from_sections({"grid": {}})
        assert config.grid["n_cells"] == (32, 32, 32)
        assert config.grid["lower"] == (-1.0, -1.0, -1.0)
        assert config.metric.name == "identity"
        assert config.obstacle.name == "none"
        assert config.name == "run"
        assert config.seed == 0
        assert config.threads is None
        assert config.run["nonlinear"] is True
        assert config.geodesic["mode"] == "manifold"
        assert config.diagnostics["checks"] == ()
        assert config.norms["q"] == (6.0, 12.0)

    def test_apex_time(self):
        assert config_from_sections({"grid": {}, "run": {"t_end": "0.3"}}).apex_time == pytest.approx(0.3)
        config = config_from_sections({"grid": {}, "cone": {"t0": "0.2"}})
        assert config.apex_time == pytest.approx(0.2)

    def test_missing_grid(self):
        is_valid, error_msg = validate_sections({"run": {}})
        assert not is_valid
        assert ERROR_CODES["CONFIG_SECTION_MISSING"] in error_msg
        with pytest.raises(ConfigError) as err:
            config_from_sections({})
        assert "[grid]" in str(err.value)
        assert err.value.exit_code == 2

    def test_unknown_section(self):
        is_valid, error_msg = validate_sections({"grid": {}, "solver": {}})
        assert not is_valid
        assert "solver" in error_msg

    @pytest.mark.parametrize(
        "sections",
        [
            {"grid": {}, "metric": {"name": "hyperbolic"}},
            {"grid": {}, "obstacle": {"name": "torus"}},
            {"grid": {}, "diagnostics": {"checks": "energy_conservation, vibes"}},
        ],
    )
    def test_unknown_names(self, sections):
        with pytest.raises(ConfigError) as err:
            config_from_sections(sections)
        assert ERROR_CODES["UNKNOWN_NAME"] in str(err.value)

    def test_schema_error_names_section(self):
        with pytest.raises(ConfigError) as err:
            config_from_sections({"grid": {}, "run": {"cfl_safety": "1.5"}})
        assert str(err.value).startswith("[run]")

    def test_empty_window(self):
        with pytest.raises(ConfigError):
            config_from_sections({"grid": {}, "run": {"t_start": "0.5", "t_end": "0.5"}})
        config = config_from_sections({"grid": {}, "run": {"t_end": "0", "enabled": "false"}})
        assert config.run["enabled"] is False

    def test_metric_parameters(self):
        config = parse_config_text(MINIMAL)
        assert config.metric.name == "wavy"
        assert config.metric.parameters == {"amplitude": 0.2}
        assert config.grid["n_cells"] == (24, 24, 24)


class TestParsing:
    """Test INI parsing errors and file loading."""

    def test_missing_header(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("n_cells = 16\n")
        assert err.value.line == 1
        assert ERROR_CODES["CONFIG_PARSE"] in str(err.value)

    def test_duplicate_option(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("[grid]\nn_cells = 16\nn_cells = 32\n")
        assert err.value.line == 3

    def test_load_config(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(MINIMAL, encoding="utf-8")
        assert load_config(path).metric.name == "wavy"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            load_config(tmp_path / "absent.ini")
        assert "Cannot read" in str(err.value)


class TestConfigHash:
    """Test the canonical text and its digest."""

    def test_hash_is_stable(self):
        assert parse_config_text(MINIMAL).config_hash() == parse_config_text(MINIMAL).config_hash()
        assert len(parse_config_text(MINIMAL).config_hash()) == 64

    def test_threads_and_output_are_not_hashed(self):
        config = parse_config_text(MINIMAL)
        other = config.with_overrides(threads=4, output_dir="elsewhere")
        assert other.threads == 4
        assert str(other.output_dir) == "elsewhere"
        assert config.threads is None
        assert other.config_hash() == config.config_hash()

    def test_hash_follows_values(self):
        config = parse_config_text(MINIMAL)
        changed = parse_config_text(MINIMAL.replace("0.2", "0.25"))
        assert changed.config_hash() != config.config_hash()
        assert "metric.amplitude=0.2" in config.canonical_text()


class TestVariant:
    """Test companion configurations."""

    def test_coarsen_and_scale(self):
        config = parse_config_text(MINIMAL + "\n[data]\namplitude = 0.4\nvelocity_amplitude = 0.1\n")
        companion = config.variant(coarsen=2, data_scale=2.0)
        assert companion.grid["n_cells"] == (12, 12, 12)
        assert companion.data["amplitude"] == pytest.approx(0.8)
        assert companion.data["velocity_amplitude"] == pytest.approx(0.2)
        assert companion.name == f"{config.name}_companion"
        assert companion.diagnostics["checks"] == ()
        assert companion.output["checkpoint_cadence"] == 0
        assert companion.metric == config.metric
        assert config.grid["n_cells"] == (24, 24, 24)

    def test_geometry_only(self):
        config = parse_config_text(MINIMAL)
        assert config.run["enabled"]
        assert not config.variant(geometry_only=True).run["enabled"]
        assert config.variant(coarsen=100).grid["n_cells"] == (2, 2, 2)

    def test_invalid_coarsening(self):
        with pytest.raises(ValueError):
            parse_config_text(MINIMAL).variant(coarsen=0)
