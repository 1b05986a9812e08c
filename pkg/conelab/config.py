"""INI run configuration validated with voluptuous schemas."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import voluptuous as vol

from .const import (
    CONF_CONE,
    CONF_DATA,
    CONF_DIAGNOSTICS,
    CONF_GEODESIC,
    CONF_GRID,
    CONF_METRIC,
    CONF_NAME,
    CONF_NORMS,
    CONF_OBSTACLE,
    CONF_OUTPUT,
    CONF_RUN,
    CONF_SEED,
    CONF_THREADS,
    DATA_KINDS,
    DATA_KIND_BUMP,
    DEFAULT_BAND_CONSTANT,
    DEFAULT_CFL_SAFETY,
    DEFAULT_DATA_CLEARANCE,
    DEFAULT_DIAGNOSTIC_CADENCE,
    DEFAULT_EIKONAL_INIT_RADIUS,
    DEFAULT_EIKONAL_MAX_ITERATIONS,
    DEFAULT_EIKONAL_TOL,
    DEFAULT_ENERGY_DRIFT_TOL,
    DEFAULT_FINITE_SPEED_CADENCE,
    DEFAULT_FLUX_AGREEMENT_TOL,
    DEFAULT_QUADRATURE_TOL,
    DEFAULT_RESIDUAL_FACTOR,
    DEFAULT_RHO_MAX_FRACTION,
    DEFAULT_TANGENCY_RADIUS,
    DISTANCE_MANIFOLD,
    DISTANCE_MODES,
    ERROR_CODES,
    KNOWN_SECTIONS,
    REQUIRED_SECTIONS,
)
from .errors import ConfigError
from .metric.registry import get_available_metrics
from .obstacles import OBSTACLE_NONE, ObstacleRegistry, initialize_obstacles

_LOGGER = logging.getLogger(__name__)

# keys left out of the hash: they must not change any output byte
UNHASHED_KEYS = {(CONF_RUN, CONF_THREADS), (CONF_OUTPUT, "directory")}


def _split(value: Any) -> List[str]:
    if isinstance(value, (list, tuple)):
        return [str(v).strip() for v in value]
    return [part.strip() for part in str(value).split(",") if part.strip()]


def triple(value: Any) -> Tuple[float, float, float]:
    """'0.5' or '0, 0.1, 0.2' (or a sequence) as three floats."""
    parts = [float(p) for p in _split(value)]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise vol.Invalid(f"expected one or three numbers, got {value!r}")
    return tuple(parts)


def int_triple(value: Any) -> Tuple[int, int, int]:
    parts = triple(value)
    if any(p != int(p) or p < 2 for p in parts):
        raise vol.Invalid(f"expected integers >= 2, got {value!r}")
    return tuple(int(p) for p in parts)


def boolean(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise vol.Invalid(f"expected a boolean, got {value!r}")


def name_list(value: Any) -> Tuple[str, ...]:
    return tuple(_split(value))


def float_list(value: Any) -> Tuple[float, ...]:
    try:
        return tuple(float(p) for p in _split(value))
    except ValueError as err:
        raise vol.Invalid(f"expected numbers, got {value!r}") from err


def parameter_value(value: Any) -> Any:
    """Free-form model parameter: none, a number or a comma-separated point."""
    if not isinstance(value, str):
        return value
    text = value.strip()
    if text.lower() == "none":
        return None
    parts = _split(text)
    try:
        numbers = [float(p) for p in parts]
    except ValueError:
        return text
    return numbers[0] if len(numbers) == 1 else tuple(numbers)


_POSITIVE = vol.All(vol.Coerce(float), vol.Range(min=0.0, min_included=False))
_NONNEGATIVE = vol.All(vol.Coerce(float), vol.Range(min=0.0))
_COUNT = vol.All(vol.Coerce(int), vol.Range(min=1))

GRID_SCHEMA = vol.Schema(
    {
        vol.Optional("n_cells", default=32): int_triple,
        vol.Optional("lower", default=-1.0): triple,
        vol.Optional("upper", default=1.0): triple,
    }
)

DATA_SCHEMA = vol.Schema(
    {
        vol.Optional("kind", default=DATA_KIND_BUMP): vol.In(sorted(DATA_KINDS)),
        vol.Optional("center", default=0.0): triple,
        vol.Optional("radius", default=0.3): _POSITIVE,
        vol.Optional("amplitude", default=1.0): vol.Coerce(float),
        vol.Optional("velocity_amplitude", default=0.0): vol.Coerce(float),
        vol.Optional("shell_radius", default=None): vol.Any(None, _POSITIVE),
        vol.Optional("count", default=4): _COUNT,
        vol.Optional("clearance", default=DEFAULT_DATA_CLEARANCE): _NONNEGATIVE,
    }
)

CONE_SCHEMA = vol.Schema(
    {
        vol.Optional("t0", default=None): vol.Any(None, vol.Coerce(float)),
        vol.Optional("x0", default=0.0): triple,
        vol.Optional("delta", default=0.0): _NONNEGATIVE,
        vol.Optional("record_trace", default=False): boolean,
    }
)

RUN_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_NAME, default="run"): str,
        vol.Optional(CONF_SEED, default=0): vol.Coerce(int),
        vol.Optional(CONF_THREADS, default=None): vol.Any(None, _COUNT),
        vol.Optional("enabled", default=True): boolean,
        vol.Optional("t_start", default=0.0): vol.Coerce(float),
        vol.Optional("t_end", default=0.5): vol.Coerce(float),
        vol.Optional("cfl_safety", default=DEFAULT_CFL_SAFETY): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, max=1.0, min_included=False)
        ),
        vol.Optional("nonlinear", default=True): boolean,
    }
)

GEODESIC_SCHEMA = vol.Schema(
    {
        vol.Optional("mode", default=DISTANCE_MANIFOLD): vol.In(sorted(DISTANCE_MODES)),
        vol.Optional("tol", default=DEFAULT_EIKONAL_TOL): _POSITIVE,
        vol.Optional("max_iterations", default=DEFAULT_EIKONAL_MAX_ITERATIONS): _COUNT,
        vol.Optional("init_radius", default=DEFAULT_EIKONAL_INIT_RADIUS): _POSITIVE,
        vol.Optional("residual_factor", default=DEFAULT_RESIDUAL_FACTOR): _POSITIVE,
        vol.Optional("rho_max_fraction", default=DEFAULT_RHO_MAX_FRACTION): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, max=1.0, min_included=False)
        ),
        vol.Optional("stencil_radius", default=2): _COUNT,
    }
)

DIAGNOSTICS_SCHEMA = vol.Schema(
    {
        vol.Optional("cadence", default=DEFAULT_DIAGNOSTIC_CADENCE): _COUNT,
        vol.Optional("finite_speed_cadence", default=DEFAULT_FINITE_SPEED_CADENCE): _COUNT,
        vol.Optional("checks", default=()): name_list,
        vol.Optional("energy_drift_tol", default=DEFAULT_ENERGY_DRIFT_TOL): _POSITIVE,
        vol.Optional("quadrature_tol", default=DEFAULT_QUADRATURE_TOL): _POSITIVE,
        vol.Optional("flux_agreement_tol", default=DEFAULT_FLUX_AGREEMENT_TOL): _POSITIVE,
        vol.Optional("band_constant", default=DEFAULT_BAND_CONSTANT): _POSITIVE,
        vol.Optional("tangency_radius", default=DEFAULT_TANGENCY_RADIUS): _POSITIVE,
        vol.Optional("refinement_base", default=16): vol.All(vol.Coerce(int), vol.Range(min=4)),
        vol.Optional("refinement_levels", default=3): vol.All(vol.Coerce(int), vol.Range(min=2)),
    }
)

NORMS_SCHEMA = vol.Schema(
    {
        vol.Optional("q", default=(6.0, 12.0)): float_list,
        vol.Optional("region", default="strip"): vol.In(["strip", "cone", "expanded_cone"]),
    }
)

OUTPUT_SCHEMA = vol.Schema(
    {
        vol.Optional("directory", default="out"): str,
        vol.Optional("checkpoint_cadence", default=0): vol.All(vol.Coerce(int), vol.Range(min=0)),
    }
)

SECTION_SCHEMAS = {
    CONF_GRID: GRID_SCHEMA,
    CONF_DATA: DATA_SCHEMA,
    CONF_CONE: CONE_SCHEMA,
    CONF_RUN: RUN_SCHEMA,
    CONF_GEODESIC: GEODESIC_SCHEMA,
    CONF_DIAGNOSTICS: DIAGNOSTICS_SCHEMA,
    CONF_NORMS: NORMS_SCHEMA,
    CONF_OUTPUT: OUTPUT_SCHEMA,
}


@dataclass(frozen=True)
class ModelChoice:
    """A registry name with its free-form parameters."""

    name: str
    parameters: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; each section is a plain dict of typed values."""

    grid: Dict[str, Any]
    metric: ModelChoice
    obstacle: ModelChoice
    data: Dict[str, Any]
    cone: Dict[str, Any]
    run: Dict[str, Any]
    geodesic: Dict[str, Any]
    diagnostics: Dict[str, Any]
    norms: Dict[str, Any]
    output: Dict[str, Any]

    @property
    def name(self) -> str:
        return self.run[CONF_NAME]

    @property
    def seed(self) -> int:
        return self.run[CONF_SEED]

    @property
    def threads(self) -> Optional[int]:
        return self.run[CONF_THREADS]

    @property
    def apex_time(self) -> float:
        t0 = self.cone["t0"]
        return self.run["t_end"] if t0 is None else t0

    @property
    def output_dir(self) -> Path:
        return Path(self.output["directory"])

    def sections(self) -> Dict[str, Dict[str, Any]]:
        out = {
            CONF_GRID: self.grid,
            CONF_METRIC: {CONF_NAME: self.metric.name, **self.metric.parameters},
            CONF_OBSTACLE: {CONF_NAME: self.obstacle.name, **self.obstacle.parameters},
            CONF_DATA: self.data,
            CONF_CONE: self.cone,
            CONF_RUN: self.run,
            CONF_GEODESIC: self.geodesic,
            CONF_DIAGNOSTICS: self.diagnostics,
            CONF_NORMS: self.norms,
            CONF_OUTPUT: self.output,
        }
        return out

    def canonical_text(self) -> str:
        """Sorted ``section.key=value`` lines (thread count and output path excluded)."""
        lines = []
        for section, values in sorted(self.sections().items()):
            for key, value in sorted(values.items()):
                if (section, key) in UNHASHED_KEYS:
                    continue
                lines.append(f"{section}.{key}={value!r}")
        return "\n".join(lines)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def with_overrides(self, threads: Optional[int] = None, output_dir: Optional[str] = None) -> "RunConfig":
        run, output = dict(self.run), dict(self.output)
        if threads is not None:
            run[CONF_THREADS] = threads
        if output_dir is not None:
            output["directory"] = str(output_dir)
        return replace(self, run=run, output=output)

    def variant(self, coarsen: int = 1, data_scale: float = 1.0, geometry_only: bool = False) -> "RunConfig":
        """Companion configuration on a coarser grid or with scaled data.

        The companion evaluates no criteria and writes no checkpoints.
        """
        if coarsen < 1:
            raise ValueError("coarsen must be a positive integer")
        grid = dict(self.grid, n_cells=tuple(max(n // coarsen, 2) for n in self.grid["n_cells"]))
        data = dict(
            self.data,
            amplitude=self.data["amplitude"] * data_scale,
            velocity_amplitude=self.data["velocity_amplitude"] * data_scale,
        )
        run = dict(self.run, name=f"{self.name}_companion")
        if geometry_only:
            run["enabled"] = False
        return replace(
            self,
            grid=grid,
            data=data,
            run=run,
            diagnostics=dict(self.diagnostics, checks=()),
            output=dict(self.output, checkpoint_cadence=0),
        )


def _model_choice(section: str, values: Mapping[str, Any], default: str) -> ModelChoice:
    values = dict(values)
    name = str(values.pop(CONF_NAME, default)).strip()
    parameters = {key: parameter_value(value) for key, value in values.items()}
    if section == CONF_METRIC:
        known = get_available_metrics()
        if name not in known:
            raise ConfigError(f"{ERROR_CODES['UNKNOWN_NAME']}: metric '{name}'")
    else:
        if not ObstacleRegistry.get_all_obstacles():
            initialize_obstacles()
        if name != OBSTACLE_NONE and ObstacleRegistry.get_obstacle(name) is None:
            raise ConfigError(f"{ERROR_CODES['UNKNOWN_NAME']}: obstacle '{name}'")
    return ModelChoice(name, parameters)


def _unknown_checks(names) -> List[str]:
    from .checks.registry import get_available_checks

    known = get_available_checks()
    return [name for name in names if name not in known]


def validate_sections(sections: Mapping[str, Mapping[str, Any]]) -> Tuple[bool, Optional[str]]:
    """Check presence and names of sections. Returns (is_valid, error_message)."""
    for section in REQUIRED_SECTIONS:
        if section not in sections:
            return False, f"{ERROR_CODES['CONFIG_SECTION_MISSING']}: [{section}]"
    unknown = sorted(set(sections) - set(KNOWN_SECTIONS))
    if unknown:
        return False, f"Unknown configuration section(s): {', '.join(unknown)}"
    return True, None


def config_from_sections(sections: Mapping[str, Mapping[str, Any]]) -> RunConfig:
    """Validate raw section dicts (strings or already typed values) into a RunConfig."""
    is_valid, error_msg = validate_sections(sections)
    if not is_valid:
        raise ConfigError(error_msg)

    validated: Dict[str, Dict[str, Any]] = {}
    for section, schema in SECTION_SCHEMAS.items():
        try:
            validated[section] = schema(dict(sections.get(section, {})))
        except vol.Invalid as err:
            raise ConfigError(f"[{section}] {err}") from err

    unknown_checks = _unknown_checks(validated[CONF_DIAGNOSTICS]["checks"])
    if unknown_checks:
        raise ConfigError(f"{ERROR_CODES['UNKNOWN_NAME']}: check(s) {', '.join(unknown_checks)}")

    config = RunConfig(
        metric=_model_choice(CONF_METRIC, sections.get(CONF_METRIC, {}), "identity"),
        obstacle=_model_choice(CONF_OBSTACLE, sections.get(CONF_OBSTACLE, {}), OBSTACLE_NONE),
        **validated,
    )
    window = config.run
    if window["t_end"] <= window["t_start"] and window["enabled"]:
        raise ConfigError("[run] t_end must exceed t_start")
    _LOGGER.debug("Validated configuration '%s' (%s)", config.name, config.config_hash()[:12])
    return config


def parse_config_text(text: str) -> RunConfig:
    """Parse INI text; syntax errors carry the offending line number."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as err:
        raise ConfigError(ERROR_CODES["CONFIG_PARSE"], line=err.lineno) from err
    except configparser.ParsingError as err:
        line = err.errors[0][0] if err.errors else None
        raise ConfigError(ERROR_CODES["CONFIG_PARSE"], line=line) from err
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as err:
        raise ConfigError(f"{ERROR_CODES['CONFIG_PARSE']}: {err.message}", line=err.lineno) from err
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    return config_from_sections(sections)


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"Cannot read {path}: {err}") from err
    _LOGGER.info("Loaded configuration from %s", path)
    return parse_config_text(text)
