"""
Persistent settings in ~/.topgn/config.json and the pipeline parameter tree.

Parameter profiles ship as JSON package data; dotted overrides are applied with
jsonpath before the tree is built and validated.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import pathlib
from importlib.resources import files
from typing import Any

from jsonpath_ng import parse

from topgn.grid_geometry import GridSpec
from topgn.intensity_map import LayerConfig
from topgn.nav_mapping import NavConfig
from topgn.planner import PlannerWeights, RobotConfig, SamplingConfig
from topgn.sim.lidar import LidarModel, lidar_preset
from topgn.ton_detection import TonCondition

DEFAULT_PROFILE = "default"
DEFAULT_OUTPUT_DIR = pathlib.Path("runs")


class ConfigError(ValueError):
    """Invalid profile, override or parameter combination."""


def get_config_path() -> pathlib.Path:
    """
    Location of the user settings that pick the default parameter profile and
    the artifact root: ~/.topgn/config.json.
    """
    return pathlib.Path.home() / ".topgn" / "config.json"


def load_config() -> dict:
    """
    Saved user settings (`profile`, `output_dir`).

    A missing or unreadable file yields {}, so commands fall back to the
    bundled default profile and ./runs.
    """
    config_path = get_config_path()
    if not config_path.exists():
        return {}
    try:
        with open(config_path, "r", encoding="UTF-8") as f:
            return json.load(f)
    except (json.JSONDecodeError, OSError):
        return {}


def save_config(config: dict) -> None:
    """Stores the settings written by `topgn config`, creating ~/.topgn if needed."""
    config_path = get_config_path()
    config_path.parent.mkdir(parents=True, exist_ok=True)
    with open(config_path, "w", encoding="UTF-8") as f:
        json.dump(config, f, indent=2)


def get_output_dir() -> pathlib.Path:
    """Returns the saved artifact root, or ./runs if not configured."""
    output_dir = load_config().get("output_dir")
    if output_dir:
        return pathlib.Path(output_dir)
    return DEFAULT_OUTPUT_DIR


def get_profile_name() -> str:
    """Returns the saved default profile name."""
    return load_config().get("profile") or DEFAULT_PROFILE


@dataclasses.dataclass(frozen=True)
class OdometryConfig:
    """Per-step Gaussian noise on the odometry increments (0 = exact)."""

    std_xy: float = 0.0
    std_theta: float = 0.0


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    """Every parameter of perception, planning and the simulated run."""

    grid: GridSpec = GridSpec()
    layers: LayerConfig = LayerConfig()
    ton: TonCondition = TonCondition()
    roi_m: int = 80
    robot: RobotConfig = RobotConfig()
    weights: PlannerWeights = PlannerWeights()
    sampling: SamplingConfig = SamplingConfig()
    lidar: LidarModel = LidarModel()
    nav: NavConfig = NavConfig()
    odometry: OdometryConfig = OdometryConfig()
    t_past: int = 10
    frame_rate: float = 10.0
    seed: int = 0
    freeze_timeout: float = 10.0
    scenario_timeout: float = 60.0
    wall_timeout: float = 30.0

    @property
    def roi_spec(self) -> GridSpec:
        return GridSpec(self.roi_m, self.grid.s)


_SECTIONS: dict[str, type] = {
    "grid": GridSpec,
    "layers": LayerConfig,
    "ton": TonCondition,
    "robot": RobotConfig,
    "weights": PlannerWeights,
    "sampling": SamplingConfig,
    "nav": NavConfig,
    "odometry": OdometryConfig,
}


def config_to_dict(config: PipelineConfig) -> dict[str, Any]:
    """JSON-ready dictionary; the lidar section records its preset name."""
    data = dataclasses.asdict(config)
    lidar = data.pop("lidar")
    lidar["preset"] = lidar.pop("name")
    lidar["vertical_fov"] = list(lidar["vertical_fov"])
    data["lidar"] = lidar
    data["layers"]["normalization"] = str(config.layers.normalization)
    return data


def _build_lidar(data: dict[str, Any], h_lid: float) -> LidarModel:
    fields = dict(data)
    preset = fields.pop("preset", fields.pop("name", "vlp16"))
    fields.setdefault("mount_height", h_lid)
    return lidar_preset(preset, **fields)


def config_from_dict(data: dict[str, Any]) -> PipelineConfig:
    """
    Builds the parameter tree from a (possibly partial) dictionary.

    Raises:
        ConfigError: unknown keys or invalid values.
    """
    data = copy.deepcopy(data)
    try:
        kwargs: dict[str, Any] = {}
        for name, cls in _SECTIONS.items():
            if name in data:
                section = data.pop(name)
                if not isinstance(section, dict):
                    raise ConfigError(f"Section '{name}' must be an object, got {section!r}")
                kwargs[name] = cls(**section)
        layers = kwargs.get("layers", LayerConfig())
        kwargs["lidar"] = _build_lidar(data.pop("lidar", {}), layers.h_lid)
        return PipelineConfig(**kwargs, **data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def _deep_merge(base: dict[str, Any], update: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_value(text: str) -> Any:
    """Parses an override value as JSON, falling back to the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(
    data: dict[str, Any], overrides: list[tuple[str, Any]]
) -> dict[str, Any]:
    """
    Applies (path, value) overrides to a configuration dictionary.

    Paths are jsonpath expressions; the short form `robot.v_max` stands for
    `$.robot.v_max`. Missing keys are created.
    """
    data = copy.deepcopy(data)
    for path, value in overrides:
        expression = path if path.startswith("$") else f"$.{path}"
        try:
            jsonpath_expression = parse(expression)
        except Exception as e:
            raise ConfigError(f"Invalid override path '{path}': {e}") from e
        jsonpath_expression.update_or_create(data, value)
    return data


def parse_override(text: str) -> tuple[str, Any]:
    """Splits a `PATH=VALUE` command-line override."""
    path, sep, value = text.partition("=")
    if not sep or not path.strip():
        raise ConfigError(f"Override must look like PATH=VALUE, got '{text}'")
    return path.strip(), parse_value(value.strip())


def _profile_data(name_or_path: str) -> dict[str, Any]:
    resource = files("topgn").joinpath("profiles", f"{name_or_path}.json")
    if resource.is_file():
        text = resource.read_text(encoding="UTF-8")
    else:
        path = pathlib.Path(name_or_path)
        if not path.is_file():
            raise ConfigError(f"Unknown profile '{name_or_path}'")
        text = path.read_text(encoding="UTF-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Profile '{name_or_path}' is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Profile '{name_or_path}' must hold a JSON object")
    return data


def load_profile(
    name_or_path: str = DEFAULT_PROFILE, overrides: list[tuple[str, Any]] | None = None
) -> PipelineConfig:
    """
    Resolves a named profile (or a JSON file path) plus overrides and validates it.
    """
    data = _profile_data(name_or_path)
    if "extends" in data:
        data = _deep_merge(_profile_data(data.pop("extends")), data)
    config = config_from_dict(apply_overrides(data, overrides or []))
    validate_config(config)
    return config


def validate_config(config: PipelineConfig) -> None:
    """
    Cross-field checks that the individual sections cannot make on their own.

    Raises:
        ConfigError: describing the first violated constraint.
    """
    m, n = config.roi_m, config.grid.n
    if m <= 0 or m % 2 != 0 or m >= n:
        raise ConfigError(f"ROI side roi_m={m} must be positive, even and smaller than n={n}")
    if abs(config.lidar.mount_height - config.layers.h_lid) > 1e-9:
        raise ConfigError(
            f"Lidar mount height {config.lidar.mount_height} differs from h_lid "
            f"{config.layers.h_lid}"
        )
    if config.layers.h_lid > config.robot.h_rob:
        raise ConfigError(
            f"Lidar height h_lid={config.layers.h_lid} exceeds the robot height "
            f"h_rob={config.robot.h_rob}"
        )
    coverage = config.lidar.layer_coverage(config.robot.d_thresh, config.layers)
    if min(coverage) < 1:
        raise ConfigError(
            f"Lidar '{config.lidar.name}' puts {coverage} channels in the low/mid/high "
            f"layers at d_thresh={config.robot.d_thresh:.2f} m; every layer needs one"
        )
    if config.t_past < 0:
        raise ConfigError(f"t_past must be non-negative, got {config.t_past}")
    for name in ("frame_rate", "freeze_timeout", "scenario_timeout", "wall_timeout"):
        if not getattr(config, name) > 0:
            raise ConfigError(f"{name} must be positive, got {getattr(config, name)}")
    if config.odometry.std_xy < 0 or config.odometry.std_theta < 0:
        raise ConfigError("Odometry noise must be non-negative")
