"""Loads versioned XML scene files, validated against the packaged DTD."""

# pylint: disable=c-extension-no-member

from __future__ import annotations

import dataclasses
import math
import pathlib
from importlib.resources import files
from typing import Any

from lxml import etree

from topgn.config import parse_value
from topgn.sim.motion import RobotState
from topgn.sim.world import (
    Arc,
    MaterialModel,
    MovingDisc,
    Polyline,
    Primitive,
    World,
    material_preset,
)

SCENE_VERSION = "1"
_LIDAR_ATTRIBUTES = (
    "preset",
    "channels",
    "horizontal_fov",
    "azimuth_step",
    "max_range",
    "min_range",
)


class SceneError(ValueError):
    """A scene file that cannot be parsed or fails validation."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.message = message
        self.line = line
        self.path = path
        where = ":".join(str(part) for part in (path, line) if part is not None)
        super().__init__(f"{where}: {message}" if where else message)


class DTDResolver(etree.Resolver):
    """Resolves the scene DTD to the copy shipped with the package."""

    def resolve(self, system_url: str | None, public_id: str | None, context: Any) -> Any:
        """Resolve a DTD."""
        del public_id  # Unused
        if system_url is None or not system_url.endswith("scene.dtd"):
            return None
        return self.resolve_filename(str(_dtd_resource()), context)


def _dtd_resource():
    return files("topgn").joinpath("dtd", "scene.dtd")


def _scene_dtd() -> etree.DTD:
    with _dtd_resource().open("rb") as f:
        return etree.DTD(f)


@dataclasses.dataclass(frozen=True)
class Scene:
    """A parsed scene: world, start, goal, config overrides and run seeds."""

    name: str
    label: str
    description: str
    world: World
    start: RobotState
    goal: tuple[float, float]
    overrides: tuple[tuple[str, Any], ...] = ()
    seeds: tuple[int, ...] = ()
    path: pathlib.Path | None = None
    text: str = ""

    def seed_for(self, run: int, base_seed: int = 0) -> int:
        """Seed of the run-th run: the declared seed, else base_seed + run."""
        if run < len(self.seeds):
            return self.seeds[run]
        return base_seed + run


def _number(element: etree._Element, attribute: str, default: float | None = None) -> float:
    text = element.get(attribute)
    if text is None:
        if default is None:
            raise SceneError(f"<{element.tag}> lacks attribute '{attribute}'", element.sourceline)
        return default
    try:
        value = float(text)
    except ValueError:
        raise SceneError(
            f"<{element.tag}> attribute {attribute}='{text}' is not a number",
            element.sourceline,
        ) from None
    if not math.isfinite(value):
        raise SceneError(f"<{element.tag}> attribute {attribute} must be finite", element.sourceline)
    return value


def _material(element: etree._Element) -> MaterialModel:
    name = element.get("name")
    fields: dict[str, Any] = {"name": name}
    for attribute, field in (
        ("kind", "kind"),
        ("peak", "peak_intensity"),
        ("sigma", "angular_sigma"),
        ("transmittance", "transmittance"),
        ("floor", "detection_floor"),
    ):
        if element.get(attribute) is not None:
            fields[field] = element.get(attribute) if field == "kind" else _number(element, attribute)
    try:
        preset = element.get("preset")
        if preset is not None:
            return material_preset(preset).with_overrides(**fields)
        if "kind" not in fields:
            raise SceneError(f"Material '{name}' needs a preset or a kind", element.sourceline)
        return MaterialModel(**fields)
    except SceneError:
        raise
    except ValueError as e:
        raise SceneError(str(e), element.sourceline) from e


class _MaterialTable:
    def __init__(self) -> None:
        self.declared: dict[str, MaterialModel] = {}
        self.presets: dict[str, MaterialModel] = {}

    def lookup(self, element: etree._Element) -> MaterialModel:
        name = element.get("material")
        if name in self.declared:
            return self.declared[name]
        if name not in self.presets:
            try:
                self.presets[name] = material_preset(name)
            except ValueError as e:
                raise SceneError(str(e), element.sourceline) from e
        return self.presets[name]


def _primitive(element: etree._Element, materials: _MaterialTable) -> Primitive | MovingDisc:
    material = materials.lookup(element)
    z_min = _number(element, "zmin", 0.0)
    try:
        match element.tag:
            case "polyline":
                vertices = tuple(
                    (_number(p, "x"), _number(p, "y")) for p in element.iterchildren("point")
                )
                return Polyline(vertices, material, z_min, _number(element, "zmax", 2.0))
            case "arc":
                return Arc(
                    (_number(element, "cx"), _number(element, "cy")),
                    _number(element, "radius"),
                    math.radians(_number(element, "start")),
                    math.radians(_number(element, "span")),
                    material,
                    z_min,
                    _number(element, "zmax", 2.0),
                )
            case "mover":
                waypoints = tuple(
                    (_number(w, "t"), _number(w, "x"), _number(w, "y"))
                    for w in element.iterchildren("waypoint")
                )
                return MovingDisc(
                    waypoints, _number(element, "radius"), material, z_min,
                    _number(element, "zmax", 1.8),
                )
    except SceneError:
        raise
    except ValueError as e:
        raise SceneError(str(e), element.sourceline) from e
    raise SceneError(f"Unexpected element <{element.tag}>", element.sourceline)


def bundled_scene_path(name: str) -> pathlib.Path | None:
    """Path of a scene shipped with the package, or None."""
    resource = files("topgn").joinpath("scenes", f"{name}.xml")
    return pathlib.Path(str(resource)) if resource.is_file() else None


def bundled_scene_names() -> list[str]:
    return sorted(
        entry.name.removesuffix(".xml")
        for entry in files("topgn").joinpath("scenes").iterdir()
        if entry.name.endswith(".xml")
    )


def load_scene(path: str | pathlib.Path) -> Scene:
    """
    Parses and validates a scene file.

    `path` may also name a bundled scene (e.g. "straight_glass").

    Raises:
        SceneError: with the offending line for syntax, validation and value errors.
    """
    scene_path = pathlib.Path(path)
    if not scene_path.is_file():
        bundled = bundled_scene_path(str(path))
        if bundled is None:
            raise SceneError(f"Scene file not found: {path}")
        scene_path = bundled

    parser = etree.XMLParser(load_dtd=True, no_network=True, remove_comments=True)
    parser.resolvers.add(DTDResolver())
    try:
        text = scene_path.read_text(encoding="UTF-8")
        root = etree.fromstring(text.encode("UTF-8"), parser=parser, base_url=str(scene_path))
    except etree.XMLSyntaxError as e:
        raise SceneError(e.msg, e.lineno, str(scene_path)) from e

    dtd = _scene_dtd()
    if not dtd.validate(root):
        errors = dtd.error_log.filter_from_errors()
        if not errors:
            raise SceneError("Scene does not match the scene DTD", root.sourceline, str(scene_path))
        raise SceneError(errors[0].message, errors[0].line or None, str(scene_path))

    try:
        return _build_scene(root, scene_path, text)
    except SceneError as e:
        if e.path is None:
            raise SceneError(e.message, e.line, str(scene_path)) from e
        raise


def _build_scene(root: etree._Element, scene_path: pathlib.Path, text: str) -> Scene:
    version = root.get("version")
    if version != SCENE_VERSION:
        raise SceneError(
            f"Unsupported scene version {version!r}; expected {SCENE_VERSION}", root.sourceline
        )

    materials = _MaterialTable()
    primitives: list[Primitive] = []
    movers: list[MovingDisc] = []
    overrides: list[tuple[str, Any]] = []
    seeds: list[int] = []
    start = RobotState()
    goal = (0.0, 0.0)
    description = ""

    for element in root.iterchildren():
        match element.tag:
            case "description":
                description = " ".join((element.text or "").split())
            case "material":
                materials.declared[element.get("name")] = _material(element)
            case "polyline" | "arc" | "mover":
                primitive = _primitive(element, materials)
                if isinstance(primitive, MovingDisc):
                    movers.append(primitive)
                else:
                    primitives.append(primitive)
            case "robot":
                start = RobotState(
                    _number(element, "x"),
                    _number(element, "y"),
                    math.radians(_number(element, "theta", 0.0)),
                )
            case "goal":
                goal = (_number(element, "x"), _number(element, "y"))
            case "lidar":
                for attribute in _LIDAR_ATTRIBUTES:
                    if element.get(attribute) is not None:
                        overrides.append((f"lidar.{attribute}", parse_value(element.get(attribute))))
            case "set":
                overrides.append((element.get("path"), parse_value(element.get("value"))))
            case "seeds":
                for seed in element.iterchildren("seed"):
                    try:
                        seeds.append(int(seed.get("value")))
                    except ValueError:
                        raise SceneError(
                            f"Seed '{seed.get('value')}' is not an integer", seed.sourceline
                        ) from None

    return Scene(
        name=root.get("name"),
        label=root.get("label", ""),
        description=description,
        world=World(tuple(primitives), tuple(movers)),
        start=start,
        goal=goal,
        overrides=tuple(overrides),
        seeds=tuple(seeds),
        path=scene_path,
        text=text,
    )
