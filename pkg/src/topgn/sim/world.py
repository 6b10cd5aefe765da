"""Material-tagged 2.5D world: obstacle primitives, scripted movers and ground-truth oracles."""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from topgn.grid_geometry import Grid2D, GridSpec, RigidTransform2D, world_to_grid_array


class MaterialKind(enum.StrEnum):
    OPAQUE = "opaque_diffuse"
    TRANSPARENT = "transparent"
    MIRROR = "mirror"


KIND_CODES: dict[MaterialKind, int] = {
    MaterialKind.OPAQUE: 0,
    MaterialKind.TRANSPARENT: 1,
    MaterialKind.MIRROR: 2,
}


@dataclasses.dataclass(frozen=True)
class MaterialModel:
    """
    Lidar response of a surface.

    Opaque surfaces return peak_intensity * cos(incidence); transparent ones
    return peak_intensity * exp(-incidence^2 / (2 sigma^2)) and let the beam
    through when that falls below detection_floor. Both fall off with the
    square of range relative to the reference distance.
    """

    name: str
    kind: MaterialKind
    peak_intensity: float = 255.0
    angular_sigma: float = 5.0
    transmittance: float = 0.0
    detection_floor: float = 20.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MaterialKind(self.kind))
        if self.peak_intensity < 0:
            raise ValueError(f"{self.name}: peak_intensity must be non-negative")
        if self.kind is MaterialKind.TRANSPARENT:
            if not self.angular_sigma > 0:
                raise ValueError(f"{self.name}: angular_sigma must be positive")
            if not 0.9 < self.transmittance <= 1.0:
                raise ValueError(
                    f"{self.name}: transmittance must be in (0.9, 1], got {self.transmittance}"
                )
        if self.detection_floor < 0:
            raise ValueError(f"{self.name}: detection_floor must be non-negative")

    def with_overrides(self, **changes) -> MaterialModel:
        return dataclasses.replace(self, **changes)


# Glass peaks above the TON band: the per-cell mean over the mid-layer channels
# lands inside [100, 130] near d_thresh.
MATERIAL_PRESETS: dict[str, MaterialModel | None] = {
    "glass": MaterialModel("glass", MaterialKind.TRANSPARENT, 180.0, 5.0, 0.92, 20.0),
    "glass_tinted": MaterialModel(
        "glass_tinted", MaterialKind.TRANSPARENT, 175.0, 5.0, 0.91, 20.0
    ),
    "acrylic": MaterialModel("acrylic", MaterialKind.TRANSPARENT, 155.0, 6.0, 0.93, 20.0),
    "pvc": MaterialModel("pvc", MaterialKind.TRANSPARENT, 150.0, 6.0, 0.91, 20.0),
    "wall": MaterialModel("wall", MaterialKind.OPAQUE, 255.0),
    "mirror": MaterialModel("mirror", MaterialKind.MIRROR, 0.0),
    # Reserved: dust on glass needs a mixed model that has no agreed default.
    "dusty_glass": None,
}


def material_preset(name: str) -> MaterialModel:
    """Looks up a preset material by name."""
    if name not in MATERIAL_PRESETS:
        raise ValueError(
            f"Unknown material preset '{name}'. Available: {', '.join(MATERIAL_PRESETS)}"
        )
    material = MATERIAL_PRESETS[name]
    if material is None:
        raise ValueError(f"Material preset '{name}' has no default; define it explicitly")
    return material


@dataclasses.dataclass(frozen=True)
class Polyline:
    """Vertical polyline wall between z_min and z_max (world meters)."""

    vertices: tuple[tuple[float, float], ...]
    material: MaterialModel
    z_min: float = 0.0
    z_max: float = 2.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "vertices", tuple((float(x), float(y)) for x, y in self.vertices)
        )
        if len(self.vertices) < 2:
            raise ValueError("A polyline needs at least two vertices")
        if not self.z_max > self.z_min:
            raise ValueError(f"Need z_max > z_min, got ({self.z_min}, {self.z_max})")

    def segments(self) -> np.ndarray:
        """(k-1, 2, 2) array of consecutive vertex pairs."""
        v = np.array(self.vertices, dtype=np.float64)
        return np.stack((v[:-1], v[1:]), axis=1)

    def sample(self, step: float) -> np.ndarray:
        points = []
        for a, b in self.segments():
            count = max(2, math.ceil(float(np.hypot(*(b - a))) / step) + 1)
            u = np.linspace(0.0, 1.0, count)[:, None]
            points.append(a + u * (b - a))
        return np.concatenate(points)

    def sample_normals(self, step: float) -> np.ndarray:
        """Unit normals matching the points of sample(step)."""
        normals = []
        for a, b in self.segments():
            count = max(2, math.ceil(float(np.hypot(*(b - a))) / step) + 1)
            d = b - a
            normal = np.array([-d[1], d[0]]) / np.hypot(*d)
            normals.append(np.tile(normal, (count, 1)))
        return np.concatenate(normals)


@dataclasses.dataclass(frozen=True)
class Arc:
    """
    Vertical circular wall.

    The arc runs counter-clockwise from `start` over `span` radians; a span of
    2*pi closes the circle.
    """

    center: tuple[float, float]
    radius: float
    start: float
    span: float
    material: MaterialModel
    z_min: float = 0.0
    z_max: float = 2.0

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"Arc radius must be positive, got {self.radius}")
        if not 0 < self.span <= 2.0 * math.pi:
            raise ValueError(f"Arc span must be in (0, 2*pi], got {self.span}")
        if not self.z_max > self.z_min:
            raise ValueError(f"Need z_max > z_min, got ({self.z_min}, {self.z_max})")

    def contains_angle(self, angle: np.ndarray) -> np.ndarray:
        return np.mod(angle - self.start, 2.0 * math.pi) <= self.span

    def sample(self, step: float) -> np.ndarray:
        count = max(2, math.ceil(self.radius * self.span / step) + 1)
        angles = self.start + np.linspace(0.0, self.span, count)
        return np.column_stack(
            (
                self.center[0] + self.radius * np.cos(angles),
                self.center[1] + self.radius * np.sin(angles),
            )
        )

    def sample_normals(self, step: float) -> np.ndarray:
        """Unit (outward) normals matching the points of sample(step)."""
        return (self.sample(step) - np.array(self.center)) / self.radius


type Primitive = Polyline | Arc


@dataclasses.dataclass(frozen=True)
class MovingDisc:
    """
    Scripted opaque disc (e.g. a pedestrian) moving through timed waypoints.

    Between waypoints the disc moves at constant velocity; before the first and
    after the last it rests there.
    """

    waypoints: tuple[tuple[float, float, float], ...]
    radius: float
    material: MaterialModel
    z_min: float = 0.0
    z_max: float = 1.8

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "waypoints", tuple((float(t), float(x), float(y)) for t, x, y in self.waypoints)
        )
        if not self.waypoints:
            raise ValueError("A moving disc needs at least one waypoint")
        times = [w[0] for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"Waypoint times must increase, got {times}")
        if not self.radius > 0:
            raise ValueError(f"Disc radius must be positive, got {self.radius}")

    def position_at(self, t: float) -> tuple[float, float]:
        times = np.array([w[0] for w in self.waypoints])
        x = float(np.interp(t, times, [w[1] for w in self.waypoints]))
        y = float(np.interp(t, times, [w[2] for w in self.waypoints]))
        return x, y

    def arc_at(self, t: float) -> Arc:
        return Arc(self.position_at(t), self.radius, 0.0, 2.0 * math.pi, self.material, self.z_min, self.z_max)


@dataclasses.dataclass(frozen=True)
class CompiledSurfaces:
    """Column arrays of every surface at one instant, consumed by the ray tracer."""

    segments: np.ndarray
    segment_info: np.ndarray
    arcs: np.ndarray
    arc_info: np.ndarray
    materials: tuple[MaterialModel, ...]


def _point_segment_distance(p: np.ndarray, segments: np.ndarray) -> np.ndarray:
    a = segments[:, 0]
    ab = segments[:, 1] - a
    length2 = np.einsum("ij,ij->i", ab, ab)
    u = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.where(length2 > 0, length2, 1.0), 0, 1)
    closest = a + u[:, None] * ab
    return np.hypot(*(p - closest).T)


@dataclasses.dataclass(frozen=True)
class World:
    """Static primitives plus scripted movers, with the lidar intensity scale."""

    primitives: tuple[Primitive, ...] = ()
    movers: tuple[MovingDisc, ...] = ()
    i_max: float = 255.0
    reference_distance: float = 1.0

    def primitives_at(self, t: float) -> list[Primitive]:
        return list(self.primitives) + [mover.arc_at(t) for mover in self.movers]

    def compile(self, t: float = 0.0) -> CompiledSurfaces:
        """
        Flattens the scene at time t.

        segment_info and arc_info rows hold (material index, z_min, z_max);
        arcs rows hold (cx, cy, radius, start, span).
        """
        materials: list[MaterialModel] = []
        index: dict[int, int] = {}

        def material_index(material: MaterialModel) -> int:
            key = id(material)
            if key not in index:
                index[key] = len(materials)
                materials.append(material)
            return index[key]

        segments, segment_info, arcs, arc_info = [], [], [], []
        for primitive in self.primitives_at(t):
            m = material_index(primitive.material)
            match primitive:
                case Polyline():
                    for segment in primitive.segments():
                        segments.append(segment)
                        segment_info.append((m, primitive.z_min, primitive.z_max))
                case Arc():
                    arcs.append(
                        (*primitive.center, primitive.radius, primitive.start, primitive.span)
                    )
                    arc_info.append((m, primitive.z_min, primitive.z_max))
        return CompiledSurfaces(
            np.array(segments, dtype=np.float64).reshape(-1, 2, 2),
            np.array(segment_info, dtype=np.float64).reshape(-1, 3),
            np.array(arcs, dtype=np.float64).reshape(-1, 5),
            np.array(arc_info, dtype=np.float64).reshape(-1, 3),
            tuple(materials),
        )

    def min_distance(self, xy: tuple[float, float], t: float = 0.0) -> float:
        """Distance from a point to the nearest obstacle footprint (0 inside a disc)."""
        p = np.asarray(xy, dtype=np.float64)
        best = math.inf
        for primitive in self.primitives:
            match primitive:
                case Polyline():
                    best = min(best, float(_point_segment_distance(p, primitive.segments()).min()))
                case Arc():
                    best = min(best, _arc_distance(p, primitive))
        for mover in self.movers:
            cx, cy = mover.position_at(t)
            best = min(best, max(math.hypot(p[0] - cx, p[1] - cy) - mover.radius, 0.0))
        return best

    def ground_truth_grid(
        self,
        spec: GridSpec,
        robot_pose: RigidTransform2D,
        kinds: tuple[MaterialKind, ...] = (MaterialKind.TRANSPARENT,),
        t: float = 0.0,
    ) -> Grid2D:
        """
        Binary grid (robot frame) of the cells covered by primitives of `kinds`.

        Footprints are sampled every s/10 along their length, which marks every
        cell the footprint passes through.
        """
        values = np.zeros((spec.n, spec.n), dtype=bool)
        to_robot = robot_pose.inverse()
        step = spec.s / 10.0
        for primitive in self.primitives_at(t):
            if primitive.material.kind not in kinds:
                continue
            xy = to_robot.apply(primitive.sample(step))
            rows, cols, inside = world_to_grid_array(xy, spec)
            values[rows[inside], cols[inside]] = True
        return Grid2D(spec, values)

    def footprint_grid(
        self,
        spec: GridSpec,
        robot_pose: RigidTransform2D,
        viewpoints: np.ndarray,
        max_incidence: float,
        t: float = 0.0,
    ) -> Grid2D:
        """
        Transparent cells (robot frame) seen near normal incidence.

        A footprint sample counts when the horizontal angle between its surface
        normal and the line of sight from any of the (k, 2) world `viewpoints`
        is at most `max_incidence` degrees.
        """
        values = np.zeros((spec.n, spec.n), dtype=bool)
        eyes = np.asarray(viewpoints, dtype=np.float64).reshape(-1, 2)
        if eyes.shape[0] == 0:
            return Grid2D(spec, values)
        to_robot = robot_pose.inverse()
        step = spec.s / 10.0
        cos_limit = math.cos(math.radians(max_incidence))
        for primitive in self.primitives_at(t):
            if primitive.material.kind is not MaterialKind.TRANSPARENT:
                continue
            points = primitive.sample(step)
            normals = primitive.sample_normals(step)
            sight = points[None, :, :] - eyes[:, None, :]
            distance = np.hypot(sight[..., 0], sight[..., 1])
            along = np.abs(np.einsum("kpi,pi->kp", sight, normals))
            with np.errstate(invalid="ignore", divide="ignore"):
                seen = ((along / distance) >= cos_limit).any(axis=0)
            rows, cols, inside = world_to_grid_array(to_robot.apply(points[seen]), spec)
            values[rows[inside], cols[inside]] = True
        return Grid2D(spec, values)


def _arc_distance(p: np.ndarray, arc: Arc) -> float:
    dx, dy = p[0] - arc.center[0], p[1] - arc.center[1]
    if arc.contains_angle(np.array(math.atan2(dy, dx))):
        return abs(math.hypot(dx, dy) - arc.radius)
    ends = arc.sample(arc.radius * arc.span)[[0, -1]]
    return float(np.min(np.hypot(*(ends - p).T)))
