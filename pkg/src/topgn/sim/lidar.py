"""Multi-channel lidar: vectorised ray tracing with transparent-surface intensity physics."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from topgn.grid_geometry import RigidTransform2D
from topgn.intensity_map import LayerConfig, PointCloudFrame
from topgn.sim.motion import RobotState
from topgn.sim.world import KIND_CODES, CompiledSurfaces, MaterialKind, World

_EPS = 1e-6
MIRROR_LOSS = 0.9

_OPAQUE = KIND_CODES[MaterialKind.OPAQUE]
_TRANSPARENT = KIND_CODES[MaterialKind.TRANSPARENT]
_MIRROR = KIND_CODES[MaterialKind.MIRROR]
_KIND_BY_CODE = {code: kind for kind, code in KIND_CODES.items()}


@dataclasses.dataclass(frozen=True)
class LidarModel:
    """
    Spinning multi-channel lidar.

    Channels are spread evenly over vertical_fov (degrees); azimuths are the
    multiples of azimuth_step within +-horizontal_fov/2 of the robot heading.
    With `calibrated` set, reported intensity is corrected for range falloff.
    """

    name: str = "vlp16"
    channels: int = 16
    vertical_fov: tuple[float, float] = (-15.0, 15.0)
    horizontal_fov: float = 360.0
    azimuth_step: float = 0.2
    max_range: float = 30.0
    min_range: float = 0.3
    mount_height: float = 0.5
    calibrated: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertical_fov", tuple(float(a) for a in self.vertical_fov))
        if self.channels < 1:
            raise ValueError(f"{self.name}: channels must be positive, got {self.channels}")
        low, high = self.vertical_fov
        if not -90.0 < low <= high < 90.0:
            raise ValueError(f"{self.name}: invalid vertical_fov {self.vertical_fov}")
        if not 0.0 < self.horizontal_fov <= 360.0:
            raise ValueError(f"{self.name}: horizontal_fov must be in (0, 360]")
        if not self.azimuth_step > 0:
            raise ValueError(f"{self.name}: azimuth_step must be positive")
        if not 0.0 <= self.min_range < self.max_range:
            raise ValueError(f"{self.name}: need 0 <= min_range < max_range")
        if not self.mount_height > 0:
            raise ValueError(f"{self.name}: mount_height must be positive")

    def elevations(self) -> np.ndarray:
        """Channel elevation angles in degrees, lowest first."""
        if self.channels == 1:
            return np.array([sum(self.vertical_fov) / 2.0])
        return np.linspace(self.vertical_fov[0], self.vertical_fov[1], self.channels)

    def azimuths(self) -> np.ndarray:
        """Robot-frame azimuths in degrees; a full 360 scan covers [-180, 180)."""
        half = math.floor(self.horizontal_fov / 2.0 / self.azimuth_step + 1e-9)
        k = np.arange(-half, half + 1)
        if self.horizontal_fov >= 360.0:
            k = k[k * self.azimuth_step < 180.0 - 1e-9]
        return k * self.azimuth_step

    def layer_coverage(self, distance: float, layers: LayerConfig) -> tuple[int, int, int]:
        """Number of channels hitting a vertical surface in each layer at a distance."""
        z = self.mount_height + distance * np.tan(np.radians(self.elevations()))
        layer = layers.layer_of(z)
        return tuple(int(np.count_nonzero(layer == i)) for i in range(3))


LIDAR_PRESETS: dict[str, LidarModel] = {
    "vlp16": LidarModel(),
    "os1_32": LidarModel("os1_32", 32, (-22.5, 22.5)),
}


def lidar_preset(name: str, **changes) -> LidarModel:
    if name not in LIDAR_PRESETS:
        raise ValueError(f"Unknown lidar preset '{name}'. Available: {', '.join(LIDAR_PRESETS)}")
    return dataclasses.replace(LIDAR_PRESETS[name], **changes)


@dataclasses.dataclass(frozen=True)
class TraceResult:
    """Per-ray outcome; distance is the total path length, kind -1 for no return."""

    hit: np.ndarray
    distance: np.ndarray
    raw: np.ndarray
    kind: np.ndarray


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _surface_hits(
    origins: np.ndarray, dirs: np.ndarray, surfaces: CompiledSurfaces
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Distances, incidence cosines, normals and material indices of every
    ray/surface column; invalid hits have distance inf.
    """
    o, d = origins[:, None, :2], dirs[:, None, :2]
    columns_t, columns_cos, columns_n, columns_m = [], [], [], []

    if surfaces.segments.shape[0]:
        a = surfaces.segments[None, :, 0]
        e = surfaces.segments[None, :, 1] - a
        denom = _cross(d, e)
        w = a - o
        with np.errstate(divide="ignore", invalid="ignore"):
            t = _cross(w, e) / denom
            u = _cross(w, d) / denom
        valid = (denom != 0) & (u >= 0) & (u <= 1)
        normal = np.stack((-e[..., 1], e[..., 0]), axis=-1)
        normal = normal / np.linalg.norm(normal, axis=-1, keepdims=True)
        normal = np.broadcast_to(normal, t.shape + (2,))
        info = surfaces.segment_info
        columns_t.append(np.where(valid, t, np.inf))
        columns_cos.append(np.abs(np.einsum("bkj,bkj->bk", np.broadcast_to(d, normal.shape), normal)))
        columns_n.append(normal)
        columns_m.append((info, np.broadcast_to(info[None, :, 0], t.shape)))

    if surfaces.arcs.shape[0]:
        c = surfaces.arcs[None, :, 0:2]
        radius = surfaces.arcs[None, :, 2]
        start = surfaces.arcs[None, :, 3]
        span = surfaces.arcs[None, :, 4]
        oc = o - c
        qa = np.einsum("bkj,bkj->bk", d, d)
        qb = 2.0 * np.einsum("bkj,bkj->bk", np.broadcast_to(d, oc.shape), oc)
        qc = np.einsum("bkj,bkj->bk", oc, oc) - radius**2
        disc = qb**2 - 4.0 * qa * qc
        root = np.sqrt(np.maximum(disc, 0.0))
        info = surfaces.arc_info
        for sign in (-1.0, 1.0):
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (-qb + sign * root) / (2.0 * qa)
            p = o + t[..., None] * d
            offset = p - c
            angle = np.arctan2(offset[..., 1], offset[..., 0])
            inside = np.mod(angle - start, 2.0 * math.pi) <= span
            valid = (disc >= 0) & (qa > 0) & inside
            normal = offset / radius[..., None]
            columns_t.append(np.where(valid, t, np.inf))
            columns_cos.append(np.abs(np.einsum("bkj,bkj->bk", np.broadcast_to(d, normal.shape), normal)))
            columns_n.append(normal)
            columns_m.append((info, np.broadcast_to(info[None, :, 0], t.shape)))

    if not columns_t:
        empty = np.zeros((origins.shape[0], 0))
        return empty, empty, np.zeros((origins.shape[0], 0, 2)), empty.astype(np.int64)

    t = np.concatenate(columns_t, axis=1)
    cos_inc = np.concatenate(columns_cos, axis=1)
    normals = np.concatenate(columns_n, axis=1)
    material = np.concatenate([m for _, m in columns_m], axis=1).astype(np.int64)
    z_lo = np.concatenate(
        [np.broadcast_to(info[None, :, 1], m.shape) for info, m in columns_m], axis=1
    )
    z_hi = np.concatenate(
        [np.broadcast_to(info[None, :, 2], m.shape) for info, m in columns_m], axis=1
    )
    with np.errstate(invalid="ignore"):
        z = origins[:, 2:3] + t * dirs[:, 2:3]
        valid = np.isfinite(t) & (t > _EPS) & (z >= z_lo) & (z <= z_hi) & (z > 0.0)
    cos_inc = np.where(valid, np.minimum(cos_inc, 1.0), 0.0)
    normals = np.where(valid[..., None], normals, 0.0)
    return np.where(valid, t, np.inf), cos_inc, normals, material


def trace(
    origins: np.ndarray,
    dirs: np.ndarray,
    world: World,
    surfaces: CompiledSurfaces,
    max_range: float,
    path_offset: np.ndarray | None = None,
    transmission: np.ndarray | None = None,
    allow_bounce: bool = True,
) -> TraceResult:
    """
    Walks each ray's surface intersections in range order.

    Opaque surfaces always return. Transparent surfaces return when the raw
    intensity reaches their detection floor and otherwise pass the beam on,
    attenuated by their transmittance. A mirror reflects the beam once; later
    mirrors act as opaque surfaces.
    """
    count = origins.shape[0]
    offset = np.zeros(count) if path_offset is None else path_offset
    passed = np.ones(count) if transmission is None else transmission.copy()
    result_hit = np.zeros(count, dtype=bool)
    result_dist = np.full(count, np.inf)
    result_raw = np.zeros(count)
    result_kind = np.full(count, -1, dtype=np.int64)

    t, cos_inc, normals, material = _surface_hits(origins, dirs, surfaces)
    if t.shape[1] == 0:
        return TraceResult(result_hit, result_dist, result_raw, result_kind)
    t = np.where(offset[:, None] + t <= max_range, t, np.inf)

    order = np.argsort(t, axis=1, kind="stable")
    t = np.take_along_axis(t, order, axis=1)
    cos_inc = np.take_along_axis(cos_inc, order, axis=1)
    material = np.take_along_axis(material, order, axis=1)
    normals = np.take_along_axis(normals, order[..., None], axis=1)

    peak = np.array([m.peak_intensity for m in surfaces.materials])
    sigma = np.array([m.angular_sigma for m in surfaces.materials])
    transmittance = np.array([m.transmittance for m in surfaces.materials])
    floor = np.array([m.detection_floor for m in surfaces.materials])
    kind = np.array([KIND_CODES[m.kind] for m in surfaces.materials])

    active = np.ones(count, dtype=bool)
    bounce = np.zeros(count, dtype=bool)
    bounce_t = np.zeros(count)
    bounce_normal = np.zeros((count, 2))
    for k in range(t.shape[1]):
        tk = t[:, k]
        live = active & np.isfinite(tk)
        if not live.any():
            break
        mk = material[:, k]
        kk = kind[mk]
        falloff = (world.reference_distance / (offset + tk)) ** 2

        stop = live & ((kk == _OPAQUE) | ((kk == _MIRROR) & ~allow_bounce))
        opaque_raw = np.where(kk == _MIRROR, world.i_max, peak[mk]) * cos_inc[:, k]
        result_raw = np.where(stop, opaque_raw * falloff * passed, result_raw)
        result_kind = np.where(stop, _OPAQUE, result_kind)

        glass = live & (kk == _TRANSPARENT)
        theta = np.degrees(np.arccos(cos_inc[:, k]))
        glass_raw = peak[mk] * np.exp(-(theta**2) / (2.0 * sigma[mk] ** 2)) * falloff * passed
        seen = glass & (glass_raw >= floor[mk])
        result_raw = np.where(seen, glass_raw, result_raw)
        result_kind = np.where(seen, _TRANSPARENT, result_kind)
        passed = np.where(glass & ~seen, passed * transmittance[mk], passed)

        mirror = live & (kk == _MIRROR) & allow_bounce
        bounce |= mirror
        bounce_t = np.where(mirror, tk, bounce_t)
        bounce_normal[mirror] = normals[mirror, k]

        done = stop | seen
        result_hit |= done
        result_dist = np.where(done, offset + tk, result_dist)
        active &= ~(done | mirror)

    if bounce.any():
        index = np.nonzero(bounce)[0]
        hit_points = origins[index] + bounce_t[index, None] * dirs[index]
        reflected = dirs[index].copy()
        n = bounce_normal[index]
        along = np.einsum("ij,ij->i", reflected[:, :2], n)
        reflected[:, :2] -= 2.0 * along[:, None] * n
        second = trace(
            hit_points,
            reflected,
            world,
            surfaces,
            max_range,
            path_offset=offset[index] + bounce_t[index],
            transmission=passed[index],
            allow_bounce=False,
        )
        result_hit[index] = second.hit
        result_dist[index] = second.distance
        result_raw[index] = second.raw * MIRROR_LOSS
        result_kind[index] = second.kind
    return TraceResult(result_hit, result_dist, result_raw, result_kind)


def _reported(raw: np.ndarray, distance: np.ndarray, world: World, calibrated: bool) -> np.ndarray:
    if calibrated:
        raw = raw * (distance / world.reference_distance) ** 2
    return np.clip(raw, 0.0, world.i_max)


@dataclasses.dataclass(frozen=True)
class BeamReturn:
    point: tuple[float, float, float]
    intensity: float
    kind: MaterialKind
    distance: float


def cast_beam(
    origin: tuple[float, float, float],
    direction: tuple[float, float, float],
    world: World,
    max_range: float = 30.0,
    calibrated: bool = True,
    t: float = 0.0,
) -> BeamReturn | None:
    """
    Traces one beam.

    Returns:
        The return (mirrored returns appear along the original beam at the
        total path length), or None when nothing lies in range.
    """
    d = np.asarray(direction, dtype=np.float64)
    if abs(float(np.linalg.norm(d)) - 1.0) > 1e-9:
        raise ValueError(f"Beam direction must be a unit vector, got {tuple(d)}")
    o = np.asarray(origin, dtype=np.float64)
    result = trace(o[None], d[None], world, world.compile(t), max_range)
    if not result.hit[0]:
        return None
    distance = float(result.distance[0])
    point = o + distance * d
    intensity = float(_reported(result.raw, result.distance, world, calibrated)[0])
    return BeamReturn(
        (float(point[0]), float(point[1]), float(point[2])),
        intensity,
        _KIND_BY_CODE[int(result.kind[0])],
        distance,
    )


@dataclasses.dataclass(frozen=True)
class ScanResult:
    """A frame plus per-point material tags and beam indices."""

    frame: PointCloudFrame
    kinds: np.ndarray
    azimuths: np.ndarray
    channels: np.ndarray

    def count(self, kind: MaterialKind) -> int:
        return int(np.count_nonzero(self.kinds == KIND_CODES[kind]))


def scan_detailed(robot: RobotState, lidar: LidarModel, world: World) -> ScanResult:
    """One sweep with per-point material tags; see scan."""
    elevation = np.radians(lidar.elevations())
    azimuth = np.radians(lidar.azimuths())
    phi, alpha = np.meshgrid(elevation, azimuth, indexing="ij")
    channel_index, azimuth_index = np.meshgrid(
        np.arange(elevation.size), np.arange(azimuth.size), indexing="ij"
    )
    phi, alpha = phi.ravel(), alpha.ravel()
    heading = alpha + robot.theta
    dirs = np.column_stack(
        (np.cos(phi) * np.cos(heading), np.cos(phi) * np.sin(heading), np.sin(phi))
    )
    origins = np.broadcast_to(
        np.array([robot.x, robot.y, lidar.mount_height]), dirs.shape
    )
    result = trace(origins, dirs, world, world.compile(robot.clock), lidar.max_range)

    horizontal = result.distance * np.cos(phi)
    keep = result.hit & (horizontal >= lidar.min_range)
    distance = result.distance[keep]
    points = np.column_stack(
        (
            horizontal[keep] * np.cos(alpha[keep]),
            horizontal[keep] * np.sin(alpha[keep]),
            lidar.mount_height + distance * np.sin(phi[keep]),
            _reported(result.raw[keep], distance, world, lidar.calibrated),
        )
    )
    frame = PointCloudFrame(
        points,
        timestamp=robot.clock,
        robot_pose=RigidTransform2D.from_pose(robot.x, robot.y, robot.theta),
    )
    return ScanResult(
        frame,
        result.kind[keep],
        lidar.azimuths()[azimuth_index.ravel()[keep]],
        channel_index.ravel()[keep],
    )


def scan(robot: RobotState, lidar: LidarModel, world: World) -> PointCloudFrame:
    """
    One sweep of every (channel, azimuth) beam, in the robot frame.

    Returns closer than min_range (horizontally) fall in the blind spot and are
    dropped; z is measured from the ground.
    """
    return scan_detailed(robot, lidar, world).frame
