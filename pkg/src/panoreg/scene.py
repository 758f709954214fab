"""Synthetic ground truth: rooms, camera pairs and the horizon maps they induce.

This module stands in for a trained layout network. Every map it emits has the
same type and semantics a network head would produce, so the registration and
fusion code cannot tell the difference.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import shapely
from shapely.geometry import Polygon, box

from .errors import CameraOutsideRoom, GenerationFailed, LengthMismatch, NoIntersection
from .geometry import (
    V_MAX,
    V_MIN,
    BoundaryMap,
    PlanarPose,
    SampleGrid,
    depth_to_boundary,
    direction_to_u,
    rotation,
    wrap_angle,
    wrap_unit,
)

# Camera clearance from every wall, as a fraction of the room diameter.
CLEARANCE_FRACTION = 0.05
# Covisibility tolerance, as a fraction of the room extent.
VIS_EPS_FRACTION = 1e-6

DEFAULT_CEILING_RANGE = (1.6, 2.2)


# --------------------------------------------------------------------------
# Polygon helpers
# --------------------------------------------------------------------------

def signed_area(vertices: np.ndarray) -> float:
    x, z = np.asarray(vertices, dtype=float).T
    return 0.5 * float(np.sum(x * np.roll(z, -1) - np.roll(x, -1) * z))


def edges_of(vertices: np.ndarray) -> np.ndarray:
    """Closed-ring edges as an (E, 2, 2) array of (start, end) points."""
    v = np.asarray(vertices, dtype=float)
    return np.stack([v, np.roll(v, -1, axis=0)], axis=1)


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True
    return (
        (d1 == 0 and on_segment(q1, q2, p1))
        or (d2 == 0 and on_segment(q1, q2, p2))
        or (d3 == 0 and on_segment(p1, p2, q1))
        or (d4 == 0 and on_segment(p1, p2, q2))
    )


def is_simple(vertices: np.ndarray) -> bool:
    """True when no two non-adjacent edges touch and no edge is degenerate."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    if n < 3:
        return False
    if np.any(np.linalg.norm(v - np.roll(v, -1, axis=0), axis=1) == 0):
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


def is_manhattan(vertices: np.ndarray) -> bool:
    v = np.asarray(vertices, dtype=float)
    d = np.roll(v, -1, axis=0) - v
    return bool(np.all((d[:, 0] == 0) | (d[:, 1] == 0)))


def contains_points(vertices: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Even-odd point-in-polygon test, vectorized over points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    e = edges_of(vertices)
    a, b = e[:, 0], e[:, 1]
    px, pz = pts[:, 0:1], pts[:, 1:2]
    straddles = (a[None, :, 1] > pz) != (b[None, :, 1] > pz)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = a[None, :, 0] + (pz - a[None, :, 1]) * (b[None, :, 0] - a[None, :, 0]) / (
            b[None, :, 1] - a[None, :, 1]
        )
    hits = straddles & (px < x_cross)
    return np.count_nonzero(hits, axis=1) % 2 == 1


def distance_to_boundary(vertices: np.ndarray, point) -> float:
    e = edges_of(vertices)
    a, b = e[:, 0], e[:, 1]
    p = np.asarray(point, dtype=float)
    ab = b - a
    r = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    closest = a + r[:, None] * ab
    return float(np.min(np.linalg.norm(closest - p, axis=1)))


def room_diameter(vertices: np.ndarray) -> float:
    v = np.asarray(vertices, dtype=float)
    return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))


def room_extent(vertices: np.ndarray) -> float:
    v = np.asarray(vertices, dtype=float)
    return float(np.max(v.max(axis=0) - v.min(axis=0)))


def _ring_from_shapely(poly: Polygon) -> np.ndarray:
    poly = shapely.orient_polygons(poly.simplify(0.0))
    return np.asarray(poly.exterior.coords)[:-1]


def _recenter(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    return v - 0.5 * (v.min(axis=0) + v.max(axis=0))


# --------------------------------------------------------------------------
# Room generation
# --------------------------------------------------------------------------

def generate_room(
    vertex_budget: int = 4,
    extent: float = 6.0,
    manhattan: bool = True,
    seed: int = 0,
    convex: bool = False,
    max_tries: int = 200,
) -> np.ndarray:
    """Random simple counter-clockwise room polygon centred on the origin.

    Manhattan rooms are unions of grid-snapped axis-aligned rectangles grown
    until the vertex count reaches ``vertex_budget`` (rounded down to even).
    ``convex`` restricts Manhattan rooms to rectangles and otherwise places
    ``vertex_budget`` vertices on a random ellipse. Non-Manhattan, non-convex
    rooms are star-shaped around the origin.
    """
    if vertex_budget < 4:
        raise ValueError("vertex_budget must be at least 4")
    if not extent > 0:
        raise ValueError("extent must be positive")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        if manhattan and (convex or vertex_budget < 6):
            room = _random_rectangle(rng, extent)
        elif manhattan:
            room = _rectilinear_room(rng, extent, vertex_budget)
        elif convex:
            room = _ellipse_room(rng, extent, vertex_budget)
        else:
            room = _star_room(rng, extent, vertex_budget)
        if room is not None and is_simple(room) and signed_area(room) > 0:
            return room
    raise GenerationFailed(f"no valid room after {max_tries} attempts")


def _random_rectangle(rng, extent):
    w = extent * rng.uniform(0.5, 1.0)
    d = extent * rng.uniform(0.5, 1.0)
    if rng.random() < 0.5:
        w = extent
    else:
        d = extent
    return _recenter(np.array([[0.0, 0.0], [w, 0.0], [w, d], [0.0, d]]))


def _rectilinear_room(rng, extent, vertex_budget, cells=8, attempts=60):
    target = vertex_budget - vertex_budget % 2
    cell = extent / cells

    def rect(min_cells):
        x0, z0 = rng.integers(0, cells - min_cells + 1, size=2)
        x1 = rng.integers(x0 + min_cells, cells + 1)
        z1 = rng.integers(z0 + min_cells, cells + 1)
        return box(x0 * cell, z0 * cell, x1 * cell, z1 * cell)

    poly = rect(3)
    for _ in range(attempts):
        count = len(poly.exterior.coords) - 1
        if count >= target:
            break
        cand = poly.union(rect(2)).simplify(0.0)
        if not isinstance(cand, Polygon) or len(cand.interiors) > 0:
            continue
        n_new = len(cand.exterior.coords) - 1
        if count < n_new <= target:
            poly = cand
    if len(poly.exterior.coords) - 1 < min(target, 6):
        return None
    return _recenter(_ring_from_shapely(poly))


def _ellipse_room(rng, extent, n):
    angles = 2 * np.pi * (np.arange(n) + rng.uniform(-0.3, 0.3, size=n)) / n
    a, b = 0.5 * extent * rng.uniform(0.6, 1.0, size=2)
    pts = np.stack([a * np.cos(angles), b * np.sin(angles)], axis=1)
    pts = pts @ rotation(rng.uniform(-np.pi, np.pi)).T
    return _recenter(pts)


def _star_room(rng, extent, n):
    angles = 2 * np.pi * (np.arange(n) + rng.uniform(-0.3, 0.3, size=n)) / n
    radii = 0.5 * extent * rng.uniform(0.45, 1.0, size=n)
    pts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    return _recenter(pts)


def l_shaped_room(seed: int = 0, extent: float = 6.0):
    """L-shaped room plus the two arm rectangles ``(xmin, zmin, xmax, zmax)``.

    The arms exclude the shared corner block, so cameras placed in different
    arms cannot see the whole room from either position.
    """
    rng = np.random.default_rng(seed)
    w = extent
    d = extent * rng.uniform(0.8, 1.0)
    a = w * rng.uniform(0.35, 0.5)
    b = d * rng.uniform(0.35, 0.5)
    room = np.array([[0, 0], [w, 0], [w, b], [a, b], [a, d], [0, d]], dtype=float)
    shift = 0.5 * (room.min(axis=0) + room.max(axis=0))
    arm_a = (a - shift[0], 0 - shift[1], w - shift[0], b - shift[1])
    arm_b = (0 - shift[0], b - shift[1], a - shift[0], d - shift[1])
    return room - shift, (arm_a, arm_b)


# --------------------------------------------------------------------------
# Scenes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RoomScene:
    room: np.ndarray
    cam1: tuple[float, float]
    cam2: tuple[float, float]
    yaw1: float
    yaw2: float
    ceiling_height: float

    @property
    def pose(self) -> PlanarPose:
        """Ground-truth relative pose mapping pano-2 points into the pano-1 frame."""
        offset = np.subtract(self.cam2, self.cam1)
        return PlanarPose(wrap_angle(self.yaw1 - self.yaw2), tuple(rotation(self.yaw1) @ offset))

    def room_in_pano1_frame(self) -> np.ndarray:
        """Room vertices expressed in camera-1 coordinates."""
        return (np.asarray(self.room) - np.asarray(self.cam1)) @ rotation(self.yaw1).T


def generate_scene(
    room: np.ndarray,
    seed: int = 0,
    ceiling_range: tuple[float, float] = DEFAULT_CEILING_RANGE,
    cam_regions=None,
    max_tries: int = 10000,
) -> RoomScene:
    """Place two cameras with random yaw inside ``room``.

    ``cam_regions`` optionally confines camera k to an axis-aligned box
    ``(xmin, zmin, xmax, zmax)``; otherwise cameras are drawn from the bounding box.
    """
    room = np.asarray(room, dtype=float)
    rng = np.random.default_rng(seed)
    clearance = CLEARANCE_FRACTION * room_diameter(room)
    lo, hi = room.min(axis=0), room.max(axis=0)
    regions = cam_regions or ((*lo, *hi), (*lo, *hi))
    cams = []
    for region in regions:
        x0, z0, x1, z1 = region
        for _ in range(max_tries):
            p = rng.uniform((x0, z0), (x1, z1))
            if contains_points(room, p)[0] and distance_to_boundary(room, p) >= clearance:
                cams.append((float(p[0]), float(p[1])))
                break
        else:
            raise GenerationFailed("could not place camera with required clearance")
    yaw1, yaw2 = (wrap_angle(y) for y in rng.uniform(-np.pi, np.pi, size=2))
    ceiling = float(rng.uniform(*ceiling_range))
    return RoomScene(room, cams[0], cams[1], yaw1, yaw2, ceiling)


def random_scene(
    seed: int,
    vertex_budget: int = 4,
    extent: float = 6.0,
    manhattan: bool = True,
    convex: bool = False,
) -> RoomScene:
    """Room and cameras from one seed; the two stages get independent child streams."""
    room_seed, cam_seed = np.random.SeedSequence(seed).generate_state(2)
    room = generate_room(vertex_budget, extent, manhattan, int(room_seed), convex=convex)
    return generate_scene(room, int(cam_seed))


def random_l_scene(seed: int, extent: float = 6.0) -> RoomScene:
    room_seed, cam_seed = np.random.SeedSequence(seed).generate_state(2)
    room, arms = l_shaped_room(int(room_seed), extent)
    return generate_scene(room, int(cam_seed), cam_regions=arms)


# --------------------------------------------------------------------------
# Ray casting
# --------------------------------------------------------------------------

def ray_hits(edges: np.ndarray, origin, directions: np.ndarray) -> np.ndarray:
    """Distance along each direction to the nearest edge hit, ``inf`` on a miss.

    ``directions`` need not be unit length; the result is in units of the
    direction length.
    """
    o = np.asarray(origin, dtype=float)
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    a = edges[:, 0]
    e = edges[:, 1] - a
    ao = a - o
    denom = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (ao[None, :, 0] * e[None, :, 1] - ao[None, :, 1] * e[None, :, 0]) / denom
        r = (ao[None, :, 0] * d[:, None, 1] - ao[None, :, 1] * d[:, None, 0]) / denom
    ok = (denom != 0) & (s > 1e-12) & (r >= -1e-12) & (r <= 1 + 1e-12)
    return np.min(np.where(ok, s, np.inf), axis=1)


def yawed_directions(u: np.ndarray, yaw: float) -> np.ndarray:
    ang = 2.0 * np.pi * np.asarray(u, dtype=float) + yaw
    return np.stack([np.sin(ang), np.cos(ang)], axis=-1)


def cast_rays(room: np.ndarray, cam, yaw: float, u: np.ndarray) -> np.ndarray:
    """Wall distance from ``cam`` along azimuths ``u`` for a camera rotated by ``yaw``."""
    room = np.asarray(room, dtype=float)
    if not contains_points(room, cam)[0] or distance_to_boundary(room, cam) == 0:
        raise CameraOutsideRoom(f"camera {tuple(cam)} is not strictly inside the room")
    depth = ray_hits(edges_of(room), cam, yawed_directions(u, yaw))
    if not np.all(np.isfinite(depth)):
        raise NoIntersection("ray from an interior camera escaped the room")
    return depth


def cast_horizon_depth(room: np.ndarray, cam, yaw: float, grid: SampleGrid) -> np.ndarray:
    return cast_rays(room, cam, yaw, grid.u)


def segment_blocked(room: np.ndarray, start, ends: np.ndarray, eps: float) -> np.ndarray:
    """True where the open segment ``start -> ends[i]`` properly crosses a wall.

    Crossings within ``eps`` of either segment end or of an edge's endpoints
    are treated as grazing and ignored.
    """
    edges = edges_of(room)
    p = np.asarray(start, dtype=float)
    dvec = np.atleast_2d(ends) - p
    a = edges[:, 0]
    e = edges[:, 1] - a
    ap = a - p
    denom = dvec[:, None, 0] * e[None, :, 1] - dvec[:, None, 1] * e[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (ap[None, :, 0] * e[None, :, 1] - ap[None, :, 1] * e[None, :, 0]) / denom
        r = (ap[None, :, 0] * dvec[:, None, 1] - ap[None, :, 1] * dvec[:, None, 0]) / denom
    seg_len = np.linalg.norm(dvec, axis=1)[:, None]
    edge_len = np.linalg.norm(e, axis=1)[None, :]
    crosses = (
        (denom != 0)
        & (s * seg_len > eps)
        & (s * seg_len < seg_len - eps)
        & (r * edge_len > eps)
        & (r * edge_len < edge_len - eps)
    )
    return np.any(crosses, axis=1)


# --------------------------------------------------------------------------
# Horizon maps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HorizonMaps:
    """The four per-panorama horizon maps over one uniform azimuth grid.

    ``correspondence[i]`` is the azimuth in the *other* panorama showing the
    wall point seen at ``u_i``; ``covisibility[i]`` says whether that point is
    visible from the other camera.
    """

    ceiling: BoundaryMap
    floor: BoundaryMap
    correspondence: np.ndarray
    covisibility: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "correspondence", np.asarray(self.correspondence, dtype=float))
        object.__setattr__(self, "covisibility", np.asarray(self.covisibility, dtype=float))
        n = len(self.ceiling)
        if not (len(self.floor) == len(self.correspondence) == len(self.covisibility) == n):
            raise LengthMismatch("horizon maps must share one sample grid")
        if self.ceiling.kind != "ceiling" or self.floor.kind != "floor":
            raise ValueError("ceiling/floor boundary kinds swapped")

    @property
    def grid(self) -> SampleGrid:
        return SampleGrid(len(self.ceiling))


def _pano_maps(scene: RoomScene, k: int, grid: SampleGrid) -> HorizonMaps:
    cams = (scene.cam1, scene.cam2)
    yaws = (scene.yaw1, scene.yaw2)
    cam, yaw = np.asarray(cams[k]), yaws[k]
    other, other_yaw = np.asarray(cams[1 - k]), yaws[1 - k]

    depth = cast_horizon_depth(scene.room, cam, yaw, grid)
    walls = cam + depth[:, None] * yawed_directions(grid.u, yaw)
    world_u = direction_to_u(walls - other)
    corr = wrap_unit(world_u - other_yaw / (2.0 * np.pi))
    eps = VIS_EPS_FRACTION * room_extent(scene.room)
    covis = (~segment_blocked(scene.room, other, walls, eps)).astype(float)
    return HorizonMaps(
        ceiling=depth_to_boundary(depth, scene.ceiling_height - 1.0, "ceiling"),
        floor=depth_to_boundary(depth, 1.0, "floor"),
        correspondence=corr,
        covisibility=covis,
    )


def ground_truth_maps(scene: RoomScene, grid: SampleGrid) -> tuple[HorizonMaps, HorizonMaps]:
    """Exact maps for both panoramas; each correspondence points into the other pano."""
    return _pano_maps(scene, 0, grid), _pano_maps(scene, 1, grid)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_v: float = 0.0
    sigma_o: float = 0.0
    outlier_frac: float = 0.0
    flip_p: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_v", "sigma_o", "flip_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 <= self.outlier_frac < 1:
            raise ValueError("outlier_frac must lie in [0, 1)")
        if self.flip_p > 1:
            raise ValueError("flip_p must be a probability")


def _clamp_boundary(b: BoundaryMap, noise: np.ndarray) -> BoundaryMap:
    mag = np.clip(np.abs(b.values + noise), V_MIN, V_MAX)
    return replace(b, values=b.sign * mag)


def perturb_maps(maps: HorizonMaps, noise: NoiseSpec) -> HorizonMaps:
    """Simulated prediction error; deterministic per ``noise.seed``.

    Exactly ``floor(outlier_frac * n)`` correspondences are replaced by uniform
    draws, chosen by a seeded permutation.
    """
    return _perturb(maps, noise)[0]


def outlier_indices(maps: HorizonMaps, noise: NoiseSpec) -> np.ndarray:
    """Sorted indices that :func:`perturb_maps` overwrites with uniform correspondences."""
    return np.sort(_perturb(maps, noise)[1])


def _perturb(maps, noise):
    rng = np.random.default_rng(noise.seed)
    n = len(maps.correspondence)
    ceiling = _clamp_boundary(maps.ceiling, noise.sigma_v * rng.standard_normal(n))
    floor = _clamp_boundary(maps.floor, noise.sigma_v * rng.standard_normal(n))
    corr = wrap_unit(maps.correspondence + noise.sigma_o * rng.standard_normal(n))
    n_out = int(np.floor(noise.outlier_frac * n))
    outliers = rng.permutation(n)[:n_out]
    corr[outliers] = rng.random(n_out)
    flips = rng.random(n) < noise.flip_p
    covis = np.where(flips, 1.0 - maps.covisibility, maps.covisibility)
    return HorizonMaps(ceiling, floor, corr, covis), outliers
