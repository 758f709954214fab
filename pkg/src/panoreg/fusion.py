"""Per-panorama layouts, pose registration of layouts, and union-based fusion.

Footprints are shapely geometries in the ``(x, z)`` plane. Polygon clipping is
delegated to GEOS through shapely.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import shapely
from shapely import affinity
from shapely.errors import GEOSException
from shapely.geometry import MultiPolygon, Polygon
from shapely.geometry.base import BaseGeometry

from .errors import ClippingFailure
from .geometry import PlanarPose, SampleGrid, boundary_to_depth, depth_to_plane_points, estimate_layout_height
from .registration import plane_points
from .scene import HorizonMaps

MERGE_TOL = 1e-9


class SelfIntersectingFootprint(UserWarning):
    """A boundary produced a self-intersecting footprint that had to be repaired."""


@dataclass(frozen=True)
class LayoutSolid:
    """Extruded layout: a planar footprint between the floor ``y = -1`` and ``height - 1``.

    ``footprint`` is a Polygon or MultiPolygon with CCW shells and CW holes.
    """

    footprint: BaseGeometry
    height: float
    repaired: bool = False

    def __post_init__(self):
        if not self.height > 0:
            raise ValueError("layout height must be positive")

    @property
    def area(self) -> float:
        return float(self.footprint.area)

    @property
    def polygons(self) -> list[Polygon]:
        geom = self.footprint
        if isinstance(geom, Polygon):
            return [] if geom.is_empty else [geom]
        return [g for g in getattr(geom, "geoms", []) if isinstance(g, Polygon) and not g.is_empty]

    @property
    def disconnected(self) -> bool:
        return len(self.polygons) > 1

    def rings(self) -> list[dict]:
        """Serializable rings: one ``{"outer": [...], "holes": [[...], ...]}`` per component."""
        out = []
        for poly in self.polygons:
            out.append(
                {
                    "outer": np.asarray(poly.exterior.coords)[:-1].tolist(),
                    "holes": [np.asarray(h.coords)[:-1].tolist() for h in poly.interiors],
                }
            )
        return out

    @classmethod
    def from_rings(cls, rings: list[dict], height: float, repaired: bool = False) -> LayoutSolid:
        polys = [Polygon(r["outer"], r.get("holes", [])) for r in rings]
        geom = polys[0] if len(polys) == 1 else MultiPolygon(polys)
        return cls(_normalize(geom), height, repaired)

    @classmethod
    def from_vertices(cls, vertices, height: float) -> LayoutSolid:
        return cls(_normalize(Polygon(np.asarray(vertices, dtype=float))), height)


def _normalize(geom: BaseGeometry) -> BaseGeometry:
    return shapely.orient_polygons(geom, exterior_cw=False)


def merge_vertices(ring: np.ndarray, tol: float = MERGE_TOL) -> np.ndarray:
    """Drop consecutive duplicates and collinear vertices of a closed ring."""
    ring = np.asarray(ring, dtype=float)
    keep = np.linalg.norm(ring - np.roll(ring, 1, axis=0), axis=1) > tol
    ring = ring[keep] if keep.any() else ring[:1]
    if len(ring) < 3:
        return ring
    prev, nxt = np.roll(ring, 1, axis=0), np.roll(ring, -1, axis=0)
    a, b = ring - prev, nxt - ring
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    scale = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    bend = np.abs(cross) > tol * np.maximum(scale, tol)
    backtrack = np.einsum("ij,ij->i", a, b) < 0
    return ring[bend | backtrack]


def footprint_from_ring(ring: np.ndarray) -> tuple[BaseGeometry, bool]:
    """Polygon from an ordered boundary ring, repaired with the even-odd rule if needed."""
    ring = merge_vertices(ring)
    if len(ring) < 3:
        raise ClippingFailure("boundary collapsed to fewer than three vertices")
    poly = Polygon(ring)
    if poly.is_valid:
        return _normalize(poly), False
    try:
        fixed = shapely.make_valid(poly, method="linework")
    except GEOSException as exc:
        raise ClippingFailure(str(exc)) from exc
    parts = [g for g in shapely.get_parts(fixed) if isinstance(g, Polygon) and g.area > 0]
    if not parts:
        raise ClippingFailure("repair left no area")
    geom = parts[0] if len(parts) == 1 else MultiPolygon(parts)
    return _normalize(geom), True


def manhattan_snap(ring: np.ndarray) -> np.ndarray:
    """Regularize a ring to two perpendicular wall directions.

    The dominant direction comes from the length-weighted circular mean of
    edge angles modulo 90 degrees. Runs of consecutive edges sharing an axis
    collapse to one wall at their length-weighted mean offset, and corners are
    rebuilt from neighbouring walls.
    """
    ring = np.asarray(ring, dtype=float)
    e = np.roll(ring, -1, axis=0) - ring
    length = np.linalg.norm(e, axis=1)
    ang = np.arctan2(e[:, 1], e[:, 0])
    mean4 = np.angle(np.sum(length * np.exp(4j * ang)))
    phi = mean4 / 4.0
    c, s = np.cos(-phi), np.sin(-phi)
    rot = np.array([[c, -s], [s, c]])
    local = ring @ rot.T
    le = np.roll(local, -1, axis=0) - local
    horizontal = np.abs(le[:, 0]) >= np.abs(le[:, 1])
    # Rotate the edge list so it starts at an axis change, then group runs.
    changes = np.flatnonzero(horizontal != np.roll(horizontal, 1))
    if len(changes) < 4:
        return ring
    start = changes[0]
    idx = np.roll(np.arange(len(ring)), -start)
    walls = []
    for key_run in np.split(idx, np.flatnonzero(np.diff(horizontal[idx].astype(int)) != 0) + 1):
        h = horizontal[key_run[0]]
        mids = 0.5 * (local[key_run] + local[(key_run + 1) % len(ring)])
        w = length[key_run]
        offset = np.average(mids[:, 1] if h else mids[:, 0], weights=np.maximum(w, 1e-12))
        walls.append((h, offset))
    corners = []
    for (h0, off0), (h1, off1) in zip(walls, walls[1:] + walls[:1]):
        if h0 == h1:
            continue
        corners.append((off1, off0) if h0 else (off0, off1))
    if len(corners) < 4:
        return ring
    return np.asarray(corners) @ rot


def boundary_to_layout(
    maps: HorizonMaps,
    grid: SampleGrid | None = None,
    boundary: str = "floor",
    manhattan: bool = False,
) -> LayoutSolid:
    """Footprint polygon and floor-to-ceiling height of one panorama's layout."""
    if boundary == "floor":
        depth = boundary_to_depth(maps.floor, 1.0)
        pts = depth_to_plane_points(depth, grid)
    else:
        pts = plane_points(maps, "ceiling")
    ring = pts[::-1]  # azimuth order is clockwise in (x, z)
    if manhattan:
        ring = manhattan_snap(ring)
    geom, repaired = footprint_from_ring(ring)
    if repaired:
        warnings.warn("self-intersecting footprint repaired", SelfIntersectingFootprint, stacklevel=2)
    return LayoutSolid(geom, estimate_layout_height(maps.ceiling, maps.floor), repaired)


def apply_pose(layout: LayoutSolid, pose: PlanarPose) -> LayoutSolid:
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    tx, tz = pose.t
    moved = affinity.affine_transform(layout.footprint, [c, -s, s, c, tx, tz])
    return LayoutSolid(moved, layout.height, layout.repaired)


def union_layouts(a: LayoutSolid, b: LayoutSolid) -> LayoutSolid:
    """Union of footprints at the mean height; disconnected results keep every component."""
    try:
        geom = shapely.union(a.footprint, b.footprint)
    except GEOSException as exc:
        raise ClippingFailure(str(exc)) from exc
    parts = [g for g in shapely.get_parts(geom) if isinstance(g, Polygon) and g.area > 0]
    if not parts:
        raise ClippingFailure("union has no area")
    geom = parts[0] if len(parts) == 1 else MultiPolygon(parts)
    return LayoutSolid(_normalize(geom), 0.5 * (a.height + b.height), a.repaired or b.repaired)


def fuse(maps1: HorizonMaps, maps2: HorizonMaps, pose: PlanarPose | None, **kwargs) -> LayoutSolid:
    """Fused layout in the pano-1 frame; ``pose=None`` falls back to pano 1 alone."""
    l1 = boundary_to_layout(maps1, **kwargs)
    if pose is None:
        return l1
    l2 = apply_pose(boundary_to_layout(maps2, **kwargs), pose)
    return union_layouts(l1, l2)


def extruded_obj(layout: LayoutSolid) -> str:
    """Wavefront OBJ text of the extruded layout (floor at y = -1)."""
    y0, y1 = -1.0, layout.height - 1.0
    lines = ["# extruded layout", f"# height {layout.height!r}"]
    verts: list[tuple[float, float, float]] = []
    faces: list[list[int]] = []

    def vid(x, y, z):
        verts.append((x, y, z))
        return len(verts)

    for poly in layout.polygons:
        for ring in [poly.exterior, *poly.interiors]:
            pts = np.asarray(ring.coords)[:-1]
            for p, q in zip(pts, np.roll(pts, -1, axis=0)):
                faces.append([vid(p[0], y0, p[1]), vid(q[0], y0, q[1]), vid(q[0], y1, q[1]), vid(p[0], y1, p[1])])
        tris = shapely.constrained_delaunay_triangles(poly)
        for tri in shapely.get_parts(tris):
            pts = np.asarray(tri.exterior.coords)[:-1]
            faces.append([vid(x, y0, z) for x, z in pts[::-1]])
            faces.append([vid(x, y1, z) for x, z in pts])
    lines += [f"v {x:.9f} {y:.9f} {z:.9f}" for x, y, z in verts]
    lines += ["f " + " ".join(str(i) for i in f) for f in faces]
    return "\n".join(lines) + "\n"
