"""Panorama coordinate conventions and horizon-map transforms.

Conventions used throughout the package:

* ``y`` is up, the camera sits at the origin, and the floor is at ``y = -1``
  (camera-to-floor distance is the unit of length).
* A panorama coordinate ``(u, v)`` lives in ``[0, 1) x [-1, 1]``. The azimuth
  ``theta = 2*pi*u`` is measured from ``+z`` toward ``+x`` and the elevation is
  ``phi = -v*pi/2``, so ``v = -1`` looks straight up and ``v = 0`` is the horizon.
* Plane points are stored as ``(x, z)`` pairs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DegenerateBoundary, LengthMismatch, NonPositiveDepth, NonPositiveHeight

# |v| is clamped to this before tan() so horizon samples keep a finite depth.
V_MIN = 1e-3
# Upper clamp used when noise pushes a boundary past the pole.
V_MAX = 1.0 - 1e-6

BoundaryKind = Literal["ceiling", "floor"]


@dataclass(frozen=True)
class SampleGrid:
    """``n`` uniform azimuth samples ``u_i = i / n`` starting at zero."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise ValueError(f"sample grid needs an integer n >= 4, got {self.n!r}")

    @property
    def u(self) -> np.ndarray:
        return np.arange(self.n, dtype=float) / self.n

    def directions(self) -> np.ndarray:
        """Unit plane directions ``(sin 2*pi*u, cos 2*pi*u)``, shape (n, 2)."""
        theta = 2.0 * np.pi * self.u
        return np.stack([np.sin(theta), np.cos(theta)], axis=-1)


@dataclass(frozen=True)
class BoundaryMap:
    kind: BoundaryKind
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("ceiling", "floor"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def sign(self) -> float:
        return -1.0 if self.kind == "ceiling" else 1.0


def rotation(theta: float) -> np.ndarray:
    """2x2 counter-clockwise rotation acting on ``(x, z)`` column vectors."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def wrap_angle(theta):
    """Wrap radians into ``(-pi, pi]``."""
    wrapped = np.mod(np.asarray(theta, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def wrap_unit(u):
    """Wrap into ``[0, 1)``; guards the ``mod`` rounding case that returns exactly 1."""
    w = np.mod(np.asarray(u, dtype=float), 1.0)
    w = np.where(w >= 1.0, 0.0, w)
    return float(w) if w.ndim == 0 else w


def direction_to_u(vectors: np.ndarray) -> np.ndarray:
    """Inverse of :meth:`SampleGrid.directions` for arbitrary ``(x, z)`` vectors."""
    vectors = np.asarray(vectors, dtype=float)
    return wrap_unit(np.arctan2(vectors[..., 0], vectors[..., 1]) / (2.0 * np.pi))


@dataclass(frozen=True)
class PlanarPose:
    """3-DoF rigid transform mapping pano-2 plane points into the pano-1 frame.

    ``p1 = R(theta) @ p2 + t``.
    """

    theta: float
    t: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        tx, tz = self.t
        object.__setattr__(self, "t", (float(tx), float(tz)))

    @classmethod
    def identity(cls) -> PlanarPose:
        return cls(0.0, (0.0, 0.0))

    @property
    def translation(self) -> np.ndarray:
        return np.array(self.t)

    @property
    def matrix(self) -> np.ndarray:
        return rotation(self.theta)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.matrix.T + self.translation

    def compose(self, other: PlanarPose) -> PlanarPose:
        """``self ∘ other``: apply ``other`` first."""
        t = self.matrix @ other.translation + self.translation
        return PlanarPose(self.theta + other.theta, tuple(t))

    def inverse(self) -> PlanarPose:
        t = -(rotation(-self.theta) @ self.translation)
        return PlanarPose(-self.theta, tuple(t))


def uv_to_direction(u: float, v: float) -> np.ndarray:
    """Unit 3D viewing direction ``(x, y, z)`` of a panorama coordinate."""
    theta = 2.0 * np.pi * u
    phi = -v * np.pi / 2.0
    return np.array([np.sin(theta) * np.cos(phi), np.sin(phi), np.cos(theta) * np.cos(phi)])


def resample_cyclic(values: np.ndarray, m: int) -> np.ndarray:
    """Resample a periodic signal on ``n`` uniform samples to ``m`` uniform samples.

    Linear interpolation with wrap-around; ``m == n`` returns a copy.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if m == n:
        return values.copy()
    pos = np.arange(m) * (n / m)
    k = np.floor(pos).astype(int) % n
    frac = pos - np.floor(pos)
    return (1.0 - frac) * values[k] + frac * values[(k + 1) % n]


def boundary_to_depth(
    boundary: BoundaryMap, height: float, m: int | None = None, clamp: bool = True
) -> np.ndarray:
    """Layout-to-depth: planar wall distance for every boundary sample.

    Args:
        boundary: ceiling or floor v-coordinates.
        height: vertical distance from the camera to that plane (1 for the floor).
        m: output sample count; the depth signal is resampled cyclically when it
            differs from ``len(boundary)``.
        clamp: clamp ``|v|`` to ``V_MIN`` before the tangent. When disabled, a
            sample at or inside the clamp band raises ``DegenerateBoundary``.

    Returns:
        Array of ``m`` positive depths.
    """
    if not height > 0:
        raise NonPositiveHeight(f"plane height must be positive, got {height}")
    mag = np.abs(boundary.values)
    if clamp:
        mag = np.maximum(mag, V_MIN)
    elif np.any(mag <= V_MIN):
        raise DegenerateBoundary("boundary touches the horizon band")
    depth = height / np.tan(mag * np.pi / 2.0)
    if m is not None:
        depth = resample_cyclic(depth, m)
    return depth


def depth_to_boundary(depth: np.ndarray, height: float, kind: BoundaryKind) -> BoundaryMap:
    depth = np.asarray(depth, dtype=float)
    if not height > 0:
        raise NonPositiveHeight(f"plane height must be positive, got {height}")
    if np.any(~(depth > 0)):
        raise NonPositiveDepth("depths must be positive")
    sign = -1.0 if kind == "ceiling" else 1.0
    return BoundaryMap(kind, sign * (2.0 / np.pi) * np.arctan(height / depth))


def depth_to_plane_points(depth: np.ndarray, grid: SampleGrid | None = None) -> np.ndarray:
    depth = np.asarray(depth, dtype=float)
    grid = grid or SampleGrid(len(depth))
    if grid.n != len(depth):
        raise LengthMismatch(f"{len(depth)} depths on a grid of {grid.n}")
    return depth[:, None] * grid.directions()


def per_sample_ceiling_height(ceiling: BoundaryMap, floor: BoundaryMap) -> np.ndarray:
    """Camera-to-ceiling distance implied by each (floor, ceiling) sample pair."""
    if len(ceiling) != len(floor):
        raise LengthMismatch(f"ceiling has {len(ceiling)} samples, floor {len(floor)}")
    floor_depth = boundary_to_depth(floor, 1.0)
    mag = np.maximum(np.abs(ceiling.values), V_MIN)
    return floor_depth * np.tan(mag * np.pi / 2.0)


def estimate_layout_height(ceiling: BoundaryMap, floor: BoundaryMap) -> float:
    """Floor-to-ceiling height: 1 plus the median per-sample ceiling height."""
    heights = per_sample_ceiling_height(ceiling, floor)
    if not np.all(np.isfinite(heights)) or len(heights) == 0:
        raise DegenerateBoundary("cannot estimate layout height")
    return 1.0 + float(np.median(heights))
