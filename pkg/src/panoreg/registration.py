"""Horizon-map registration: correspondence interpolation, covisibility gating, RANSAC.

The pipeline turns the two panoramas' boundary maps into plane point sets,
pairs each pano-1 point with the pano-2 boundary point at its predicted
correspondence azimuth, drops pairs the covisibility map rejects, and
estimates the 3-DoF relative pose robustly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DegenerateConfiguration, EmptyInput, LengthMismatch, NoConsensus, TooFewPairs
from .geometry import (
    PlanarPose,
    SampleGrid,
    boundary_to_depth,
    depth_to_plane_points,
    estimate_layout_height,
)
from .scene import HorizonMaps

BoundarySource = Literal["ceiling", "floor", "both"]
InterpolationMode = Literal["linear", "ray"]


@dataclass(frozen=True)
class MatchedPairs:
    """Putative correspondences ``src[i] <-> dst[i]``.

    ``index`` is the pano-1 sample index each pair came from; it gives the
    canonical order RANSAC samples in.
    """

    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    index: np.ndarray = None

    def __post_init__(self):
        src = np.asarray(self.src, dtype=float).reshape(-1, 2)
        dst = np.asarray(self.dst, dtype=float).reshape(-1, 2)
        weight = np.asarray(self.weight, dtype=float).reshape(-1)
        index = np.arange(len(src)) if self.index is None else np.asarray(self.index, dtype=int)
        if not (len(src) == len(dst) == len(weight) == len(index)):
            raise LengthMismatch("matched pair arrays differ in length")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.src)

    def take(self, keep) -> MatchedPairs:
        return MatchedPairs(self.src[keep], self.dst[keep], self.weight[keep], self.index[keep])


@dataclass(frozen=True)
class RansacConfig:
    """Registration settings.

    ``inlier_tol`` of ``None`` means ``inlier_tol_ratio`` times the median
    pano-1 depth of the candidate pairs. After the consensus refit, up to
    ``refine_iterations`` rounds drop inliers whose residual exceeds
    ``refine_sigmas`` robust standard deviations (1.4826 * median residual)
    and refit again.
    """

    iterations: int = 1000
    inlier_tol: float | None = None
    inlier_tol_ratio: float = 0.05
    min_sample: int = 2
    covis_threshold: float = 0.5
    min_inliers: int = 8
    seed: int = 0
    boundary: BoundarySource = "ceiling"
    use_covisibility: bool = True
    estimate_scale: bool = False
    interpolation: InterpolationMode = "ray"
    refine_iterations: int = 3
    refine_sigmas: float = 3.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inlier_tol is not None and not self.inlier_tol > 0:
            raise ValueError("inlier_tol must be positive")
        if self.min_sample != 2:
            raise ValueError("the planar pose solver uses minimal samples of 2")
        if not 0 < self.covis_threshold < 1:
            raise ValueError("covis_threshold must lie in (0, 1)")
        if self.boundary not in ("ceiling", "floor", "both"):
            raise ValueError(f"unknown boundary source {self.boundary!r}")
        if self.interpolation not in ("linear", "ray"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if self.refine_iterations < 0 or not self.refine_sigmas > 0:
            raise ValueError("refine_iterations must be >= 0 and refine_sigmas positive")
        if self.min_inliers < 2:
            raise ValueError("min_inliers must be >= 2")


@dataclass(frozen=True)
class RegistrationResult:
    pose: PlanarPose
    inlier_mask: np.ndarray
    rmse: float
    n_candidates: int
    scale: float = 1.0
    inlier_tol: float = field(default=float("nan"))

    @property
    def n_inliers(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


def interpolate_correspondence(
    points: np.ndarray,
    corr: np.ndarray,
    grid: SampleGrid | None = None,
    mode: InterpolationMode = "linear",
) -> np.ndarray:
    """Sample a uniformly spaced closed point ring at arbitrary azimuths.

    Each ``corr[i]`` falls between ring nodes ``k`` and ``k + 1`` (wrapping
    ``m - 1 -> 0``) at fractional index ``corr[i] * m``.

    ``linear`` blends the two nodes by that fractional index. ``ray`` returns
    the point of the chord between the two nodes that lies on the ray at
    azimuth ``corr[i]``; it is exact whenever both nodes sit on the same
    straight wall, and assumes node ``k`` lies on the ray at azimuth ``k / m``.
    Both modes agree at the nodes.
    """
    points = np.asarray(points, dtype=float)
    corr = np.asarray(corr, dtype=float)
    m = len(points)
    if m == 0 or len(corr) == 0:
        raise EmptyInput("nothing to interpolate")
    if grid is not None and grid.n != m:
        raise LengthMismatch(f"{m} points on a grid of {grid.n}")
    pos = np.mod(corr, 1.0) * m
    k = np.floor(pos).astype(int)
    frac = pos - k
    k %= m
    a, b = points[k], points[(k + 1) % m]
    if mode == "linear":
        return (1.0 - frac)[:, None] * a + frac[:, None] * b
    if mode != "ray":
        raise ValueError(f"unknown interpolation mode {mode!r}")
    # Depth along the query ray of the line through a and b, written with the
    # wedge angles so it stays well conditioned when the query hits a node.
    wedge = 2.0 * np.pi / m
    da = np.linalg.norm(a, axis=1)
    db = np.linalg.norm(b, axis=1)
    depth = da * db * np.sin(wedge) / (da * np.sin(frac * wedge) + db * np.sin((1.0 - frac) * wedge))
    ang = 2.0 * np.pi * pos / m
    return depth[:, None] * np.stack([np.sin(ang), np.cos(ang)], axis=-1)


def covisibility_filter(pairs: MatchedPairs, threshold: float = 0.5, min_sample: int = 2) -> MatchedPairs:
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    kept = pairs.take(pairs.weight >= threshold)
    if len(kept) < min_sample:
        raise TooFewPairs(f"{len(kept)} pairs survive the covisibility gate")
    return kept


def fit_rigid_2d(src: np.ndarray, dst: np.ndarray, weights=None, estimate_scale: bool = False):
    """Weighted least-squares planar pose with ``src ~ R(theta) @ dst + t``.

    Returns a :class:`PlanarPose`, or ``(pose, scale)`` when ``estimate_scale``.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise LengthMismatch("src and dst must both be (n, 2)")
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=float)
    if len(src) < 2 or w.sum() <= 0:
        raise DegenerateConfiguration("need at least two weighted points")
    w = w / w.sum()
    s_bar = w @ src
    d_bar = w @ dst
    s_c = src - s_bar
    d_c = dst - d_bar
    spread = w @ np.einsum("ij,ij->i", d_c, d_c)
    if spread <= 1e-24 * max(1.0, float(np.max(np.abs(dst)))) ** 2:
        raise DegenerateConfiguration("all dst points coincide")
    dot = w @ np.einsum("ij,ij->i", d_c, s_c)
    cross = w @ (d_c[:, 0] * s_c[:, 1] - d_c[:, 1] * s_c[:, 0])
    theta = np.arctan2(cross, dot)
    c, s = np.cos(theta), np.sin(theta)
    scale = np.hypot(dot, cross) / spread if estimate_scale else 1.0
    rd = scale * np.array([c * d_bar[0] - s * d_bar[1], s * d_bar[0] + c * d_bar[1]])
    pose = PlanarPose(theta, tuple(s_bar - rd))
    return (pose, float(scale)) if estimate_scale else pose


def _fit(src, dst, estimate_scale):
    if estimate_scale:
        return fit_rigid_2d(src, dst, estimate_scale=True)
    return fit_rigid_2d(src, dst), 1.0


def _transform(pose: PlanarPose, scale: float, pts: np.ndarray) -> np.ndarray:
    return scale * (pts @ pose.matrix.T) + pose.translation


def ransac_pose(pairs: MatchedPairs, cfg: RansacConfig = RansacConfig()) -> RegistrationResult:
    """Robust planar pose from putative pairs.

    Minimal samples are two distinct pairs drawn (in canonical ``index`` order)
    from a generator seeded with ``cfg.seed``. All hypotheses are scored at
    once; the winner has the most inliers, then the lowest inlier RMSE, then
    the earliest iteration. The returned pose is refit on the winner's
    inliers, then trimmed and refit as described in :class:`RansacConfig`.
    """
    n = len(pairs)
    if n < cfg.min_sample:
        raise TooFewPairs(f"{n} pairs, need {cfg.min_sample}")
    order = np.argsort(pairs.index, kind="stable")
    src, dst = pairs.src[order], pairs.dst[order]
    tol = cfg.inlier_tol
    if tol is None:
        tol = cfg.inlier_tol_ratio * float(np.median(np.linalg.norm(src, axis=1)))

    rng = np.random.default_rng(cfg.seed)
    first = rng.integers(0, n, size=cfg.iterations)
    second = (first + rng.integers(1, n, size=cfg.iterations)) % n

    dd = dst[second] - dst[first]
    ss = src[second] - src[first]
    dot = np.einsum("ij,ij->i", dd, ss)
    cross = dd[:, 0] * ss[:, 1] - dd[:, 1] * ss[:, 0]
    dd_len = np.linalg.norm(dd, axis=1)
    valid = (dd_len > 1e-12) & (np.linalg.norm(ss, axis=1) > 1e-12)
    theta = np.arctan2(cross, dot)
    scale = np.where(valid, np.linalg.norm(ss, axis=1) / np.where(valid, dd_len, 1.0), 1.0)
    if not cfg.estimate_scale:
        scale = np.ones_like(scale)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2) * scale[:, None, None]
    mid_d = 0.5 * (dst[first] + dst[second])
    mid_s = 0.5 * (src[first] + src[second])
    t = mid_s - np.einsum("kij,kj->ki", rot, mid_d)

    pred = np.einsum("kij,nj->kni", rot, dst) + t[:, None, :]
    resid = np.linalg.norm(pred - src[None], axis=-1)
    inliers = (resid < tol) & valid[:, None]
    counts = inliers.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rmse = np.sqrt(np.where(inliers, resid**2, 0.0).sum(axis=1) / counts)
    rmse = np.where(counts > 0, rmse, np.inf)
    best = np.lexsort((np.arange(cfg.iterations), rmse, -counts))[0]
    if counts[best] < max(cfg.min_inliers, cfg.min_sample):
        raise NoConsensus(f"best hypothesis has {counts[best]} inliers, need {cfg.min_inliers}")

    mask_sorted = inliers[best]
    pose, sc = _fit(src[mask_sorted], dst[mask_sorted], cfg.estimate_scale)
    for _ in range(cfg.refine_iterations):
        resid_all = np.linalg.norm(_transform(pose, sc, dst) - src, axis=1)
        sigma = 1.4826 * float(np.median(resid_all[mask_sorted]))
        trimmed = mask_sorted & (resid_all <= cfg.refine_sigmas * sigma)
        if trimmed.sum() < max(cfg.min_inliers, cfg.min_sample) or np.array_equal(trimmed, mask_sorted):
            break
        mask_sorted = trimmed
        pose, sc = _fit(src[mask_sorted], dst[mask_sorted], cfg.estimate_scale)
    err = np.linalg.norm(_transform(pose, sc, dst[mask_sorted]) - src[mask_sorted], axis=1)
    mask = np.zeros(n, dtype=bool)
    mask[order[mask_sorted]] = True
    return RegistrationResult(
        pose=pose,
        inlier_mask=mask,
        rmse=float(np.sqrt(np.mean(err**2))),
        n_candidates=n,
        scale=sc,
        inlier_tol=float(tol),
    )


def plane_points(maps: HorizonMaps, source: str = "ceiling", m: int | None = None) -> np.ndarray:
    """Boundary points on the XZ plane derived from one boundary of a panorama.

    Ceiling depths use the camera-to-ceiling distance estimated from the
    floor/ceiling pair, since the floor plane is the unit of length.
    """
    if source == "ceiling":
        height = estimate_layout_height(maps.ceiling, maps.floor) - 1.0
        depth = boundary_to_depth(maps.ceiling, height, m)
    else:
        depth = boundary_to_depth(maps.floor, 1.0, m)
    return depth_to_plane_points(depth)


def build_pairs(
    maps1: HorizonMaps,
    maps2: HorizonMaps,
    source: BoundarySource = "ceiling",
    interpolation: InterpolationMode = "ray",
) -> MatchedPairs:
    if len(maps1.correspondence) != len(maps2.correspondence):
        raise LengthMismatch("both panoramas must share the sample grid")
    n = len(maps1.correspondence)
    sources = ("ceiling", "floor") if source == "both" else (source,)
    chunks = []
    for k, src_kind in enumerate(sources):
        p1 = plane_points(maps1, src_kind)
        p2 = plane_points(maps2, src_kind)
        dst = interpolate_correspondence(p2, maps1.correspondence, mode=interpolation)
        chunks.append(MatchedPairs(p1, dst, maps1.covisibility, np.arange(n) + k * n))
    if len(chunks) == 1:
        return chunks[0]
    return MatchedPairs(
        np.concatenate([c.src for c in chunks]),
        np.concatenate([c.dst for c in chunks]),
        np.concatenate([c.weight for c in chunks]),
        np.concatenate([c.index for c in chunks]),
    )


def register(maps1: HorizonMaps, maps2: HorizonMaps, cfg: RansacConfig = RansacConfig()) -> RegistrationResult:
    """Relative pose of panorama 2 in the frame of panorama 1."""
    pairs = build_pairs(maps1, maps2, cfg.boundary, cfg.interpolation)
    if cfg.use_covisibility:
        pairs = covisibility_filter(pairs, cfg.covis_threshold, cfg.min_sample)
    return ransac_pose(pairs, cfg)
