"""End-to-end pair evaluation shared by the CLI, the sweep harness and the tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RegistrationFailure
from .fusion import LayoutSolid, fuse
from .geometry import PlanarPose, SampleGrid
from .metrics import PairErrors, PairRecord, angular_errors, delta_metric, iou_2d, iou_3d
from .registration import RansacConfig, RegistrationResult, register
from .scene import NoiseSpec, RoomScene, edges_of, ground_truth_maps, perturb_maps, ray_hits, yawed_directions


def gt_layout(scene: RoomScene) -> LayoutSolid:
    """Ground-truth room solid in the pano-1 frame."""
    return LayoutSolid.from_vertices(scene.room_in_pano1_frame(), scene.ceiling_height)


def layout_edges(layout: LayoutSolid) -> np.ndarray:
    rings = []
    for poly in layout.polygons:
        for ring in [poly.exterior, *poly.interiors]:
            rings.append(edges_of(np.asarray(ring.coords)[:-1]))
    return np.concatenate(rings, axis=0)


def camera_depths(layout: LayoutSolid, pose2: PlanarPose, grid: SampleGrid) -> tuple[np.ndarray, np.ndarray]:
    """Horizon depths of both cameras against a pano-1-frame layout.

    Camera 1 sits at the origin with zero yaw; camera 2 at ``pose2``. Rays that
    miss every wall report ``inf``.
    """
    edges = layout_edges(layout)
    d1 = ray_hits(edges, (0.0, 0.0), yawed_directions(grid.u, 0.0))
    d2 = ray_hits(edges, pose2.t, yawed_directions(grid.u, -pose2.theta))
    return d1, d2


def evaluate_pair(
    scene_id: str,
    scene: RoomScene,
    pred: LayoutSolid,
    est_pose: PlanarPose | None,
    grid: SampleGrid,
    delta_exponent: int = 1,
) -> PairRecord:
    gt = gt_layout(scene)
    errors = PairErrors.failed() if est_pose is None else angular_errors(est_pose, scene.pose)
    gt_d = camera_depths(gt, scene.pose, grid)
    pred_d = camera_depths(pred, scene.pose, grid)
    delta = float(np.mean([delta_metric(p, g, delta_exponent) for p, g in zip(pred_d, gt_d)]))
    return PairRecord(scene_id, errors, iou_2d(pred, gt), iou_3d(pred, gt), delta)


@dataclass
class PairRun:
    record: PairRecord
    registration: RegistrationResult | None
    layout: LayoutSolid


def run_pair(
    scene: RoomScene,
    grid: SampleGrid,
    cfg: RansacConfig = RansacConfig(),
    noise: NoiseSpec | None = None,
    scene_id: str = "0",
) -> PairRun:
    """Oracle maps -> optional perturbation -> registration -> fusion -> metrics.

    Pano 2 gets an independent noise stream derived from ``noise.seed``.
    """
    maps1, maps2 = ground_truth_maps(scene, grid)
    if noise is not None:
        s1, s2 = np.random.SeedSequence(noise.seed).generate_state(2)
        maps1 = perturb_maps(maps1, _reseed(noise, int(s1)))
        maps2 = perturb_maps(maps2, _reseed(noise, int(s2)))
    try:
        result = register(maps1, maps2, cfg)
        pose = result.pose
    except RegistrationFailure:
        result, pose = None, None
    layout = fuse(maps1, maps2, pose)
    return PairRun(evaluate_pair(scene_id, scene, layout, pose, grid), result, layout)


def _reseed(noise: NoiseSpec, seed: int) -> NoiseSpec:
    return NoiseSpec(noise.sigma_v, noise.sigma_o, noise.outlier_frac, noise.flip_p, seed)
