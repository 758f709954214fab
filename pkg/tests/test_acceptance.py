"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary and on
stdout) and then asserts, so failures are reported honestly.
"""
import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest
import shapely
from scipy.stats import binomtest
from shapely.geometry import box

from conftest import ACCEPTANCE_LINES
from panoreg.cli import main
from panoreg.errors import RegistrationFailure
from panoreg.fusion import LayoutSolid, fuse, union_layouts
from panoreg.geometry import V_MAX, V_MIN, BoundaryMap, SampleGrid, boundary_to_depth, depth_to_boundary, wrap_angle
from panoreg.losses import covis_loss, cyclic_distance, correspondence_loss, cycle_losses, layout_loss
from panoreg.metrics import iou_2d, iou_3d, maa
from panoreg.pipeline import gt_layout
from panoreg.registration import RansacConfig, register
from panoreg.scene import (
    NoiseSpec,
    cast_rays,
    contains_points,
    distance_to_boundary,
    generate_room,
    ground_truth_maps,
    perturb_maps,
    random_l_scene,
    random_scene,
)
from test_losses import bf_cor, bf_covis, bf_layout
from test_scene import brute_force_depth

pytestmark = pytest.mark.slow

GRID = SampleGrid(256)
# r-mAA@5 observed on the first run of criterion 3 and frozen as a regression baseline
PINNED_R_MAA5 = 0.9988


def record(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def rot_err_deg(est, gt):
    return abs(math.degrees(wrap_angle(est.theta - gt.theta)))


def test_criterion_1_geometry_round_trips():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mag = rng.uniform(V_MIN, V_MAX, 100_000)
    rt = 0.0
    for kind, sign in (("floor", 1.0), ("ceiling", -1.0)):
        b = BoundaryMap(kind, sign * mag)
        back = depth_to_boundary(boundary_to_depth(b, 1.7), 1.7, kind)
        rt = max(rt, float(np.max(np.abs(back.values - b.values))))
    ray = 0.0
    for seed in range(1000):
        room = generate_room(4 + seed % 9, 6.0, seed % 2 == 0, seed, convex=seed % 3 == 0)
        lo, hi = room.min(axis=0), room.max(axis=0)
        while True:
            cam = rng.uniform(lo, hi)
            if contains_points(room, cam)[0] and distance_to_boundary(room, cam) > 1e-3:
                break
        yaw, u = rng.uniform(-math.pi, math.pi), rng.random()
        ray = max(ray, abs(cast_rays(room, cam, yaw, np.array([u]))[0] - brute_force_depth(room, cam, yaw, u)))
    dt = time.perf_counter() - t0
    ok = rt < 1e-12 and ray < 1e-9 and dt < 10
    assert record(1, ok, f"round-trip max {rt:.2e} (<1e-12), ray-cast max {ray:.2e} (<1e-9), {dt:.1f}s (<10s)")


def test_criterion_2_exact_recovery():
    t0 = time.perf_counter()
    rot, trans, ious = [], [], []
    for s in range(500):
        if s < 250:
            scene = random_scene(s, 4, manhattan=True, convex=True)
        else:
            scene = random_scene(s, 7, manhattan=False, convex=True)
        m1, m2 = ground_truth_maps(scene, GRID)
        res = register(m1, m2)
        rot.append(rot_err_deg(res.pose, scene.pose))
        trans.append(float(np.linalg.norm(res.pose.translation - scene.pose.translation)))
        ious.append(iou_2d(fuse(m1, m2, res.pose), gt_layout(scene)))
    dt = time.perf_counter() - t0
    ok = max(rot) < 0.1 and max(trans) < 1e-3 and min(ious) >= 0.999 and dt < 60
    assert record(
        2, ok,
        f"max rot {max(rot):.2e} deg, max trans {max(trans):.2e}, min IoU {min(ious):.5f} over 500 convex scenes, {dt:.1f}s (<60s)",
    )


def test_criterion_3_ransac_robustness():
    t0 = time.perf_counter()
    errs = []
    for s in range(500):
        scene = random_scene(s, vertex_budget=8)
        m1, m2 = ground_truth_maps(scene, GRID)
        m1 = perturb_maps(m1, NoiseSpec(sigma_o=0.005, outlier_frac=0.3, seed=s + 1000))
        try:
            errs.append(rot_err_deg(register(m1, m2, RansacConfig(seed=s)).pose, scene.pose))
        except RegistrationFailure:
            errs.append(math.inf)
    value = maa(errs, 5)
    dt = time.perf_counter() - t0
    ok = value >= 0.95 and value == pytest.approx(PINNED_R_MAA5, abs=1e-12) and dt < 300
    assert record(3, ok, f"rotation mAA@5 = {value:.4f} (>=0.95, pinned {PINNED_R_MAA5}), {dt:.1f}s (<300s)")


def test_criterion_4_covisibility_filter_matters_in_l_rooms():
    noise = NoiseSpec(sigma_v=0.003, sigma_o=0.003)
    partial, with_f, without_f = 0, [], []
    for s in range(500):
        scene = random_l_scene(s)
        m1, m2 = ground_truth_maps(scene, GRID)
        partial += bool(np.any(m1.covisibility < 1))
        p1 = perturb_maps(m1, replace(noise, seed=s))
        p2 = perturb_maps(m2, replace(noise, seed=s + 10**6))
        for use, out in ((True, with_f), (False, without_f)):
            try:
                out.append(rot_err_deg(register(p1, p2, RansacConfig(seed=s, use_covisibility=use)).pose, scene.pose))
            except RegistrationFailure:
                out.append(180.0)
    a, b = np.array(with_f), np.array(without_f)
    worse, better = int(np.sum(b > a)), int(np.sum(b < a))
    p = binomtest(worse, worse + better, 0.5, alternative="greater").pvalue
    ok = partial == 500 and b.mean() > a.mean() and p < 0.01
    assert record(
        4, ok,
        f"{partial}/500 scenes partially covisible; mean rot err {a.mean():.3f} deg with filter vs {b.mean():.3f} without; "
        f"sign test {worse} worse / {better} better, p={p:.2e} (<0.01)",
    )


def test_criterion_5_loss_semantics():
    rng = np.random.default_rng(5)
    worst = 0.0
    nonneg = True
    for _ in range(100):
        n = int(rng.integers(4, 200))
        pred = [rng.uniform(0.1, 8, n) for _ in range(4)]
        gt = [rng.uniform(0.1, 8, n) for _ in range(4)]
        c, t = rng.random(n), (rng.random(n) < 0.5).astype(float)
        o, ob, g = rng.random(n), rng.random(n), rng.random(n)
        vals = {
            "layout": (layout_loss(pred, gt), bf_layout(pred, gt)),
            "covis": (covis_loss(c, t), bf_covis(c, t, 0.1)),
            "cor_sym": (correspondence_loss(o, ob, g), bf_cor(o, ob, g, "symmetric")),
            "cor_one_sided": (correspondence_loss(o, ob, g, "one_sided"), bf_cor(o, ob, g, "one_sided")),
            "cycle_cor": (cycle_losses(o, c, ob, t)[0], bf_cor(o, ob, t, "symmetric")),
            "cycle_covis": (cycle_losses(o, c, ob, t)[1], bf_covis(c, t, 0.1)),
        }
        worst = max(worst, max(abs(x - y) for x, y in vals.values()))
        nonneg &= all(x >= 0 for x, _ in vals.values())
        zero = max(layout_loss(gt, gt), correspondence_loss(ob, ob, g), cycle_losses(ob, t, ob, t)[0], covis_loss(t, t))
        nonneg &= zero < 1e-6
    one_sided = cyclic_distance([0.95], [0.05], "one_sided")[0]
    sym = cyclic_distance([0.95], [0.05], "symmetric")[0]
    mode_ok = abs(one_sided - 0.9) < 1e-15 and abs(sym - 0.1) < 1e-15
    ok = worst < 1e-12 and nonneg and mode_ok
    assert record(5, ok, f"brute-force max diff {worst:.1e} (<1e-12); zero-at-truth/non-negative {nonneg}; "
                         f"mode example one_sided={one_sided:.15g}, symmetric={sym:.15g}")


def test_criterion_6_metric_correctness():
    m = maa([1, 3, 20], 10)
    sq = LayoutSolid(box(0, 0, 1, 1), 2.0)
    i2 = iou_2d(sq, LayoutSolid(shapely.orient_polygons(box(0.5, 0, 1.5, 1)), 2.0))
    i3 = iou_3d(sq, LayoutSolid(box(0, 0, 1, 1), 3.0))
    rng = np.random.default_rng(6)
    z = []
    for seed in range(3):
        pa = generate_room(8, 4.0, True, 100 + seed) + rng.uniform(-1, 1, 2)
        pb = generate_room(7, 4.0, False, 200 + seed) + rng.uniform(-1, 1, 2)
        u = union_layouts(LayoutSolid.from_vertices(pa, 2), LayoutSolid.from_vertices(pb, 2))
        pts = np.concatenate([pa, pb])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        n = 1_000_000
        sample = rng.uniform(lo, hi, (n, 2))
        frac = (contains_points(pa, sample) | contains_points(pb, sample)).mean()
        area = float(np.prod(hi - lo))
        z.append(abs(frac * area - u.area) / (area * math.sqrt(frac * (1 - frac) / n)))
    ok = abs(m - 0.6) < 1e-15 and abs(i2 - 1 / 3) < 1e-15 and abs(i3 - 2 / 3) < 1e-15 and max(z) < 3
    assert record(6, ok, f"mAA {m!r} (0.6), IoU2d {i2!r} (1/3), IoU3d {i3!r} (2/3), union Monte-Carlo max |z| {max(z):.2f} (<3)")


def _cli_run(root):
    def run(*argv):
        return main([str(a) for a in argv])

    codes = [
        run("synth", "--count", 4, "--seed", 13, "--vertex-budget", 8, "--out", root / "scenes"),
        run("gt-maps", "--scene", root / "scenes" / "scene_0002.json", "--out", root / "maps.json",
            "--pose-out", root / "gt_pose.json"),
        run("perturb", "--maps", root / "maps.json", "--sigma-v", 0.004, "--sigma-o", 0.005,
            "--outlier-frac", 0.3, "--flip-p", 0.02, "--seed", 8, "--out", root / "noisy.json"),
        run("register", "--maps", root / "noisy.json", "--seed", 8, "--out", root / "pose.json"),
        run("fuse", "--maps", root / "noisy.json", "--pose", root / "pose.json", "--out", root / "layout.json",
            "--obj", root / "layout.obj"),
        run("eval", "--scene", root / "scenes" / "scene_0002.json", "--layout", root / "layout.json",
            "--pose", root / "pose.json", "--losses", "--pred-maps", root / "noisy.json",
            "--gt-maps", root / "maps.json", "--out", root / "report.csv"),
    ]
    cfg = {"format_version": 1, "type": "sweep", "seed": 4, "scenes_per_cell": 3, "grid_n": 128,
           "noise": {"sigma_v": [0.0, 0.005], "sigma_o": [0.005], "outlier_frac": [0.0, 0.3], "flip_p": [0.0]}}
    (root / "sweep.json").write_text(json.dumps(cfg))
    codes.append(run("sweep", "--config", root / "sweep.json", "--out", root / "sweep.csv"))
    return codes, {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_7_cli_determinism(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    codes_a, files_a = _cli_run(tmp_path / "a")
    codes_b, files_b = _cli_run(tmp_path / "b")
    same = files_a == files_b
    ok = codes_a == codes_b == [0] * 7 and same
    assert record(7, ok, f"7 commands, exit codes {codes_a}; {len(files_a)} output files byte-identical across runs: {same}")
