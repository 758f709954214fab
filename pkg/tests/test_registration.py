import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from panoreg.errors import DegenerateConfiguration, NoConsensus, TooFewPairs
from panoreg.geometry import PlanarPose, SampleGrid, wrap_angle
from panoreg.registration import (
    MatchedPairs,
    RansacConfig,
    covisibility_filter,
    fit_rigid_2d,
    interpolate_correspondence,
    ransac_pose,
    register,
)
from panoreg.scene import HorizonMaps, NoiseSpec, ground_truth_maps, perturb_maps, random_scene


def ring(m, radius=2.0):
    return radius * SampleGrid(m).directions()


class TestInterpolation:
    m = 16
    pts = ring(16) * np.linspace(1, 2, 16)[:, None]

    def test_node(self):
        np.testing.assert_allclose(interpolate_correspondence(self.pts, [3 / self.m]), self.pts[[3]], atol=1e-15)
        np.testing.assert_allclose(
            interpolate_correspondence(self.pts, [3 / self.m], mode="ray"), self.pts[[3]], atol=1e-14
        )

    def test_midpoint_and_wrap(self):
        got = interpolate_correspondence(self.pts, [3.5 / self.m, 1 - 1 / (2 * self.m)])
        np.testing.assert_allclose(got[0], 0.5 * (self.pts[3] + self.pts[4]), atol=1e-15)
        np.testing.assert_allclose(got[1], 0.5 * (self.pts[-1] + self.pts[0]), atol=1e-15)

    def test_ray_mode_exact_on_straight_wall(self):
        # depths of the wall z = 3 seen at azimuths within +-40 degrees of +z
        m = 64
        u = SampleGrid(m).u
        ang = 2 * np.pi * u
        depth = np.where(np.cos(ang) > 0.7, 3.0 / np.maximum(np.cos(ang), 1e-9), 1.0)
        pts = depth[:, None] * SampleGrid(m).directions()
        q = np.array([0.0031, 0.05, 0.97, 0.9999])
        got = interpolate_correspondence(pts, q, mode="ray")
        np.testing.assert_allclose(got[:, 1], 3.0, atol=1e-12)
        np.testing.assert_allclose(np.arctan2(got[:, 0], got[:, 1]) / (2 * np.pi) % 1, q, atol=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            interpolate_correspondence(self.pts, [])


def test_covisibility_filter_examples():
    pairs = MatchedPairs(np.zeros((3, 2)), np.zeros((3, 2)), np.array([0.9, 0.4, 0.6]))
    kept = covisibility_filter(pairs, 0.5)
    np.testing.assert_array_equal(kept.index, [0, 2])
    full = MatchedPairs(np.zeros((3, 2)), np.zeros((3, 2)), np.ones(3))
    assert len(covisibility_filter(full, 0.5)) == 3
    with pytest.raises(TooFewPairs):
        covisibility_filter(MatchedPairs(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros(3)), 0.5)


def test_fit_examples():
    pose = fit_rigid_2d(np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert math.degrees(pose.theta) == pytest.approx(90.0, abs=1e-12)
    np.testing.assert_allclose(pose.t, (1.0, 1.0), atol=1e-12)
    pts = np.array([[0.3, 1.0], [2.0, -1.0], [4.0, 0.5]])
    ident = fit_rigid_2d(pts, pts)
    assert abs(ident.theta) < 1e-15 and np.allclose(ident.t, 0, atol=1e-15)
    with pytest.raises(DegenerateConfiguration):
        fit_rigid_2d(np.ones((4, 2)), np.ones((4, 2)))


def test_fit_recovers_random_poses(rng):
    for _ in range(100):
        truth = PlanarPose(rng.uniform(-np.pi, np.pi), tuple(rng.uniform(-5, 5, 2)))
        dst = rng.uniform(-4, 4, (50, 2))
        est = fit_rigid_2d(truth.apply(dst), dst)
        assert abs(wrap_angle(est.theta - truth.theta)) < 1e-10
        np.testing.assert_allclose(est.t, truth.t, atol=1e-10)


def sse(pose, src, dst, w):
    return float(w @ np.sum((pose.apply(dst) - src) ** 2, axis=1))


def test_fit_is_true_minimum(rng):
    for _ in range(20):
        dst = rng.uniform(-4, 4, (30, 2))
        src = PlanarPose(rng.uniform(-3, 3), tuple(rng.uniform(-2, 2, 2))).apply(dst) + rng.normal(0, 0.1, (30, 2))
        w = rng.uniform(0.1, 1.0, 30)
        best = fit_rigid_2d(src, dst, w)
        base = sse(best, src, dst, w)
        for dth in (-1e-4, 0, 1e-4):
            for dx in (-1e-4, 0, 1e-4):
                for dz in (-1e-4, 0, 1e-4):
                    moved = PlanarPose(best.theta + dth, (best.t[0] + dx, best.t[1] + dz))
                    assert sse(moved, src, dst, w) >= base - 1e-12


def planted(rng, n=256, outlier_frac=0.3, noise=0.0):
    truth = PlanarPose(rng.uniform(-np.pi, np.pi), tuple(rng.uniform(-3, 3, 2)))
    ang = rng.uniform(0, 2 * np.pi, n)
    src = rng.uniform(1.5, 3.0, n)[:, None] * np.stack([np.sin(ang), np.cos(ang)], 1)
    dst = truth.inverse().apply(src) + rng.normal(0, noise, (n, 2)) if noise else truth.inverse().apply(src)
    k = int(outlier_frac * n)
    bad = rng.permutation(n)[:k]
    dst[bad] = rng.uniform(-3, 3, (k, 2))
    return truth, MatchedPairs(src, dst, np.ones(n)), bad


def test_ransac_noiseless_exact(rng):
    truth, pairs, _ = planted(rng, outlier_frac=0.0)
    res = ransac_pose(pairs, RansacConfig(seed=1))
    assert abs(wrap_angle(res.pose.theta - truth.theta)) < 1e-9
    np.testing.assert_allclose(res.pose.t, truth.t, atol=1e-9)
    assert res.n_inliers == len(pairs) and res.rmse < 1e-9


@pytest.mark.slow
def test_ransac_planted_outliers_monte_carlo():
    ok = 0
    for trial in range(1000):
        rng = np.random.default_rng(10_000 + trial)
        truth, pairs, _ = planted(rng)
        res = ransac_pose(pairs, RansacConfig(seed=trial))
        ok += abs(math.degrees(wrap_angle(res.pose.theta - truth.theta))) < 0.01
    assert ok >= 999


def test_ransac_adversarial_no_consensus(rng):
    pairs = MatchedPairs(rng.uniform(-3, 3, (3, 2)), rng.uniform(-3, 3, (3, 2)), np.ones(3))
    with pytest.raises(NoConsensus):
        ransac_pose(pairs, RansacConfig(min_inliers=8))
    with pytest.raises(TooFewPairs):
        ransac_pose(MatchedPairs(np.zeros((1, 2)), np.zeros((1, 2)), np.ones(1)))


def test_ransac_equivariance(rng):
    truth, pairs, _ = planted(rng, noise=0.01)
    cfg = RansacConfig(seed=3)
    base = ransac_pose(pairs, cfg)
    q = PlanarPose(0.7, (1.0, -2.0))
    moved = ransac_pose(MatchedPairs(pairs.src, q.apply(pairs.dst), pairs.weight), cfg)
    expect = base.pose.compose(q.inverse())
    assert abs(wrap_angle(moved.pose.theta - expect.theta)) < 1e-9
    np.testing.assert_allclose(moved.pose.t, expect.t, atol=1e-9)
    np.testing.assert_array_equal(moved.inlier_mask, base.inlier_mask)


@given(st.integers(0, 1000))
def test_ransac_order_invariance(seed):
    rng = np.random.default_rng(seed)
    _, pairs, _ = planted(rng, n=64, noise=0.01)
    perm = rng.permutation(len(pairs))
    shuffled = MatchedPairs(pairs.src[perm], pairs.dst[perm], pairs.weight[perm], pairs.index[perm])
    a = ransac_pose(pairs, RansacConfig(seed=seed, iterations=200))
    b = ransac_pose(shuffled, RansacConfig(seed=seed, iterations=200))
    assert a.pose == b.pose
    np.testing.assert_array_equal(a.inlier_mask[perm], b.inlier_mask)


def test_ransac_inliers_within_tolerance(rng):
    _, pairs, _ = planted(rng, noise=0.005)
    res = ransac_pose(pairs, RansacConfig(seed=0))
    resid = np.linalg.norm(res.pose.apply(pairs.dst[res.inlier_mask]) - pairs.src[res.inlier_mask], axis=1)
    assert np.all(resid < res.inlier_tol)


def test_register_oracle_convex_scene():
    grid = SampleGrid(256)
    for seed in range(10):
        scene = random_scene(seed, vertex_budget=7, manhattan=False, convex=True)
        m1, m2 = ground_truth_maps(scene, grid)
        res = register(m1, m2)
        assert abs(math.degrees(wrap_angle(res.pose.theta - scene.pose.theta))) < 0.1
        assert np.linalg.norm(res.pose.translation - scene.pose.translation) < 1e-3


def test_register_identical_panoramas():
    m1, _ = ground_truth_maps(random_scene(2), SampleGrid(128))
    same = HorizonMaps(m1.ceiling, m1.floor, m1.grid.u, np.ones(128))
    res = register(same, same)
    assert abs(res.pose.theta) < 1e-12 and np.allclose(res.pose.t, 0, atol=1e-12)


def test_register_no_covisibility():
    m1, m2 = ground_truth_maps(random_scene(2), SampleGrid(64))
    blind = HorizonMaps(m1.ceiling, m1.floor, m1.correspondence, np.zeros(64))
    with pytest.raises(TooFewPairs):
        register(blind, m2)


@pytest.mark.parametrize("boundary", ["floor", "both"])
def test_register_other_boundaries(boundary):
    scene = random_scene(4, vertex_budget=4)
    m1, m2 = ground_truth_maps(scene, SampleGrid(128))
    res = register(m1, m2, RansacConfig(boundary=boundary))
    assert abs(wrap_angle(res.pose.theta - scene.pose.theta)) < 1e-9


def test_register_deterministic():
    scene = random_scene(8, vertex_budget=8)
    m1, m2 = ground_truth_maps(scene, SampleGrid(128))
    m1 = perturb_maps(m1, NoiseSpec(0.01, 0.01, 0.3, 0.05, seed=1))
    a, b = register(m1, m2, RansacConfig(seed=4)), register(m1, m2, RansacConfig(seed=4))
    assert a.pose == b.pose and np.array_equal(a.inlier_mask, b.inlier_mask)


def test_config_validation():
    for bad in (dict(iterations=0), dict(inlier_tol=0.0), dict(min_sample=3), dict(covis_threshold=1.0),
                dict(boundary="walls"), dict(refine_sigmas=0.0)):
        with pytest.raises(ValueError):
            RansacConfig(**bad)
