"""Reference implementations of the training losses over horizon maps.

These are plain numpy evaluations with fixed semantics, meant for validating
an external training pipeline or scoring perturbed maps against the oracle.

Two conventions to be aware of:

* the covisibility terms are negated log-likelihoods, so smaller is better;
* the cyclic correspondence distance defaults to the symmetric form
  ``min(|o - t|, 1 - |o - t|)``; ``mode="one_sided"`` keeps the asymmetric
  ``min(|o - t|, |1 - t + o|)``, which does not wrap when ``o > t``.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import LengthMismatch
from .geometry import boundary_to_depth, estimate_layout_height, wrap_unit
from .scene import HorizonMaps

LOG_EPS = 1e-7
GATE = 0.5

CyclicMode = Literal["symmetric", "one_sided"]


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 1.0
    lambda5: float = 1.0
    alpha: float = 0.1

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda5) < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class LossComponents:
    layout: float = 0.0
    cor: float = 0.0
    covis: float = 0.0
    cycle_cor: float = 0.0
    cycle_covis: float = 0.0


def _same_length(*arrays):
    arrays = [np.asarray(a, dtype=float) for a in arrays]
    if len({a.shape for a in arrays}) != 1:
        raise LengthMismatch(f"shapes differ: {[a.shape for a in arrays]}")
    return arrays


def layout_loss(pred: Sequence[np.ndarray], gt: Sequence[np.ndarray]) -> float:
    """Summed L1 error of the four depth maps (ceiling/floor x two panoramas), divided by M."""
    if len(pred) != len(gt):
        raise LengthMismatch("need matching lists of depth maps")
    total = 0.0
    m = None
    for p, g in zip(pred, gt):
        p, g = _same_length(p, g)
        if m is not None and len(p) != m:
            raise LengthMismatch("all depth maps must share one length")
        m = len(p)
        total += float(np.sum(np.abs(p - g)))
    return total / m


def covis_loss(pred, target, alpha: float = 0.1) -> float:
    """Negated, positive-weighted binary log-likelihood, averaged over samples."""
    c, t = _same_length(pred, target)
    c = np.clip(c, LOG_EPS, 1.0 - LOG_EPS)
    ll = alpha * t * np.log(c) + (1.0 - t) * np.log(1.0 - c)
    return float(-np.mean(ll))


def cyclic_distance(o, t, mode: CyclicMode = "symmetric") -> np.ndarray:
    o, t = _same_length(o, t)
    diff = np.abs(o - t)
    if mode == "symmetric":
        return np.minimum(diff, 1.0 - diff)
    if mode == "one_sided":
        return np.minimum(diff, np.abs(1.0 - t + o))
    raise ValueError(f"unknown cyclic mode {mode!r}")


def correspondence_loss(pred, target, gate, mode: CyclicMode = "symmetric") -> float:
    """Gated cyclic L1: samples with ``gate < 0.5`` contribute zero, the sum is divided by N."""
    o, t, g = _same_length(pred, target, gate)
    d = cyclic_distance(o, t, mode)
    return float(np.mean(np.where(g >= GATE, d, 0.0)))


def cycle_losses(
    composed_corr, composed_covis, u, gt_covis, alpha: float = 0.1, mode: CyclicMode = "symmetric"
) -> tuple[float, float]:
    """Cycle-consistency terms from already composed forward evaluations.

    ``composed_corr[i]`` and ``composed_covis[i]`` are the reversed-order
    predictions queried at the ground-truth correspondence of sample ``i``;
    a cycle-consistent model maps them back to ``u[i]`` and ``gt_covis[i]``.
    """
    u = np.asarray(getattr(u, "u", u), dtype=float)
    return (
        correspondence_loss(composed_corr, u, gt_covis, mode),
        covis_loss(composed_covis, gt_covis, alpha),
    )


def total_loss(components, weights: LossWeights = LossWeights()) -> float:
    if isinstance(components, LossComponents):
        components = astuple(components)
    comps = np.asarray(components, dtype=float)
    if comps.shape != (5,) or not np.all(np.isfinite(comps)):
        raise ValueError("need five finite loss components")
    lam = np.array([weights.lambda1, weights.lambda2, weights.lambda3, weights.lambda4, weights.lambda5])
    return float(lam @ comps)


def sample_periodic(values, at, circular: bool = False) -> np.ndarray:
    """Linearly interpolate a uniformly sampled periodic map at positions ``at`` in [0, 1).

    With ``circular`` the values themselves live on the unit circle and are
    blended along the shorter arc.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    pos = np.mod(np.asarray(at, dtype=float), 1.0) * n
    k = np.floor(pos).astype(int)
    frac = pos - k
    k %= n
    a, b = values[k], values[(k + 1) % n]
    if circular:
        step = np.mod(b - a + 0.5, 1.0) - 0.5
        return wrap_unit(a + frac * step)
    return (1.0 - frac) * a + frac * b


def depth_maps(maps: HorizonMaps) -> list[np.ndarray]:
    """Ceiling- and floor-derived horizon depths of one panorama."""
    ceiling_height = estimate_layout_height(maps.ceiling, maps.floor) - 1.0
    return [boundary_to_depth(maps.ceiling, ceiling_height), boundary_to_depth(maps.floor, 1.0)]


def map_losses(
    pred1: HorizonMaps,
    pred2: HorizonMaps,
    gt1: HorizonMaps,
    gt2: HorizonMaps,
    alpha: float = 0.1,
    mode: CyclicMode = "symmetric",
) -> LossComponents:
    """All five loss terms between predicted and ground-truth map pairs.

    The reversed-order predictions needed by the cycle terms are read off the
    pano-2 maps at the ground-truth correspondences of pano 1.
    """
    layout = layout_loss(depth_maps(pred1) + depth_maps(pred2), depth_maps(gt1) + depth_maps(gt2))
    cor = correspondence_loss(pred1.correspondence, gt1.correspondence, gt1.covisibility, mode)
    covis = covis_loss(pred1.covisibility, gt1.covisibility, alpha)
    back_corr = sample_periodic(pred2.correspondence, gt1.correspondence, circular=True)
    back_covis = sample_periodic(pred2.covisibility, gt1.correspondence)
    cyc_cor, cyc_covis = cycle_losses(back_corr, back_covis, gt1.grid, gt1.covisibility, alpha, mode)
    return LossComponents(layout, cor, covis, cyc_cor, cyc_covis)
