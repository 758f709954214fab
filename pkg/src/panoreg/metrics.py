"""Registration and layout accuracy metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.errors import GEOSException

from .errors import ClippingFailure, EmptyInput, LengthMismatch
from .fusion import LayoutSolid
from .geometry import PlanarPose, wrap_angle

TRANSLATION_EPS = 1e-9


@dataclass(frozen=True)
class PairErrors:
    rot_err: float
    trans_ang_err: float
    pose_valid: bool = True

    @classmethod
    def failed(cls) -> PairErrors:
        return cls(float("inf"), float("inf"), False)


def angular_errors(est: PlanarPose, gt: PlanarPose) -> PairErrors:
    """Rotation and translation-direction errors in degrees.

    A (near) zero ground-truth translation has no direction: the error is 0
    when the estimate is also (near) zero and 180 otherwise. A zero estimate
    against a non-zero truth scores 180.
    """
    rot = abs(np.degrees(wrap_angle(est.theta - gt.theta)))
    te, tg = est.translation, gt.translation
    ne, ng = np.linalg.norm(te), np.linalg.norm(tg)
    if ng < TRANSLATION_EPS:
        trans = 0.0 if ne < TRANSLATION_EPS else 180.0
    elif ne < TRANSLATION_EPS:
        trans = 180.0
    else:
        cos = np.dot(te, tg) / (ne * ng)
        sin = te[0] * tg[1] - te[1] * tg[0]
        trans = abs(np.degrees(np.arctan2(sin / (ne * ng), cos)))
    return PairErrors(float(rot), float(trans), True)


def maa(errors, threshold: float, step: float = 1.0) -> float:
    """Mean accuracy over sub-thresholds ``step, 2*step, ..., threshold`` (degrees).

    Failures enter as ``inf`` and never count as accurate.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise EmptyInput("no errors to average")
    errors = np.where(np.isnan(errors), np.inf, errors)
    taus = np.arange(1, int(round(threshold / step)) + 1) * step
    return float(np.mean([(errors <= tau).mean() for tau in taus]))


def _areas(a: LayoutSolid, b: LayoutSolid) -> tuple[float, float, float]:
    try:
        inter = shapely.intersection(a.footprint, b.footprint).area
    except GEOSException as exc:
        raise ClippingFailure(str(exc)) from exc
    return a.area, b.area, float(inter)


def iou_2d(pred: LayoutSolid, gt: LayoutSolid) -> float:
    area_p, area_g, inter = _areas(pred, gt)
    union = area_p + area_g - inter
    return inter / union if union > 0 else 0.0


def iou_3d(pred: LayoutSolid, gt: LayoutSolid) -> float:
    """Volume IoU of two prisms standing on the same floor plane."""
    area_p, area_g, inter = _areas(pred, gt)
    v_inter = inter * min(pred.height, gt.height)
    v_union = area_p * pred.height + area_g * gt.height - v_inter
    return v_inter / v_union if v_union > 0 else 0.0


def delta_metric(pred_depth, gt_depth, i: int = 1) -> float:
    """Fraction of samples whose depth ratio is within ``1.25 ** i``."""
    pred = np.asarray(pred_depth, dtype=float)
    gt = np.asarray(gt_depth, dtype=float)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"{pred.shape} vs {gt.shape}")
    if pred.size == 0:
        raise EmptyInput("no depths")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(pred / gt, gt / pred)
    ratio = np.where(np.isfinite(ratio), ratio, np.inf)
    return float(np.mean(ratio < 1.25**i))


@dataclass
class PairRecord:
    scene_id: str
    errors: PairErrors
    iou2d: float
    iou3d: float
    delta1: float

    @property
    def success(self) -> bool:
        return self.errors.pose_valid


@dataclass
class MetricsReport:
    """Aggregate over pairs. Failed registrations count as inaccurate at every threshold."""

    pairs: list[PairRecord] = field(default_factory=list)
    maa_step: float = 1.0

    def _col(self, name):
        return np.array([getattr(p, name) for p in self.pairs], dtype=float)

    @property
    def rot_errors(self) -> np.ndarray:
        return np.array([p.errors.rot_err for p in self.pairs], dtype=float)

    @property
    def trans_errors(self) -> np.ndarray:
        return np.array([p.errors.trans_ang_err for p in self.pairs], dtype=float)

    @property
    def success_rate(self) -> float:
        return float(np.mean([p.success for p in self.pairs]))

    @property
    def iou2d(self) -> float:
        return float(np.mean(self._col("iou2d")))

    @property
    def iou3d(self) -> float:
        return float(np.mean(self._col("iou3d")))

    @property
    def delta_i(self) -> float:
        return float(np.mean(self._col("delta1")))

    def mean_rot_err_all(self) -> float:
        """Mean over every pair; ``inf`` as soon as one registration failed."""
        return float(np.mean(self.rot_errors))

    def mean_trans_err_all(self) -> float:
        return float(np.mean(self.trans_errors))

    def mean_rot_err(self) -> float:
        """Mean over successful pairs; NaN when none succeeded."""
        ok = self.rot_errors[np.isfinite(self.rot_errors)]
        return float(ok.mean()) if ok.size else float("nan")

    def mean_trans_err(self) -> float:
        ok = self.trans_errors[np.isfinite(self.trans_errors)]
        return float(ok.mean()) if ok.size else float("nan")

    def r_maa(self, threshold: float) -> float:
        return maa(self.rot_errors, threshold, self.maa_step)

    def t_maa(self, threshold: float) -> float:
        return maa(self.trans_errors, threshold, self.maa_step)

    @property
    def r_maa5(self) -> float:
        return self.r_maa(5)

    @property
    def r_maa10(self) -> float:
        return self.r_maa(10)

    @property
    def t_maa5(self) -> float:
        return self.t_maa(5)

    @property
    def t_maa10(self) -> float:
        return self.t_maa(10)
