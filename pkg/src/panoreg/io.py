"""JSON documents (scenes, maps, poses, layouts, sweep configs) and CSV reports.

Every JSON document carries ``format_version`` and ``type``; unknown versions
are rejected. Floats are written with Python's shortest round-trip repr, so
``load(save(x)) == x`` bit for bit.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from .errors import SchemaError
from .fusion import LayoutSolid
from .geometry import BoundaryMap, PlanarPose
from .metrics import MetricsReport
from .registration import RegistrationResult
from .scene import HorizonMaps, RoomScene

FORMAT_VERSION = 1
PROVENANCES = ("oracle", "perturbed", "external")

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_camera = {
    "type": "object",
    "required": ["position", "yaw"],
    "properties": {"position": _point, "yaw": {"type": "number"}},
    "additionalProperties": False,
}


def _header(kind: str) -> dict:
    return {
        "format_version": {"const": FORMAT_VERSION},
        "type": {"const": kind},
    }


SCENE_SCHEMA = {
    "type": "object",
    "required": ["format_version", "type", "room", "cam1", "cam2", "ceiling_height", "grid_n"],
    "properties": {
        **_header("scene"),
        "scene_id": {"type": "string"},
        "seed": {"type": "integer"},
        "room": {"type": "array", "items": _point, "minItems": 4},
        "cam1": _camera,
        "cam2": _camera,
        "ceiling_height": {"type": "number", "exclusiveMinimum": 1},
        "grid_n": {"type": "integer", "minimum": 4},
    },
    "additionalProperties": False,
}


def _numbers(**bounds):
    return {"type": "array", "items": {"type": "number", **bounds}}


_pano = {
    "type": "object",
    "required": ["ceiling", "floor", "correspondence", "covisibility"],
    "properties": {
        "ceiling": _numbers(minimum=-1, exclusiveMaximum=0),
        "floor": _numbers(exclusiveMinimum=0, maximum=1),
        "correspondence": _numbers(minimum=0, exclusiveMaximum=1),
        "covisibility": _numbers(minimum=0, maximum=1),
    },
    "additionalProperties": False,
}

MAPS_SCHEMA = {
    "type": "object",
    "required": ["format_version", "type", "grid_n", "provenance", "pano1", "pano2"],
    "properties": {
        **_header("maps"),
        "grid_n": {"type": "integer", "minimum": 4},
        "provenance": {"enum": list(PROVENANCES)},
        "pano1": _pano,
        "pano2": _pano,
    },
    "additionalProperties": False,
}

POSE_SCHEMA = {
    "type": "object",
    "required": ["format_version", "type", "theta_deg", "t", "rmse", "n_inliers", "success"],
    "properties": {
        **_header("pose"),
        "theta_deg": {"type": ["number", "null"]},
        "t": {"oneOf": [_point, {"type": "null"}]},
        "rmse": {"type": ["number", "null"]},
        "n_inliers": {"type": "integer", "minimum": 0},
        "success": {"type": "boolean"},
        "error": {"type": "string"},
    },
    "additionalProperties": False,
}

_ring = {"type": "array", "items": _point, "minItems": 3}
LAYOUT_SCHEMA = {
    "type": "object",
    "required": ["format_version", "type", "height", "polygons"],
    "properties": {
        **_header("layout"),
        "height": {"type": "number", "exclusiveMinimum": 0},
        "polygons": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["outer", "holes"],
                "properties": {"outer": _ring, "holes": {"type": "array", "items": _ring}},
                "additionalProperties": False,
            },
        },
        "disconnected": {"type": "boolean"},
        "repaired": {"type": "boolean"},
    },
    "additionalProperties": False,
}

_grid_axis = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}
SWEEP_SCHEMA = {
    "type": "object",
    "required": ["format_version", "type", "noise", "scenes_per_cell", "seed"],
    "properties": {
        **_header("sweep"),
        "noise": {
            "type": "object",
            "required": ["sigma_v", "sigma_o", "outlier_frac", "flip_p"],
            "properties": {
                "sigma_v": _grid_axis,
                "sigma_o": _grid_axis,
                "outlier_frac": {**_grid_axis, "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}},
                "flip_p": {**_grid_axis, "items": {"type": "number", "minimum": 0, "maximum": 1}},
            },
            "additionalProperties": False,
        },
        "scenes_per_cell": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "grid_n": {"type": "integer", "minimum": 4},
        "room": {
            "type": "object",
            "properties": {
                "vertex_budget": {"type": "integer", "minimum": 4},
                "extent": {"type": "number", "exclusiveMinimum": 0},
                "manhattan": {"type": "boolean"},
                "convex": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "ransac": {"type": "object"},
    },
    "additionalProperties": False,
}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["format_version", "type", "seed", "scenes"],
    "properties": {
        **_header("manifest"),
        "seed": {"type": "integer"},
        "scenes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["file", "seed"],
                "properties": {"file": {"type": "string"}, "seed": {"type": "integer"}},
            },
        },
    },
}


# --------------------------------------------------------------------------
# Low-level helpers
# --------------------------------------------------------------------------

def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def atomic_write(path, text: str) -> None:
    """Write via a temporary sibling file and rename, so readers never see partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path, schema: dict) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    validate(doc, schema, str(path))
    return doc


def validate(doc, schema: dict, where: str = "document") -> None:
    if isinstance(doc, dict) and doc.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise SchemaError(f"{where}: unsupported format_version {doc.get('format_version')!r}")
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {path}: {exc.message}") from None


def _floats(values) -> list[float]:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


def _points(values) -> list[list[float]]:
    return [[float(x), float(z)] for x, z in np.asarray(values, dtype=float)]


# --------------------------------------------------------------------------
# Scenes
# --------------------------------------------------------------------------

def scene_to_doc(scene: RoomScene, grid_n: int, scene_id: str | None = None, seed: int | None = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "type": "scene",
        "room": _points(scene.room),
        "cam1": {"position": [float(c) for c in scene.cam1], "yaw": float(scene.yaw1)},
        "cam2": {"position": [float(c) for c in scene.cam2], "yaw": float(scene.yaw2)},
        "ceiling_height": float(scene.ceiling_height),
        "grid_n": int(grid_n),
    }
    if scene_id is not None:
        doc["scene_id"] = scene_id
    if seed is not None:
        doc["seed"] = int(seed)
    return doc


def scene_from_doc(doc: dict) -> tuple[RoomScene, int]:
    validate(doc, SCENE_SCHEMA, "scene")
    scene = RoomScene(
        room=np.asarray(doc["room"], dtype=float),
        cam1=tuple(doc["cam1"]["position"]),
        cam2=tuple(doc["cam2"]["position"]),
        yaw1=float(doc["cam1"]["yaw"]),
        yaw2=float(doc["cam2"]["yaw"]),
        ceiling_height=float(doc["ceiling_height"]),
    )
    return scene, int(doc["grid_n"])


def save_scene(path, scene: RoomScene, grid_n: int, **extra) -> None:
    atomic_write(path, dumps(scene_to_doc(scene, grid_n, **extra)))


def load_scene(path) -> tuple[RoomScene, int]:
    return scene_from_doc(read_json(path, SCENE_SCHEMA))


# --------------------------------------------------------------------------
# Maps
# --------------------------------------------------------------------------

def _pano_doc(maps: HorizonMaps) -> dict:
    return {
        "ceiling": _floats(maps.ceiling.values),
        "floor": _floats(maps.floor.values),
        "correspondence": _floats(maps.correspondence),
        "covisibility": _floats(maps.covisibility),
    }


def maps_to_doc(maps1: HorizonMaps, maps2: HorizonMaps, provenance: str = "oracle") -> dict:
    if provenance not in PROVENANCES:
        raise ValueError(f"unknown provenance {provenance!r}")
    return {
        "format_version": FORMAT_VERSION,
        "type": "maps",
        "grid_n": len(maps1.correspondence),
        "provenance": provenance,
        "pano1": _pano_doc(maps1),
        "pano2": _pano_doc(maps2),
    }


def maps_from_doc(doc: dict) -> tuple[HorizonMaps, HorizonMaps, str]:
    validate(doc, MAPS_SCHEMA, "maps")
    n = doc["grid_n"]
    out = []
    for key in ("pano1", "pano2"):
        pano = doc[key]
        for field in ("ceiling", "floor", "correspondence", "covisibility"):
            if len(pano[field]) != n:
                raise SchemaError(f"maps: {key}/{field} has {len(pano[field])} values, grid_n is {n}")
        out.append(
            HorizonMaps(
                BoundaryMap("ceiling", pano["ceiling"]),
                BoundaryMap("floor", pano["floor"]),
                pano["correspondence"],
                pano["covisibility"],
            )
        )
    return out[0], out[1], doc["provenance"]


def save_maps(path, maps1: HorizonMaps, maps2: HorizonMaps, provenance: str = "oracle") -> None:
    atomic_write(path, dumps(maps_to_doc(maps1, maps2, provenance)))


def load_maps(path) -> tuple[HorizonMaps, HorizonMaps, str]:
    return maps_from_doc(read_json(path, MAPS_SCHEMA))


# --------------------------------------------------------------------------
# Poses and layouts
# --------------------------------------------------------------------------

def pose_to_doc(result: RegistrationResult | None, error: str | None = None) -> dict:
    doc = {"format_version": FORMAT_VERSION, "type": "pose"}
    if result is None:
        doc.update(theta_deg=None, t=None, rmse=None, n_inliers=0, success=False)
        if error:
            doc["error"] = error
        return doc
    doc.update(
        theta_deg=math.degrees(result.pose.theta),
        t=[float(c) for c in result.pose.t],
        rmse=float(result.rmse),
        n_inliers=result.n_inliers,
        success=True,
    )
    return doc


def pose_from_doc(doc: dict) -> PlanarPose | None:
    """The stored pose, or ``None`` for a failed registration."""
    validate(doc, POSE_SCHEMA, "pose")
    if not doc["success"]:
        return None
    if doc["theta_deg"] is None or doc["t"] is None:
        raise SchemaError("pose: successful registration without a pose")
    return PlanarPose(math.radians(doc["theta_deg"]), tuple(doc["t"]))


def load_pose(path) -> PlanarPose | None:
    return pose_from_doc(read_json(path, POSE_SCHEMA))


def layout_to_doc(layout: LayoutSolid) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "type": "layout",
        "height": float(layout.height),
        "polygons": layout.rings(),
        "disconnected": layout.disconnected,
        "repaired": layout.repaired,
    }


def layout_from_doc(doc: dict) -> LayoutSolid:
    validate(doc, LAYOUT_SCHEMA, "layout")
    return LayoutSolid.from_rings(doc["polygons"], doc["height"], doc.get("repaired", False))


def load_layout(path) -> LayoutSolid:
    return layout_from_doc(read_json(path, LAYOUT_SCHEMA))


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

REPORT_COLUMNS = ["scene_id", "rot_err_deg", "trans_ang_err_deg", "iou2d", "iou3d", "delta1", "success"]
LOSS_COLUMNS = ["loss_layout", "loss_cor", "loss_covis", "loss_cycle_cor", "loss_cycle_covis", "loss_total"]


def fmt(x) -> str:
    """Fixed six-decimal formatting; non-finite values print as ``inf``/``-inf``/``nan``."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def report_csv(report: MetricsReport, losses: list[dict] | None = None, delta_exponent: int = 1) -> str:
    """Per-pair metrics CSV with a ``mean`` footer row.

    Comment lines at the top record the metric conventions, the mAA values and
    the angular-error means over successful pairs. The footer is the plain mean
    of each column over every pair, so one failed pair makes the error means
    ``inf``.
    """
    buf = _io.StringIO()
    buf.write(f"# delta_exponent={delta_exponent} (threshold 1.25^{delta_exponent})\n")
    buf.write(f"# maa_step_deg={report.maa_step:g} (mean accuracy over thresholds step..T)\n")
    buf.write("# failed registrations: errors=inf, accuracy 0 at every threshold\n")
    if report.pairs:
        buf.write(
            "# "
            + " ".join(
                f"{k}={fmt(v)}"
                for k, v in [
                    ("r_maa5", report.r_maa5),
                    ("r_maa10", report.r_maa10),
                    ("t_maa5", report.t_maa5),
                    ("t_maa10", report.t_maa10),
                    ("success_rate", report.success_rate),
                    ("mean_rot_err_success", report.mean_rot_err()),
                    ("mean_trans_err_success", report.mean_trans_err()),
                ]
            )
            + "\n"
        )
    columns = REPORT_COLUMNS + (LOSS_COLUMNS if losses is not None else [])
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    rows = []
    for i, p in enumerate(report.pairs):
        row = [p.errors.rot_err, p.errors.trans_ang_err, p.iou2d, p.iou3d, p.delta1, 1.0 if p.success else 0.0]
        if losses is not None:
            row += [losses[i][c] for c in LOSS_COLUMNS]
        rows.append(row)
        writer.writerow([p.scene_id] + [fmt(v) for v in row[:5]] + [str(int(row[5]))] + [fmt(v) for v in row[6:]])
    if rows:
        cols = np.array(rows, dtype=float).T
        writer.writerow(["mean"] + [fmt(np.mean(c)) for c in cols])
    return buf.getvalue()


SWEEP_COLUMNS = [
    "sigma_v",
    "sigma_o",
    "outlier_frac",
    "flip_p",
    "n_scenes",
    "success_rate",
    "mean_rot_err_deg",
    "mean_trans_ang_err_deg",
    "r_maa5",
    "r_maa10",
    "t_maa5",
    "t_maa10",
    "mean_iou2d",
    "mean_iou3d",
    "mean_delta1",
]


def sweep_csv(rows: list[dict]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([str(row[c]) if c == "n_scenes" else fmt(row[c]) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def read_csv_table(text: str) -> list[dict]:
    """Parse a report or sweep CSV, skipping ``#`` comment lines."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
