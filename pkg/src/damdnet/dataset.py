"""Dataset directory and prediction file formats.

A dataset is a directory of binary PPM images plus an `annotations.jsonl`
file, one JSON object per line:

    {"image_path": ..., "bbox": [x, y, w, h], "landmarks": [[x, y] * 68],
     "visibility": [bool * 68], "yaw_deg": ..., "params": [62 floats]}

`params` is optional (evaluation-only data omits it).  Predictions are
JSON-lines of {"image_path": ..., "landmarks": [[x, y] * 68]}.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError

ANNOTATIONS_NAME = "annotations.jsonl"


@dataclass
class SampleRecord:
    image_path: str
    bbox: np.ndarray  # (4,) x, y, w, h
    landmarks: np.ndarray  # (68, 2)
    visibility: np.ndarray  # (68,) bool
    yaw_deg: float
    params: np.ndarray | None = None  # (62,)


def _dump_floats(arr):
    return [float(v) for v in np.asarray(arr).reshape(-1)]


def record_to_json(rec: SampleRecord):
    obj = {
        "image_path": rec.image_path,
        "bbox": _dump_floats(rec.bbox),
        "landmarks": [[float(x), float(y)] for x, y in rec.landmarks],
        "visibility": [bool(v) for v in rec.visibility],
        "yaw_deg": float(rec.yaw_deg),
    }
    if rec.params is not None:
        obj["params"] = _dump_floats(rec.params)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _parse_record(obj, lineno, path):
    try:
        bbox = np.asarray(obj["bbox"], dtype=np.float64)
        landmarks = np.asarray(obj["landmarks"], dtype=np.float64)
        visibility = np.asarray(obj["visibility"], dtype=bool)
        rec = SampleRecord(
            image_path=obj["image_path"],
            bbox=bbox,
            landmarks=landmarks,
            visibility=visibility,
            yaw_deg=float(obj["yaw_deg"]),
            params=np.asarray(obj["params"], dtype=np.float64) if "params" in obj else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}:{lineno}: bad sample record ({exc})") from exc
    if rec.bbox.shape != (4,):
        raise DataError(f"{path}:{lineno}: bbox must have 4 entries")
    if rec.landmarks.shape != (68, 2):
        raise DataError(f"{path}:{lineno}: landmarks must be 68x2")
    if rec.visibility.shape != (68,):
        raise DataError(f"{path}:{lineno}: visibility must have 68 entries")
    if rec.params is not None and rec.params.shape != (62,):
        raise DataError(f"{path}:{lineno}: params must have 62 entries")
    return rec


def write_dataset(records, directory):
    path = os.path.join(directory, ANNOTATIONS_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_to_json(rec) + "\n")
    return path


def read_dataset(directory):
    path = os.path.join(directory, ANNOTATIONS_NAME)
    if not os.path.exists(path):
        raise DataError(f"{path}: annotations file not found")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            records.append(_parse_record(obj, lineno, path))
    return records


def write_predictions(preds, path):
    """preds: iterable of (image_path, landmarks 68x2)."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_path, landmarks in preds:
            obj = {
                "image_path": image_path,
                "landmarks": [[float(x), float(y)] for x, y in landmarks],
            }
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


def read_predictions(path):
    if not os.path.exists(path):
        raise DataError(f"{path}: predictions file not found")
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                landmarks = np.asarray(obj["landmarks"], dtype=np.float64)
                image_path = obj["image_path"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad prediction record ({exc})") from exc
            if landmarks.shape != (68, 2):
                raise DataError(f"{path}:{lineno}: landmarks must be 68x2")
            preds[image_path] = landmarks
    return preds
