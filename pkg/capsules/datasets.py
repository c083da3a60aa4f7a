"""Line-delimited JSON files for scene datasets and per-scene outcomes."""

import json
from pathlib import Path

import numpy as np

from .exceptions import DatasetFormatError
from .geometry import Pose
from .scenegen import Scene
from .serializers import OutcomeRecordSerializer, SceneRecordSerializer


def _dumps(record):
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


def scene_to_record(scene):
    return {
        "index": int(scene.index),
        "seed": int(scene.seed),
        "sigma": float(scene.sigma),
        "points": [[float(x), float(y)] for x, y in scene.points],
        "labels": [int(v) for v in scene.labels],
        "parts": [int(v) for v in scene.parts],
        "missing_mask": [bool(v) for v in scene.missing_mask],
        "poses": [None if pose is None else list(pose.y) for pose in scene.poses],
    }


def scene_from_record(record):
    return Scene(
        index=record["index"],
        seed=record["seed"],
        sigma=record["sigma"],
        points=np.asarray(record["points"], dtype=float).reshape(-1, 2),
        labels=np.asarray(record["labels"], dtype=int),
        parts=np.asarray(record["parts"], dtype=int),
        missing_mask=np.asarray(record["missing_mask"], dtype=bool),
        poses=tuple(None if y is None else Pose(y) for y in record["poses"]),
    )


def _read_records(path, serializer_class, context=None):
    records = []
    with Path(path).open(encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"invalid JSON ({exc.msg})", line=number) from exc
            serializer = serializer_class(data=data, context=context or {})
            if not serializer.is_valid():
                raise DatasetFormatError(str(serializer.errors), line=number)
            records.append(serializer.validated_data)
    return records


def write_dataset(path, scenes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for scene in scenes:
            handle.write(_dumps(scene_to_record(scene)) + "\n")
    return path


def read_dataset(path, library=None):
    records = _read_records(path, SceneRecordSerializer, {"library": library})
    return [scene_from_record(record) for record in records]


def write_outcomes(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(_dumps(record) + "\n")
    return path


def read_outcomes(path):
    return _read_records(path, OutcomeRecordSerializer)
