"""Readers and writers for the JSON file formats used at every boundary.

Formats (all standard JSON, UTF-8, numbers as 64-bit floats):

* dataset:  ``{"videos":[{"id":str,"frames":[{"index":int,"image_path":str|null,
  "ground_truth":[{"label":str,"bbox":[x1,y1,x2,y2]}]}]}]}``
* dump:     ``{"detections":[{"video_id":str,"index":int,
  "boxes":[{"label":str,"bbox":[x1,y1,x2,y2],"score":float}]}]}``
* scores:   ``{"scores":[{"video_id":str,"index":int,"score":float}]}``
* pools:    ``{"pools":[{"video_id":str,"frames":[int,...]}]}``

Writers emit values at full double precision so a parse -> serialize ->
parse round trip is an identity on values.
"""

from __future__ import annotations

import json
import os
from typing import Any, Iterable, Mapping

from .errors import InputError, ValidationError
from .model import (
    BoundingBox,
    Detection,
    DetectionDump,
    FrameKey,
    FrameRecord,
    GroundTruthBox,
    Video,
    VideoDataset,
    validate_dataset,
    validate_detections,
)


def _reject_nan(value: str) -> float:
    raise InputError(f"non-finite JSON number {value!r} is not allowed")


def _load_json(path: str | os.PathLike[str]) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh, parse_constant=_reject_nan)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _dump_json(path: str | os.PathLike[str], payload: Any) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, allow_nan=False, separators=(",", ":"))
            fh.write("\n")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def _as_bbox(raw: Any, where: str) -> BoundingBox:
    if not (isinstance(raw, list) and len(raw) == 4):
        raise InputError(f"{where}: bbox must be a list of four numbers, got {raw!r}")
    try:
        x1, y1, x2, y2 = (float(v) for v in raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: bbox holds a non-numeric value: {raw!r}") from exc
    return BoundingBox(x1, y1, x2, y2)


def parse_dataset(payload: Any, where: str = "<dataset>") -> VideoDataset:
    """Build a VideoDataset from decoded JSON without validating invariants."""
    if not isinstance(payload, dict) or not isinstance(payload.get("videos"), list):
        raise InputError(f"{where}: expected a top-level object with a 'videos' list")
    videos = []
    for vraw in payload["videos"]:
        vid = vraw.get("id")
        if not isinstance(vid, str):
            raise InputError(f"{where}: video id must be a string, got {vid!r}")
        frames = []
        for fraw in vraw.get("frames", []):
            index = fraw.get("index")
            if not isinstance(index, int):
                raise InputError(f"{where}: frame index must be an integer, got {index!r}")
            key = FrameKey(vid, index)
            gts = tuple(
                GroundTruthBox(_as_bbox(g.get("bbox"), f"{vid}[{index}]"), str(g.get("label", "")))
                for g in fraw.get("ground_truth", [])
            )
            frames.append(FrameRecord(key, gts, fraw.get("image_path")))
        videos.append(Video(vid, tuple(frames)))
    return VideoDataset(tuple(videos))


def read_dataset(path: str | os.PathLike[str], validate: bool = True) -> VideoDataset:
    """Read a dataset file, rejecting invariant violations unless told not to."""
    ds = parse_dataset(_load_json(path), str(path))
    if validate:
        violations = validate_dataset(ds)
        if violations:
            listing = "\n  ".join(str(v) for v in violations)
            raise ValidationError(f"{path} violates dataset invariants:\n  {listing}")
    return ds


def write_dataset(path: str | os.PathLike[str], ds: VideoDataset) -> None:
    payload = {
        "videos": [
            {
                "id": video.id,
                "frames": [
                    {
                        "index": frame.key.index,
                        "image_path": frame.image_path,
                        "ground_truth": [
                            {"label": gt.label, "bbox": gt.bbox.as_list()} for gt in frame.ground_truth
                        ],
                    }
                    for frame in video.frames
                ],
            }
            for video in ds.videos
        ]
    }
    _dump_json(path, payload)


def parse_boxes(raw: Any, key: FrameKey, where: str) -> list[Detection]:
    """Decode one frame's detection boxes and enforce the detection schema."""
    if not isinstance(raw, list):
        raise InputError(f"{where}: boxes must be a list")
    boxes = []
    for braw in raw:
        score = braw.get("score")
        if not isinstance(score, (int, float)):
            raise InputError(f"{where}: box score must be a number, got {score!r}")
        bbox = _as_bbox(braw.get("bbox"), where)
        boxes.append(Detection(bbox, str(braw.get("label", "")), float(score)))
    violations = validate_detections(key, boxes)
    if violations:
        listing = "\n  ".join(str(v) for v in violations)
        raise ValidationError(f"{where} violates detection invariants:\n  {listing}")
    return boxes


def read_dump(path: str | os.PathLike[str]) -> DetectionDump:
    """Read a detection dump file, enforcing detection invariants."""
    payload = _load_json(path)
    if not isinstance(payload, dict) or not isinstance(payload.get("detections"), list):
        raise InputError(f"{path}: expected a top-level object with a 'detections' list")
    dump: DetectionDump = {}
    for entry in payload["detections"]:
        vid, index = entry.get("video_id"), entry.get("index")
        if not isinstance(vid, str) or not isinstance(index, int):
            raise InputError(f"{path}: each entry needs a string video_id and an integer index")
        key = FrameKey(vid, index)
        if key in dump:
            raise ValidationError(f"{path}: duplicate detection entry for {vid}[{index}]")
        dump[key] = parse_boxes(entry.get("boxes", []), key, f"{path}: {vid}[{index}]")
    return dump


def write_dump(path: str | os.PathLike[str], dump: DetectionDump) -> None:
    _dump_json(path, dump_payload(dump))


def dump_payload(dump: DetectionDump) -> dict[str, Any]:
    return {
        "detections": [
            {
                "video_id": key.video_id,
                "index": key.index,
                "boxes": [
                    {"label": d.label, "bbox": d.bbox.as_list(), "score": d.confidence} for d in boxes
                ],
            }
            for key, boxes in dump.items()
        ]
    }


def read_scores(path: str | os.PathLike[str]) -> dict[FrameKey, float]:
    """Read a per-frame score file (each score must lie in [0, 1])."""
    payload = _load_json(path)
    if not isinstance(payload, dict) or not isinstance(payload.get("scores"), list):
        raise InputError(f"{path}: expected a top-level object with a 'scores' list")
    scores: dict[FrameKey, float] = {}
    for entry in payload["scores"]:
        vid, index, score = entry.get("video_id"), entry.get("index"), entry.get("score")
        if not isinstance(vid, str) or not isinstance(index, int):
            raise InputError(f"{path}: each entry needs a string video_id and an integer index")
        if not isinstance(score, (int, float)) or not 0.0 <= float(score) <= 1.0:
            raise ValidationError(f"{path}: score for {vid}[{index}] must lie in [0, 1], got {score!r}")
        key = FrameKey(vid, index)
        if key in scores:
            raise ValidationError(f"{path}: duplicate score entry for {vid}[{index}]")
        scores[key] = float(score)
    return scores


def write_scores(path: str | os.PathLike[str], scores: Mapping[FrameKey, float]) -> None:
    payload = {
        "scores": [
            {"video_id": key.video_id, "index": key.index, "score": value}
            for key, value in scores.items()
        ]
    }
    _dump_json(path, payload)


def write_pools(path: str | os.PathLike[str], pools: Iterable[tuple[str, list[int]]]) -> None:
    payload = {"pools": [{"video_id": vid, "frames": frames} for vid, frames in pools]}
    _dump_json(path, payload)


def write_json(path: str | os.PathLike[str], payload: Any) -> None:
    """Write an arbitrary report document with the shared JSON conventions."""
    _dump_json(path, payload)


def read_json(path: str | os.PathLike[str]) -> Any:
    return _load_json(path)
