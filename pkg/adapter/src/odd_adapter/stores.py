"""Answer stores behind the protocol session: replay files or a live model.

A store exposes ``capabilities``, ``detect`` and ``score``; the protocol
session turns store answers into wire responses. ``KeyError`` from a store
becomes an in-protocol error response, everything stays alive.
"""

from __future__ import annotations

import json
from typing import Any


class ReplayStore:
    """Detections and/or scores served verbatim from dump files.

    File shapes:
      detections: ``{"detections":[{"video_id":str,"index":int,"boxes":[...]}]}``
      scores:     ``{"scores":[{"video_id":str,"index":int,"score":float}]}``
    """

    def __init__(self, detections_path: str | None = None, scores_path: str | None = None) -> None:
        if detections_path is None and scores_path is None:
            raise ValueError("replay mode needs --detections and/or --scores")
        self._boxes: dict[tuple[str, int], list[dict[str, Any]]] = {}
        self._scores: dict[tuple[str, int], float] = {}
        caps = []
        if detections_path is not None:
            with open(detections_path, encoding="utf-8") as fh:
                payload = json.load(fh)
            for entry in payload.get("detections", []):
                self._boxes[(entry["video_id"], entry["index"])] = entry.get("boxes", [])
            caps.append("detect")
        if scores_path is not None:
            with open(scores_path, encoding="utf-8") as fh:
                payload = json.load(fh)
            for entry in payload.get("scores", []):
                self._scores[(entry["video_id"], entry["index"])] = entry["score"]
            caps.append("score")
        self.capabilities = caps

    def detect(self, video_id: str, index: int, image_path: str | None) -> list[dict[str, Any]]:
        return self._boxes[(video_id, index)]

    def score(self, video_id: str, index: int, image_path: str | None) -> float:
        return self._scores[(video_id, index)]


class ModelStore:
    """Runs a detection model on each frame's image and emits schema boxes.

    Optional: requires the torch/torchvision runtime. Degenerate boxes and
    out-of-range scores coming out of the model are dropped rather than
    sent, so responses always satisfy the wire schema.
    """

    def __init__(
        self,
        model_name: str = "fasterrcnn_resnet50_fpn",
        weights: str | None = None,
        score_threshold: float = 0.05,
        label_map_path: str | None = None,
    ) -> None:
        try:
            import torch
            import torchvision
        except ImportError as exc:
            raise RuntimeError(
                "model mode needs the optional model runtime; install the 'model' extra"
            ) from exc
        self._torch = torch
        factory = getattr(torchvision.models.detection, model_name, None)
        if factory is None:
            raise ValueError(f"unknown detection model {model_name!r}")
        kwargs: dict[str, Any] = {"weights": weights}
        if weights is None:
            kwargs["weights_backbone"] = None
        self._model = factory(**kwargs)
        self._model.eval()
        self._threshold = score_threshold
        self._labels: dict[int, str] | None = None
        if label_map_path is not None:
            with open(label_map_path, encoding="utf-8") as fh:
                raw = json.load(fh)
            self._labels = {int(k): str(v) for k, v in raw.items()}
        self.capabilities = ["detect"]

    def _label(self, class_id: int) -> str:
        if self._labels is not None and class_id in self._labels:
            return self._labels[class_id]
        return str(class_id)

    def detect(self, video_id: str, index: int, image_path: str | None) -> list[dict[str, Any]]:
        if image_path is None:
            raise KeyError(f"no image_path for {video_id}[{index}]; model mode needs one")
        from PIL import Image
        import numpy as np

        with Image.open(image_path) as img:
            array = np.asarray(img.convert("RGB"), dtype="float32") / 255.0
        tensor = self._torch.from_numpy(array).permute(2, 0, 1)
        with self._torch.no_grad():
            output = self._model([tensor])[0]
        boxes = []
        for bbox, label, score in zip(
            output["boxes"].tolist(), output["labels"].tolist(), output["scores"].tolist()
        ):
            x1, y1, x2, y2 = (float(v) for v in bbox)
            if not (x2 > x1 and y2 > y1):
                continue
            if not 0.0 <= score <= 1.0 or score < self._threshold:
                continue
            boxes.append({"label": self._label(int(label)), "bbox": [x1, y1, x2, y2], "score": float(score)})
        return boxes

    def score(self, video_id: str, index: int, image_path: str | None) -> float:
        raise KeyError("model mode does not provide difficulty scores")
