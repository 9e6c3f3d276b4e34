"""Detection backends: an HTTP detector endpoint and a scripted test double.

The wire protocol is a POST to ``/detect`` with
``{"frame_id", "width", "height", "image_path"}`` answered by
``{"detections": [{"label", "confidence", "bbox"}]}``. Responses are
validated, never clamped: a backend that returns garbage is a bug to surface,
not smooth over.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import requests

from .scheduling import Frame

log = logging.getLogger(__name__)

BBox = tuple[float, float, float, float]

DEFAULT_MIN_CONFIDENCE = 0.35

_IRREGULAR_SINGULAR = {
    "women": "woman",
    "men": "man",
    "people": "person",
    "persons": "person",
    "children": "child",
}


class BackendUnreachable(ConnectionError):
    """Raised when the detector endpoint cannot be reached."""


class MalformedResponse(RuntimeError):
    """Raised for non-200 responses or payloads violating the detection schema."""


class InvalidBBox(ValueError):
    """Raised when a backend returns an empty, inverted, or out-of-bounds box."""


@dataclass(frozen=True)
class Detection:
    """A labeled bounding box in pixel coordinates (x1, y1, x2, y2)."""

    label: str
    confidence: float
    bbox: BBox

    def __post_init__(self) -> None:
        x1, y1, x2, y2 = self.bbox
        if not (x1 < x2 and y1 < y2):
            raise InvalidBBox(f"bbox must satisfy x1 < x2 and y1 < y2, got {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise MalformedResponse(f"confidence must be in [0, 1], got {self.confidence}")


DetectionScript = dict[int, list[Detection]]


def normalize_label(label: str) -> str:
    """Lowercase singular form so registry and describer share one vocabulary."""
    word = label.strip().lower()
    if word in _IRREGULAR_SINGULAR:
        return _IRREGULAR_SINGULAR[word]
    if len(word) > 3 and word.endswith("s") and not word.endswith(("ss", "us", "is")):
        return word[:-1]
    return word


def _decode_detection(entry: object, frame: Frame) -> Detection:
    if not isinstance(entry, dict):
        raise MalformedResponse(f"detection entry must be an object, got {type(entry).__name__}")
    try:
        label = entry["label"]
        confidence = entry["confidence"]
        bbox = entry["bbox"]
    except KeyError as exc:
        raise MalformedResponse(f"detection entry missing key {exc}") from None
    if not isinstance(label, str) or not isinstance(confidence, (int, float)):
        raise MalformedResponse("label must be a string and confidence a number")
    if not (isinstance(bbox, (list, tuple)) and len(bbox) == 4):
        raise MalformedResponse(f"bbox must be a 4-element array, got {bbox!r}")
    x1, y1, x2, y2 = (float(v) for v in bbox)
    if not (0 <= x1 and x2 <= frame.width_px and 0 <= y1 and y2 <= frame.height_px):
        raise InvalidBBox(
            f"bbox {bbox!r} outside {frame.width_px}x{frame.height_px} frame"
        )
    return Detection(label=normalize_label(label), confidence=float(confidence), bbox=(x1, y1, x2, y2))


def decode_detections(payload: object, frame: Frame) -> list[Detection]:
    """Validate a response payload and build Detections, rejecting bad values."""
    if not isinstance(payload, dict) or not isinstance(payload.get("detections"), list):
        raise MalformedResponse("response must carry a 'detections' array")
    return [_decode_detection(entry, frame) for entry in payload["detections"]]


def detect(frame: Frame, backend_url: str, *, timeout_s: float = 5.0) -> list[Detection]:
    """Ask an external detector endpoint for this frame's detections."""
    body = {
        "frame_id": frame.frame_id,
        "width": frame.width_px,
        "height": frame.height_px,
        "image_path": str(frame.payload),
    }
    try:
        response = requests.post(f"{backend_url}/detect", json=body, timeout=timeout_s)
    except requests.RequestException as exc:
        raise BackendUnreachable(f"detector at {backend_url} unreachable: {exc}") from exc
    if response.status_code != 200:
        raise MalformedResponse(f"detector returned HTTP {response.status_code}")
    try:
        payload = response.json()
    except ValueError as exc:
        raise MalformedResponse(f"detector response is not JSON: {exc}") from exc
    return decode_detections(payload, frame)


def mock_detect(frame: Frame, script: DetectionScript) -> list[Detection]:
    """Scripted detections for a frame id; unscripted frames yield nothing."""
    return list(script.get(frame.frame_id, []))


def load_script(path: str) -> DetectionScript:
    """Load a detection script: JSON object of frame_id -> detection list."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    script: DetectionScript = {}
    for frame_id, entries in raw.items():
        script[int(frame_id)] = [
            Detection(
                label=normalize_label(entry["label"]),
                confidence=float(entry["confidence"]),
                bbox=tuple(float(v) for v in entry["bbox"]),
            )
            for entry in entries
        ]
    return script


def filter_by_confidence(detections: list[Detection], min_confidence: float) -> list[Detection]:
    return [d for d in detections if d.confidence >= min_confidence]


class HttpDetector:
    """Detector backed by the wire protocol."""

    def __init__(self, backend_url: str, *, timeout_s: float = 5.0) -> None:
        self.backend_url = backend_url.rstrip("/")
        self.timeout_s = timeout_s

    def detect(self, frame: Frame) -> list[Detection]:
        return detect(frame, self.backend_url, timeout_s=self.timeout_s)


class ScriptedDetector:
    """Deterministic detector reading from a script, for tests and replays."""

    def __init__(self, script: DetectionScript) -> None:
        self.script = script

    @classmethod
    def from_file(cls, path: str) -> "ScriptedDetector":
        return cls(load_script(path))

    def detect(self, frame: Frame) -> list[Detection]:
        return mock_detect(frame, self.script)
