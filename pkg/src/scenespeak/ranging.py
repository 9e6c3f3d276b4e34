"""Pinhole-camera distance estimation, direction, and cross-frame heading.

Similar triangles give H/D = h/f for real height H, distance D, bounding-box
pixel height h, and focal length f in pixels, so D = H * f / h.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Sequence

from .perception import BBox, Detection


class DegenerateBBox(ValueError):
    """Raised when a bounding box has no positive pixel height."""


class UnknownClass(LookupError):
    """Raised for labels with no registered real-world height."""


class NonPositiveInput(ValueError):
    """Raised when a calibration input that must be positive is not."""


class Direction(Enum):
    LEFT = "left"
    CENTER = "center"
    RIGHT = "right"


class Heading(Enum):
    TOWARD = "toward"
    AWAY = "away"
    STATIC = "static"
    UNKNOWN = "unknown"


DEFAULT_HEIGHTS_M = {
    "person": 1.7,
    "car": 1.5,
    "bicycle": 1.0,
    "dog": 0.5,
}


@dataclass(frozen=True)
class CameraModel:
    """Camera intrinsics reduced to a focal length in pixel units."""

    focal_length_px: float
    image_width_px: int = 640
    image_height_px: int = 480

    def __post_init__(self) -> None:
        if self.focal_length_px <= 0:
            raise NonPositiveInput(f"focal length must be > 0, got {self.focal_length_px}")
        if self.image_width_px <= 0 or self.image_height_px <= 0:
            raise NonPositiveInput("image dimensions must be positive")


@dataclass
class HeightRegistry:
    """Known real-world object heights in meters, keyed by class label."""

    heights_m: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_HEIGHTS_M))

    def __post_init__(self) -> None:
        for label, height in self.heights_m.items():
            if height <= 0:
                raise NonPositiveInput(f"height for {label!r} must be > 0, got {height}")

    def known_height(self, label: str) -> float:
        try:
            return self.heights_m[label]
        except KeyError:
            raise UnknownClass(f"no registered height for class {label!r}") from None

    def __contains__(self, label: str) -> bool:
        return label in self.heights_m

    @classmethod
    def from_json(cls, path: str) -> "HeightRegistry":
        with open(path, encoding="utf-8") as fh:
            return cls(heights_m={str(k): float(v) for k, v in json.load(fh).items()})


@dataclass(frozen=True)
class RangedObject:
    """A detection augmented with metric distance, direction, and heading."""

    detection: Detection
    distance_m: float
    direction: Direction
    heading: Heading

    def __post_init__(self) -> None:
        if self.distance_m <= 0:
            raise ValueError(f"distance must be > 0, got {self.distance_m}")


def image_height(bbox: BBox) -> float:
    """Pixel height of a bounding box: y2 - y1."""
    _, y1, _, y2 = bbox
    h = y2 - y1
    if h <= 0:
        raise DegenerateBBox(f"bbox height must be > 0, got {h}")
    return h


def estimate_distance(
    bbox: BBox, label: str, registry: HeightRegistry, camera: CameraModel
) -> float:
    """Distance in meters: known height * focal length / bbox pixel height."""
    known_height_m = registry.known_height(label)
    return known_height_m * camera.focal_length_px / image_height(bbox)


def calibrate_focal_length(
    known_height_m: float, known_distance_m: float, observed_bbox: BBox
) -> float:
    """Solve the pinhole relation for f given one observation: f = D * h / H."""
    if known_height_m <= 0:
        raise NonPositiveInput(f"known height must be > 0, got {known_height_m}")
    if known_distance_m <= 0:
        raise NonPositiveInput(f"known distance must be > 0, got {known_distance_m}")
    return known_distance_m * image_height(observed_bbox) / known_height_m


def save_calibration(path: str, focal_length_px: float) -> None:
    record = {
        "focal_length_px": float(focal_length_px),
        "calibrated_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh)


def load_calibration(path: str) -> float:
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    focal = float(record["focal_length_px"])
    if focal <= 0:
        raise NonPositiveInput(f"calibration file carries focal length {focal}")
    return focal


def direction_of(bbox: BBox, image_width_px: int) -> Direction:
    """Thirds rule on the bbox center; both boundaries belong to CENTER."""
    x1, _, x2, _ = bbox
    center = (x1 + x2) / 2
    if center < image_width_px / 3:
        return Direction.LEFT
    if center > 2 * image_width_px / 3:
        return Direction.RIGHT
    return Direction.CENTER


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two pixel boxes."""
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = max(0.0, ix2 - ix1), max(0.0, iy2 - iy1)
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


@dataclass(frozen=True)
class Track:
    """One object followed across the frames of a batch."""

    observations: tuple[tuple[int, Detection], ...]
    heading: Heading
    direction: Direction

    @property
    def last_frame_index(self) -> int:
        return self.observations[-1][0]

    @property
    def last_detection(self) -> Detection:
        return self.observations[-1][1]


def _heading_of(
    observations: list[tuple[int, Detection]], grow: float, shrink: float
) -> Heading:
    if len(observations) < 2:
        return Heading.UNKNOWN
    first = image_height(observations[0][1].bbox)
    last = image_height(observations[-1][1].bbox)
    if last >= grow * first:
        return Heading.TOWARD
    if last <= shrink * first:
        return Heading.AWAY
    return Heading.STATIC


def associate_and_heading(
    frame_detections: Sequence[Sequence[Detection]],
    camera: CameraModel,
    *,
    iou_threshold: float = 0.3,
    height_change_frac: float = 0.05,
) -> list[Track]:
    """Greedily associate detections across consecutive frames and classify motion.

    Matching is by descending IoU, same label only, each detection used at most
    once. A track growing by the height-change fraction between its first and
    last observation is TOWARD, shrinking by it is AWAY, anything in between is
    STATIC; tracks seen in fewer than two frames are UNKNOWN.
    """
    chains: list[list[tuple[int, Detection]]] = []
    for t, dets in enumerate(frame_detections):
        if t == 0:
            chains = [[(0, d)] for d in dets]
            continue
        extendable = [c for c in chains if c[-1][0] == t - 1]
        candidates = []
        for i, chain in enumerate(extendable):
            for j, det in enumerate(dets):
                if det.label != chain[-1][1].label:
                    continue
                overlap = iou(chain[-1][1].bbox, det.bbox)
                if overlap >= iou_threshold:
                    candidates.append((-overlap, i, j))
        taken_chains: set[int] = set()
        taken_dets: set[int] = set()
        for _, i, j in sorted(candidates):
            if i in taken_chains or j in taken_dets:
                continue
            extendable[i].append((t, dets[j]))
            taken_chains.add(i)
            taken_dets.add(j)
        chains.extend([(t, d)] for j, d in enumerate(dets) if j not in taken_dets)

    grow = 1.0 + height_change_frac
    shrink = 1.0 - height_change_frac
    tracks = []
    for chain in chains:
        tracks.append(
            Track(
                observations=tuple(chain),
                heading=_heading_of(chain, grow, shrink),
                direction=direction_of(chain[-1][1].bbox, camera.image_width_px),
            )
        )
    return tracks
