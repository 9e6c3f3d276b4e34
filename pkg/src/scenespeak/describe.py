"""Turns ranged objects into one prioritized, deterministic sentence.

Objects sharing a heading and direction merge into groups when their
distances sit within a narrow band of the group's nearest member; the nearest
groups are spoken first. Group distance is the minimum over members - for
someone navigating by ear, the closest obstacle is the one that matters.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .ranging import Heading, RangedObject

PLURALS = {
    "woman": "women",
    "man": "men",
    "person": "people",
    "child": "children",
}

DEFAULT_TEMPLATES = {
    "toward": "headed towards you",
    "away": "headed away from you",
    "static": "standing still",
    "left": "to your left",
    "right": "to your right",
    "center": "ahead",
}

EMPTY_SCENE_TEXT = "Nothing detected nearby."


@dataclass(frozen=True)
class DescriberConfig:
    band_width_m: float = 0.25
    max_groups: int = 3
    templates: dict[str, str] = field(default_factory=dict)

    def phrase(self, key: str) -> str:
        return self.templates.get(key, DEFAULT_TEMPLATES[key])


@dataclass(frozen=True)
class ObjectGroup:
    """Objects close together, moving alike: (label, count) pairs plus the
    group's nearest distance."""

    members: tuple[tuple[str, int], ...]
    distance_m: float
    heading: Heading
    direction: Direction

    @property
    def total_count(self) -> int:
        return sum(count for _, count in self.members)


@dataclass(frozen=True)
class SceneDescription:
    text: str
    groups_reported: tuple[ObjectGroup, ...]


def pluralize(label: str, count: int) -> str:
    if count == 1:
        return label
    return PLURALS.get(label, label + "s")


def group_and_prioritize(
    objects: list[RangedObject], cfg: DescriberConfig | None = None
) -> list[ObjectGroup]:
    """Merge nearby like-moving objects and order groups nearest-first."""
    cfg = cfg or DescriberConfig()
    builders: list[dict] = []
    for obj in sorted(objects, key=lambda o: o.distance_m):
        for g in builders:
            if (
                g["heading"] is obj.heading
                and g["direction"] is obj.direction
                and obj.distance_m - g["distance"] <= cfg.band_width_m
            ):
                g["labels"][obj.detection.label] += 1
                break
        else:
            builders.append(
                {
                    "heading": obj.heading,
                    "direction": obj.direction,
                    "distance": obj.distance_m,
                    "labels": Counter({obj.detection.label: 1}),
                }
            )
    groups = [
        ObjectGroup(
            members=tuple(sorted(g["labels"].items(), key=lambda kv: (-kv[1], kv[0]))),
            distance_m=g["distance"],
            heading=g["heading"],
            direction=g["direction"],
        )
        for g in builders
    ]
    return groups[: cfg.max_groups]


def _motion_phrase(group: ObjectGroup, cfg: DescriberConfig) -> str:
    verb = "is" if group.total_count == 1 else "are"
    direction_key = group.direction.value
    if group.heading is Heading.TOWARD:
        return f"{verb} {cfg.phrase('toward')}"
    if group.heading is Heading.AWAY:
        return f"{verb} {cfg.phrase('away')}"
    if group.heading is Heading.STATIC:
        return f"{verb} {cfg.phrase('static')} {cfg.phrase(direction_key)}"
    return f"{verb} {cfg.phrase(direction_key)}"


def render_description(
    groups: list[ObjectGroup], cfg: DescriberConfig | None = None
) -> SceneDescription:
    """Deterministic sentence for the given groups, nearest group first."""
    cfg = cfg or DescriberConfig()
    if not groups:
        return SceneDescription(text=EMPTY_SCENE_TEXT, groups_reported=())
    clauses = []
    for group in groups:
        members = " and ".join(
            f"{count} {pluralize(label, count)}" for label, count in group.members
        )
        clauses.append(
            f"{members}, at {group.distance_m:.2f} meters away, {_motion_phrase(group, cfg)}"
        )
    return SceneDescription(text="; ".join(clauses) + ".", groups_reported=tuple(groups))
