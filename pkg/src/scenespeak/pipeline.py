"""Wires scheduler, detector, ranging, describer, and speech into the cycle loop.

One cycle: acquire a frame batch, detect on each frame (degrading to the
frames that succeed), track objects across the batch for headings, range the
last frame's detections, render one prioritized sentence, and dispatch it as
speech (or print it in dry-run). Each cycle emits one metrics record.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import TextIO

import requests

from .describe import DescriberConfig, SceneDescription, group_and_prioritize, render_description
from .perception import (
    BackendUnreachable,
    HttpDetector,
    InvalidBBox,
    MalformedResponse,
    ScriptedDetector,
    filter_by_confidence,
)
from .ranging import (
    CameraModel,
    HeightRegistry,
    RangedObject,
    UnknownClass,
    associate_and_heading,
    estimate_distance,
    load_calibration,
)
from .scheduling import (
    BatchScheduler,
    Clock,
    DirectorySource,
    FrameBatch,
    FrameSource,
    MonotonicClock,
    SchedulerConfig,
    SourceExhausted,
    SyntheticSource,
)
from .tts import Prosody, SpeechDispatcher, TtsUnreachable, Utterance, VOICE_COUNT, normalize_text

log = logging.getLogger(__name__)


class SchemaViolation(ValueError):
    """Config file violates the schema; the message names the offending key."""


class AllFramesFailed(RuntimeError):
    """Every detect call in a cycle failed; the cycle is dropped and counted."""


class InitializationError(RuntimeError):
    """The pipeline cannot start: missing file or unreachable mandatory backend."""


@dataclass(frozen=True)
class PerceptionSettings:
    backend_url: str | None = None
    mock_script_path: str | None = None
    min_confidence: float = 0.35


@dataclass(frozen=True)
class DistanceSettings:
    height_registry_path: str | None = None
    focal_length_px: float | None = 800.0
    calibration_path: str | None = None
    image_width_px: int = 640
    image_height_px: int = 480
    heading_change_frac: float = 0.05
    association_iou: float = 0.3


@dataclass(frozen=True)
class DescriberSettings:
    band_width_m: float = 0.25
    max_groups: int = 3
    templates: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TtsSettings:
    endpoint_url: str | None = None
    speaker_id: int = 0
    prosody: Prosody = field(default_factory=Prosody)
    dry_run: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    source_fps: float = 2.0
    perception: PerceptionSettings = field(default_factory=PerceptionSettings)
    distance: DistanceSettings = field(default_factory=DistanceSettings)
    describer: DescriberSettings = field(default_factory=DescriberSettings)
    tts: TtsSettings = field(default_factory=TtsSettings)


def _require_keys(section: str, entries: dict, allowed: set[str]) -> None:
    for key in entries:
        if key not in allowed:
            raise SchemaViolation(f"unknown key {key!r} in section {section!r}")


def _typed(section: str, entries: dict, key: str, kinds: tuple, default):
    value = entries.get(key, default)
    if value is None or value is default:
        return value
    if bool in kinds and isinstance(value, bool):
        return value
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise SchemaViolation(f"key {section}.{key} has wrong type {type(value).__name__}")
    return value


def _parse_scheduler(entries: dict) -> tuple[SchedulerConfig, float]:
    allowed = {
        "frames_per_batch",
        "frame_spacing_ms",
        "cycle_period_ms",
        "spacing_tolerance_ms",
        "cycle_tolerance_ms",
        "source_fps",
    }
    _require_keys("scheduler", entries, allowed)
    number = (int, float)
    try:
        cfg = SchedulerConfig(
            frames_per_batch=_typed("scheduler", entries, "frames_per_batch", (int,), 3),
            frame_spacing_ms=float(_typed("scheduler", entries, "frame_spacing_ms", number, 500.0)),
            cycle_period_ms=float(_typed("scheduler", entries, "cycle_period_ms", number, 5000.0)),
            spacing_tolerance_ms=float(_typed("scheduler", entries, "spacing_tolerance_ms", number, 20.0)),
            cycle_tolerance_ms=float(_typed("scheduler", entries, "cycle_tolerance_ms", number, 50.0)),
        )
    except ValueError as exc:
        raise SchemaViolation(f"scheduler: {exc}") from exc
    fps = float(_typed("scheduler", entries, "source_fps", number, 2.0))
    if fps <= 0:
        raise SchemaViolation("key scheduler.source_fps must be > 0")
    return cfg, fps


def _parse_perception(entries: dict) -> PerceptionSettings:
    _require_keys("perception", entries, {"backend_url", "mock_script_path", "min_confidence"})
    settings = PerceptionSettings(
        backend_url=_typed("perception", entries, "backend_url", (str,), None),
        mock_script_path=_typed("perception", entries, "mock_script_path", (str,), None),
        min_confidence=float(_typed("perception", entries, "min_confidence", (int, float), 0.35)),
    )
    if not 0.0 <= settings.min_confidence <= 1.0:
        raise SchemaViolation("key perception.min_confidence must be in [0, 1]")
    return settings


def _parse_distance(entries: dict) -> DistanceSettings:
    allowed = {
        "height_registry_path",
        "focal_length_px",
        "calibration_path",
        "image_width_px",
        "image_height_px",
        "heading_change_frac",
        "association_iou",
    }
    _require_keys("distance", entries, allowed)
    number = (int, float)
    settings = DistanceSettings(
        height_registry_path=_typed("distance", entries, "height_registry_path", (str,), None),
        focal_length_px=_typed("distance", entries, "focal_length_px", number, 800.0),
        calibration_path=_typed("distance", entries, "calibration_path", (str,), None),
        image_width_px=_typed("distance", entries, "image_width_px", (int,), 640),
        image_height_px=_typed("distance", entries, "image_height_px", (int,), 480),
        heading_change_frac=float(_typed("distance", entries, "heading_change_frac", number, 0.05)),
        association_iou=float(_typed("distance", entries, "association_iou", number, 0.3)),
    )
    if settings.focal_length_px is not None and settings.focal_length_px <= 0:
        raise SchemaViolation("key distance.focal_length_px must be > 0")
    if settings.image_width_px <= 0 or settings.image_height_px <= 0:
        raise SchemaViolation("key distance.image_width_px/image_height_px must be positive")
    if not 0.0 < settings.heading_change_frac < 1.0:
        raise SchemaViolation("key distance.heading_change_frac must be in (0, 1)")
    if not 0.0 <= settings.association_iou <= 1.0:
        raise SchemaViolation("key distance.association_iou must be in [0, 1]")
    return settings


def _parse_describer(entries: dict) -> DescriberSettings:
    _require_keys("describer", entries, {"band_width_m", "max_groups", "templates"})
    templates = _typed("describer", entries, "templates", (dict,), None) or {}
    for key, value in templates.items():
        if key not in {"toward", "away", "static", "left", "right", "center"}:
            raise SchemaViolation(f"unknown key {key!r} in section 'describer.templates'")
        if not isinstance(value, str):
            raise SchemaViolation(f"key describer.templates.{key} must be a string")
    settings = DescriberSettings(
        band_width_m=float(_typed("describer", entries, "band_width_m", (int, float), 0.25)),
        max_groups=_typed("describer", entries, "max_groups", (int,), 3),
        templates=templates,
    )
    if settings.band_width_m <= 0:
        raise SchemaViolation("key describer.band_width_m must be > 0")
    if settings.max_groups < 1:
        raise SchemaViolation("key describer.max_groups must be >= 1")
    return settings


def _parse_tts(entries: dict) -> TtsSettings:
    _require_keys("tts", entries, {"endpoint_url", "speaker_id", "prosody", "dry_run"})
    speaker_id = _typed("tts", entries, "speaker_id", (int,), 0)
    if not 0 <= speaker_id < VOICE_COUNT:
        raise SchemaViolation(f"key tts.speaker_id must be in [0, {VOICE_COUNT - 1}], got {speaker_id}")
    prosody_entries = _typed("tts", entries, "prosody", (dict,), None) or {}
    _require_keys("tts.prosody", prosody_entries, {"pitch", "rate", "amplitude"})
    number = (int, float)
    try:
        prosody = Prosody(
            pitch_shift_semitones=float(_typed("tts.prosody", prosody_entries, "pitch", number, 0.0)),
            rate_factor=float(_typed("tts.prosody", prosody_entries, "rate", number, 1.0)),
            amplitude_gain=float(_typed("tts.prosody", prosody_entries, "amplitude", number, 1.0)),
        )
    except ValueError as exc:
        raise SchemaViolation(f"tts.prosody: {exc}") from exc
    return TtsSettings(
        endpoint_url=_typed("tts", entries, "endpoint_url", (str,), None),
        speaker_id=speaker_id,
        prosody=prosody,
        dry_run=bool(_typed("tts", entries, "dry_run", (bool,), False)),
    )


def load_config(path: str) -> PipelineConfig:
    """Load and strictly validate a pipeline config file.

    Unknown keys are fatal, defaults fill absent optional keys, and every
    referenced file must exist.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except ValueError as exc:
            raise SchemaViolation(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaViolation("config root must be a JSON object")
    _require_keys("<root>", raw, {"scheduler", "perception", "distance", "describer", "tts"})
    for section, entries in raw.items():
        if not isinstance(entries, dict):
            raise SchemaViolation(f"section {section!r} must be a JSON object")
    scheduler, source_fps = _parse_scheduler(raw.get("scheduler", {}))
    config = PipelineConfig(
        scheduler=scheduler,
        source_fps=source_fps,
        perception=_parse_perception(raw.get("perception", {})),
        distance=_parse_distance(raw.get("distance", {})),
        describer=_parse_describer(raw.get("describer", {})),
        tts=_parse_tts(raw.get("tts", {})),
    )
    for key, file_path in (
        ("perception.mock_script_path", config.perception.mock_script_path),
        ("distance.height_registry_path", config.distance.height_registry_path),
        ("distance.calibration_path", config.distance.calibration_path),
    ):
        if file_path is not None:
            try:
                with open(file_path, encoding="utf-8"):
                    pass
            except OSError as exc:
                raise FileNotFoundError(f"{key} references missing file {file_path!r}") from exc
    return config


@dataclass(frozen=True)
class CycleMetrics:
    cycle_index: int
    acquire_ms: float
    detect_ms: float
    range_ms: float
    describe_ms: float
    tts_dispatch_ms: float
    end_to_end_ms: float
    dropped: bool

    def to_json_line(self) -> str:
        return json.dumps(dataclasses.asdict(self))


@dataclass
class CycleDeps:
    """Everything run_cycle needs, already initialized."""

    detector: object
    registry: HeightRegistry
    camera: CameraModel
    describer: DescriberConfig
    clock: Clock
    min_confidence: float = 0.35
    association_iou: float = 0.3
    heading_change_frac: float = 0.05
    speaker_id: int = 0
    prosody: Prosody = field(default_factory=Prosody)
    dispatcher: SpeechDispatcher | None = None
    transcript: TextIO | None = None


def _range_last_frame(tracks: list, last_index: int, deps: CycleDeps) -> list[RangedObject]:
    ranged = []
    for track in tracks:
        if track.last_frame_index != last_index:
            continue
        det = track.last_detection
        try:
            distance = estimate_distance(det.bbox, det.label, deps.registry, deps.camera)
        except UnknownClass:
            log.debug("no registered height for %r; object skipped", det.label)
            continue
        ranged.append(
            RangedObject(
                detection=det,
                distance_m=distance,
                direction=track.direction,
                heading=track.heading,
            )
        )
    return ranged


def run_cycle(
    batch: FrameBatch, deps: CycleDeps, acquire_ms: float = 0.0
) -> tuple[SceneDescription, CycleMetrics]:
    """Process one batch into one spoken (or printed) scene description."""
    start = time.perf_counter()
    survivors = []
    for frame in batch.frames:
        try:
            detections = deps.detector.detect(frame)
        except (BackendUnreachable, MalformedResponse, InvalidBBox) as exc:
            log.warning("detector failed on frame %d: %s", frame.frame_id, exc)
            continue
        survivors.append(filter_by_confidence(detections, deps.min_confidence))
    t_detect = time.perf_counter()
    if not survivors:
        raise AllFramesFailed(f"all {len(batch.frames)} detect calls failed in cycle {batch.cycle_index}")

    tracks = associate_and_heading(
        survivors,
        deps.camera,
        iou_threshold=deps.association_iou,
        height_change_frac=deps.heading_change_frac,
    )
    ranged = _range_last_frame(tracks, len(survivors) - 1, deps)
    t_range = time.perf_counter()

    groups = group_and_prioritize(ranged, deps.describer)
    description = render_description(groups, deps.describer)
    speech_text = normalize_text(description.text)
    t_describe = time.perf_counter()

    if deps.dispatcher is not None:
        try:
            deps.dispatcher.enqueue_speak(
                Utterance(
                    text=speech_text,
                    speaker_id=deps.speaker_id,
                    prosody=deps.prosody,
                    created_at_ms=deps.clock.now_ms(),
                )
            )
        except TtsUnreachable as exc:
            log.warning("speech endpoint unreachable, cycle continues: %s", exc)
    elif deps.transcript is not None:
        print(speech_text, file=deps.transcript)
    t_end = time.perf_counter()

    metrics = CycleMetrics(
        cycle_index=batch.cycle_index,
        acquire_ms=acquire_ms,
        detect_ms=(t_detect - start) * 1000.0,
        range_ms=(t_range - t_detect) * 1000.0,
        describe_ms=(t_describe - t_range) * 1000.0,
        tts_dispatch_ms=(t_end - t_describe) * 1000.0,
        end_to_end_ms=(t_end - start) * 1000.0,
        dropped=False,
    )
    return description, metrics


def build_source(spec: str, config: PipelineConfig) -> FrameSource:
    """Resolve a --source argument: the literal "synthetic" or a directory."""
    dims = dict(
        width_px=config.distance.image_width_px, height_px=config.distance.image_height_px
    )
    if spec == "synthetic":
        return SyntheticSource(**dims)
    return DirectorySource(spec, fps=config.source_fps, **dims)


def _probe(url: str, what: str) -> None:
    try:
        requests.get(url, timeout=3.0)
    except requests.ConnectionError as exc:
        raise InitializationError(f"{what} at {url} is unreachable: {exc}") from exc
    except requests.RequestException:
        pass


def build_deps(
    config: PipelineConfig,
    clock: Clock,
    *,
    detector: object | None = None,
    transcript: TextIO | None = None,
    tts_transport=None,
) -> CycleDeps:
    """Initialize every stage from config, failing fast on anything missing."""
    if detector is None:
        if config.perception.mock_script_path is not None:
            try:
                detector = ScriptedDetector.from_file(config.perception.mock_script_path)
            except OSError as exc:
                raise InitializationError(f"cannot load detector script: {exc}") from exc
        elif config.perception.backend_url is not None:
            _probe(config.perception.backend_url, "detector backend")
            detector = HttpDetector(config.perception.backend_url)
        else:
            raise InitializationError("no detector configured: set backend_url or mock_script_path")

    if config.distance.height_registry_path is not None:
        try:
            registry = HeightRegistry.from_json(config.distance.height_registry_path)
        except OSError as exc:
            raise InitializationError(f"cannot load height registry: {exc}") from exc
    else:
        registry = HeightRegistry()

    focal = config.distance.focal_length_px
    if config.distance.calibration_path is not None:
        try:
            focal = load_calibration(config.distance.calibration_path)
        except OSError as exc:
            raise InitializationError(f"cannot load calibration record: {exc}") from exc
    if focal is None:
        raise InitializationError("no focal length: set focal_length_px or calibration_path")
    camera = CameraModel(
        focal_length_px=focal,
        image_width_px=config.distance.image_width_px,
        image_height_px=config.distance.image_height_px,
    )

    dispatcher = None
    if not config.tts.dry_run:
        if config.tts.endpoint_url is None:
            raise InitializationError("tts.endpoint_url is required unless dry_run is set")
        if tts_transport is None:
            _probe(config.tts.endpoint_url, "speech endpoint")
        dispatcher = SpeechDispatcher(config.tts.endpoint_url, clock, transport=tts_transport)

    return CycleDeps(
        detector=detector,
        registry=registry,
        camera=camera,
        describer=DescriberConfig(
            band_width_m=config.describer.band_width_m,
            max_groups=config.describer.max_groups,
            templates=dict(config.describer.templates),
        ),
        clock=clock,
        min_confidence=config.perception.min_confidence,
        association_iou=config.distance.association_iou,
        heading_change_frac=config.distance.heading_change_frac,
        speaker_id=config.tts.speaker_id,
        prosody=config.tts.prosody,
        dispatcher=dispatcher,
        transcript=transcript if config.tts.dry_run else None,
    )


def run(
    config: PipelineConfig,
    clock: Clock | None = None,
    shutdown: threading.Event | None = None,
    *,
    source: FrameSource | str = "synthetic",
    detector: object | None = None,
    transcript: TextIO | None = None,
    metrics_out: TextIO | None = None,
    tts_transport=None,
    max_cycles: int | None = None,
) -> int:
    """Cycle loop: next batch, one description, one metrics record, repeat.

    Runs until the source is exhausted, the shutdown event is set, or
    ``max_cycles`` is reached. Returns the process exit status.
    """
    clock = clock or MonotonicClock()
    shutdown = shutdown or threading.Event()
    transcript = transcript if transcript is not None else sys.stdout
    if isinstance(source, str):
        source = build_source(source, config)
    deps = build_deps(
        config, clock, detector=detector, transcript=transcript, tts_transport=tts_transport
    )
    scheduler = BatchScheduler(source, clock, config.scheduler)

    cycles_run = 0
    while max_cycles is None or cycles_run < max_cycles:
        if shutdown.is_set():
            log.info("shutdown requested; stopping after %d cycles", cycles_run)
            break
        t0 = time.perf_counter()
        try:
            batch = scheduler.next_batch()
        except SourceExhausted:
            log.info("source exhausted after %d cycles", cycles_run)
            break
        acquire_ms = (time.perf_counter() - t0) * 1000.0
        try:
            _, metrics = run_cycle(batch, deps, acquire_ms)
        except AllFramesFailed as exc:
            log.warning("%s", exc)
            metrics = CycleMetrics(
                cycle_index=batch.cycle_index,
                acquire_ms=acquire_ms,
                detect_ms=0.0,
                range_ms=0.0,
                describe_ms=0.0,
                tts_dispatch_ms=0.0,
                end_to_end_ms=0.0,
                dropped=True,
            )
        if metrics_out is not None:
            metrics_out.write(metrics.to_json_line() + "\n")
        cycles_run += 1
    if not shutdown.is_set() and deps.dispatcher is not None:
        deps.dispatcher.flush()
    return 0
