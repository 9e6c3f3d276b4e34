"""Frame batching on a fixed cadence: short bursts sampled once per cycle.

A batch is a handful of frames spaced a fraction of a second apart; batches
start on multiples of the cycle period. Clocks are injected so tests and
replays run on simulated time with zero drift.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol


class SourceExhausted(Exception):
    """The frame source has no frame for this capture instant."""


class ClockRegression(RuntimeError):
    """The clock or source went backwards in time; a harness bug."""


@dataclass(frozen=True)
class Frame:
    """One captured frame; payload is an opaque handle (path or reference)."""

    frame_id: int
    timestamp_ms: float
    width_px: int
    height_px: int
    payload: object

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError(f"frame dimensions must be positive, got {self.width_px}x{self.height_px}")


@dataclass(frozen=True)
class FrameBatch:
    """The frames of one cycle, in capture order."""

    cycle_index: int
    frames: tuple[Frame, ...]
    cycle_start_ms: float


class Clock(Protocol):
    def now_ms(self) -> float: ...

    def sleep_until(self, deadline_ms: float) -> None: ...


class SimulatedClock:
    """Clock whose sleeps complete instantly by jumping to the deadline."""

    def __init__(self, start_ms: float = 0.0) -> None:
        self._now_ms = float(start_ms)

    def now_ms(self) -> float:
        return self._now_ms

    def sleep_until(self, deadline_ms: float) -> None:
        if deadline_ms > self._now_ms:
            self._now_ms = float(deadline_ms)

    def advance(self, delta_ms: float) -> None:
        self.sleep_until(self._now_ms + delta_ms)


class MonotonicClock:
    """Wall clock on the process monotonic timer."""

    def now_ms(self) -> float:
        return time.monotonic() * 1000.0

    def sleep_until(self, deadline_ms: float) -> None:
        delta_s = (deadline_ms - self.now_ms()) / 1000.0
        if delta_s > 0:
            time.sleep(delta_s)


class FrameSource(Protocol):
    def capture(self, now_ms: float) -> Frame: ...


class SyntheticSource:
    """Sequential generated frames; unlimited unless a frame count is given."""

    def __init__(
        self, n_frames: int | None = None, width_px: int = 640, height_px: int = 480
    ) -> None:
        self.n_frames = n_frames
        self.width_px = width_px
        self.height_px = height_px
        self._next_id = 0

    def capture(self, now_ms: float) -> Frame:
        if self.n_frames is not None and self._next_id >= self.n_frames:
            raise SourceExhausted(f"synthetic source ended after {self.n_frames} frames")
        frame = Frame(
            frame_id=self._next_id,
            timestamp_ms=now_ms,
            width_px=self.width_px,
            height_px=self.height_px,
            payload=f"synthetic://frame/{self._next_id}",
        )
        self._next_id += 1
        return frame


_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


def _numeric_key(path: Path) -> tuple:
    digits = re.findall(r"\d+", path.stem)
    return (int(digits[-1]) if digits else -1, path.name)


class DirectorySource:
    """Numbered image files played back at a fixed frame rate against the clock.

    Playback starts at the first capture; a capture t milliseconds later maps
    to file index floor(t * fps / 1000), and the source is exhausted once that
    index runs past the last file.
    """

    def __init__(self, directory: str, fps: float, width_px: int = 640, height_px: int = 480) -> None:
        if fps <= 0:
            raise ValueError(f"fps must be > 0, got {fps}")
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FileNotFoundError(f"frame directory {directory!r} does not exist")
        self.files = sorted(
            (p for p in self.directory.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES),
            key=_numeric_key,
        )
        if not self.files:
            raise SourceExhausted(f"no image files in {directory!r}")
        self.fps = fps
        self.width_px = width_px
        self.height_px = height_px
        self._next_id = 0
        self._start_ms: float | None = None

    def capture(self, now_ms: float) -> Frame:
        if self._start_ms is None:
            self._start_ms = now_ms
        index = int((now_ms - self._start_ms) * self.fps / 1000.0)
        if index >= len(self.files):
            raise SourceExhausted(f"playback ended after {len(self.files)} files")
        frame = Frame(
            frame_id=self._next_id,
            timestamp_ms=now_ms,
            width_px=self.width_px,
            height_px=self.height_px,
            payload=str(self.files[index]),
        )
        self._next_id += 1
        return frame


@dataclass(frozen=True)
class SchedulerConfig:
    frames_per_batch: int = 3
    frame_spacing_ms: float = 500.0
    cycle_period_ms: float = 5000.0
    # Wall-clock sources jitter; simulated clocks must hit instants exactly.
    spacing_tolerance_ms: float = 20.0
    cycle_tolerance_ms: float = 50.0

    def __post_init__(self) -> None:
        if self.frames_per_batch < 1:
            raise ValueError("frames_per_batch must be >= 1")
        if self.frame_spacing_ms <= 0 or self.cycle_period_ms <= 0:
            raise ValueError("spacing and period must be positive")
        span = (self.frames_per_batch - 1) * self.frame_spacing_ms
        if span >= self.cycle_period_ms:
            raise ValueError(
                f"batch span {span} ms does not fit inside the {self.cycle_period_ms} ms cycle"
            )


class BatchScheduler:
    """Emits one FrameBatch per cycle, skipping cycles under back-pressure.

    ``backpressure`` is polled at each cycle boundary; a True result drops
    that cycle (counted, never queued) so descriptions are never stale.
    """

    def __init__(
        self,
        source: FrameSource,
        clock: Clock,
        config: SchedulerConfig | None = None,
        backpressure: Callable[[], bool] | None = None,
    ) -> None:
        self.source = source
        self.clock = clock
        self.config = config or SchedulerConfig()
        self.backpressure = backpressure
        self.dropped_cycles = 0
        self._emitted = 0
        self._slots_consumed = 0
        self._epoch_ms = clock.now_ms()
        self._last_timestamp_ms = float("-inf")

    @property
    def cycles_emitted(self) -> int:
        return self._emitted

    def next_batch(self) -> FrameBatch:
        cfg = self.config
        while True:
            cycle_start = self._epoch_ms + self._slots_consumed * cfg.cycle_period_ms
            self.clock.sleep_until(cycle_start)
            if self.backpressure is not None and self.backpressure():
                self._slots_consumed += 1
                self.dropped_cycles += 1
                continue
            frames = []
            for k in range(cfg.frames_per_batch):
                self.clock.sleep_until(cycle_start + k * cfg.frame_spacing_ms)
                now = self.clock.now_ms()
                if now < self._last_timestamp_ms:
                    raise ClockRegression(
                        f"clock moved from {self._last_timestamp_ms} ms back to {now} ms"
                    )
                frame = self.source.capture(now)
                if frame.timestamp_ms < self._last_timestamp_ms:
                    raise ClockRegression(
                        f"frame {frame.frame_id} timestamped {frame.timestamp_ms} ms before "
                        f"its predecessor at {self._last_timestamp_ms} ms"
                    )
                self._last_timestamp_ms = frame.timestamp_ms
                frames.append(frame)
            batch = FrameBatch(
                cycle_index=self._emitted, frames=tuple(frames), cycle_start_ms=cycle_start
            )
            self._emitted += 1
            self._slots_consumed += 1
            return batch
