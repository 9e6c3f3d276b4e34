"""Speech dispatch: text normalization, canonical wire requests, and a
strictly non-overlapping freshest-wins queue.

The synthesizer is an external service with 34 selectable voices; this client
sends ``POST /speak`` with the utterance text, a speaker id, and three scalar
prosody controls, and honors the acknowledged playback duration before
sending anything else. While one utterance plays, at most one more waits, and
a newer one replaces it - stale guidance is worse than none.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from typing import Callable

import requests

from .scheduling import Clock

VOICE_COUNT = 34


class EmptyText(ValueError):
    """Normalization was handed an empty string."""


class SpeakerOutOfRange(ValueError):
    """Speaker id outside the synthesizer's voice set; a configuration error."""


class TextNotNormalized(ValueError):
    """Digits reached the wire builder; normalize_text must run first."""


class TtsUnreachable(ConnectionError):
    """The speech endpoint could not be reached."""


class MalformedAck(RuntimeError):
    """The speech endpoint's acknowledgment violates the wire schema."""


@dataclass(frozen=True)
class Prosody:
    """Scalar delivery controls carried per utterance."""

    pitch_shift_semitones: float = 0.0
    rate_factor: float = 1.0
    amplitude_gain: float = 1.0

    def __post_init__(self) -> None:
        if not -12.0 <= self.pitch_shift_semitones <= 12.0:
            raise ValueError(f"pitch shift must be in [-12, 12], got {self.pitch_shift_semitones}")
        if not 0.5 < self.rate_factor <= 2.0:
            raise ValueError(f"rate factor must be in (0.5, 2.0], got {self.rate_factor}")
        if not 0.0 < self.amplitude_gain <= 2.0:
            raise ValueError(f"amplitude gain must be in (0, 2.0], got {self.amplitude_gain}")


@dataclass(frozen=True)
class Utterance:
    text: str
    speaker_id: int
    prosody: Prosody
    created_at_ms: float

    def __post_init__(self) -> None:
        if not self.text:
            raise EmptyText("utterance text must be non-empty")
        if not 0 <= self.speaker_id < VOICE_COUNT:
            raise SpeakerOutOfRange(
                f"speaker_id must be in [0, {VOICE_COUNT - 1}], got {self.speaker_id}"
            )


_ONES = (
    "zero one two three four five six seven eight nine ten eleven twelve "
    "thirteen fourteen fifteen sixteen seventeen eighteen nineteen"
).split()
_TENS = ("", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety")


def _spell_below_hundred(n: int) -> str:
    if n < 20:
        return _ONES[n]
    tens, ones = divmod(n, 10)
    return _TENS[tens] + (" " + _ONES[ones] if ones else "")


def _spell_integer(n: int) -> str:
    """Number words for 0..9999."""
    if n < 100:
        return _spell_below_hundred(n)
    if n < 1000:
        hundreds, rest = divmod(n, 100)
        words = _ONES[hundreds] + " hundred"
        return words + (" " + _spell_below_hundred(rest) if rest else "")
    thousands, rest = divmod(n, 1000)
    words = _spell_below_hundred(thousands) + " thousand"
    return words + (" " + _spell_integer(rest) if rest else "")


def _spell_digitwise(digits: str) -> str:
    return " ".join(_ONES[int(ch)] for ch in digits)


def _spell_whole(digits: str) -> str:
    value = int(digits)
    if value <= 9999:
        return _spell_integer(value)
    return _spell_digitwise(digits)


def normalize_text(raw: str) -> str:
    """Speakable form of a sentence: no digits survive.

    Decimals read the whole part as a number and the fraction digit by digit
    ("1.36" -> "one point three six"); bare integers up to 9999 become words;
    a unit "m" after a number expands to "meters".
    """
    if not raw or not raw.strip():
        raise EmptyText("cannot normalize empty text")
    text = re.sub(r"(\d+(?:\.\d+)?)\s*m\b", r"\1 meters", raw)
    text = re.sub(
        r"(\d+)\.(\d+)",
        lambda m: f"{_spell_whole(m.group(1))} point {_spell_digitwise(m.group(2))}",
        text,
    )
    text = re.sub(r"\d+", lambda m: _spell_whole(m.group(0)), text)
    return text


def build_request(text: str, speaker_id: int, prosody: Prosody) -> bytes:
    """Canonical ``/speak`` body; identical inputs give identical bytes."""
    if not 0 <= speaker_id < VOICE_COUNT:
        raise SpeakerOutOfRange(
            f"speaker_id must be in [0, {VOICE_COUNT - 1}], got {speaker_id}"
        )
    if any(ch.isdigit() for ch in text):
        raise TextNotNormalized(f"text still contains digits: {text!r}")
    body = {
        "text": text,
        "speaker_id": speaker_id,
        "prosody": {
            "pitch": float(prosody.pitch_shift_semitones),
            "rate": float(prosody.rate_factor),
            "amplitude": float(prosody.amplitude_gain),
        },
    }
    return json.dumps(body, separators=(",", ":")).encode("utf-8")


@dataclass(frozen=True)
class SpeechAck:
    duration_ms: int


Transport = Callable[[str, bytes], tuple[int, object]]


def _http_transport(timeout_s: float) -> Transport:
    def post(url: str, body: bytes) -> tuple[int, object]:
        try:
            response = requests.post(
                url, data=body, headers={"Content-Type": "application/json"}, timeout=timeout_s
            )
        except requests.RequestException as exc:
            raise TtsUnreachable(f"speech endpoint {url} unreachable: {exc}") from exc
        try:
            payload = response.json()
        except ValueError:
            payload = None
        return response.status_code, payload

    return post


class SpeechDispatcher:
    """Serialized sender: one utterance in flight, one freshest-wins slot waiting.

    ``enqueue_speak`` places an utterance in the pending slot (replacing any
    older one) and pumps; ``pump`` sends the pending utterance only once the
    previously acknowledged duration has elapsed on the injected clock.
    """

    def __init__(
        self,
        endpoint_url: str,
        clock: Clock,
        *,
        transport: Transport | None = None,
        timeout_s: float = 5.0,
    ) -> None:
        self.endpoint_url = endpoint_url.rstrip("/")
        self.clock = clock
        self._transport = transport or _http_transport(timeout_s)
        self._lock = threading.Lock()
        self._pending: Utterance | None = None
        self._busy_until_ms = float("-inf")
        self.requests_sent = 0
        self.replaced_count = 0

    def enqueue_speak(self, utterance: Utterance) -> SpeechAck | None:
        """Queue an utterance (freshest wins) and send it if the line is free."""
        with self._lock:
            if self._pending is not None:
                self.replaced_count += 1
            self._pending = utterance
        return self.pump()

    def pump(self) -> SpeechAck | None:
        """Send the pending utterance if playback of the previous one is done."""
        with self._lock:
            if self._pending is None or self.clock.now_ms() < self._busy_until_ms:
                return None
            utterance = self._pending
            self._pending = None
        ack = self._send(utterance)
        with self._lock:
            self._busy_until_ms = self.clock.now_ms() + ack.duration_ms
        return ack

    def flush(self) -> SpeechAck | None:
        """Wait out current playback and deliver whatever is still pending."""
        last = None
        while True:
            with self._lock:
                if self._pending is None:
                    return last
                deadline = self._busy_until_ms
            self.clock.sleep_until(deadline)
            last = self.pump() or last

    def _send(self, utterance: Utterance) -> SpeechAck:
        body = build_request(utterance.text, utterance.speaker_id, utterance.prosody)
        status, payload = self._transport(f"{self.endpoint_url}/speak", body)
        self.requests_sent += 1
        if status != 200:
            raise MalformedAck(f"speech endpoint returned HTTP {status}")
        if not isinstance(payload, dict) or not isinstance(payload.get("duration_ms"), int):
            raise MalformedAck(f"acknowledgment must carry integer duration_ms, got {payload!r}")
        return SpeechAck(duration_ms=payload["duration_ms"])
