import json

import pytest

from scenespeak.scheduling import SimulatedClock
from scenespeak.testing import StubTtsServer
from scenespeak.tts import (
    EmptyText,
    MalformedAck,
    Prosody,
    SpeakerOutOfRange,
    SpeechDispatcher,
    TextNotNormalized,
    TtsUnreachable,
    Utterance,
    VOICE_COUNT,
    build_request,
    normalize_text,
)

GOLDEN_RAW = "4 women and 1 man, at 1.36 meters away, are headed towards you."
GOLDEN_SPOKEN = "four women and one man, at one point three six meters away, are headed towards you."


class TestNormalizeText:
    def test_golden_sentence(self):
        assert normalize_text(GOLDEN_RAW) == GOLDEN_SPOKEN

    def test_no_digits_passes_through(self):
        assert normalize_text("Nothing detected nearby.") == "Nothing detected nearby."

    def test_integer_spelling(self):
        assert normalize_text("at 10 meters") == "at ten meters"

    def test_unit_expansion(self):
        assert normalize_text("at 10 m") == "at ten meters"
        assert normalize_text("at 1.36 m.") == "at one point three six meters."

    def test_decimal_reads_digits_after_point(self):
        assert normalize_text("6.00 meters") == "six point zero zero meters"
        assert normalize_text("12.5") == "twelve point five"

    def test_larger_integers(self):
        assert normalize_text("342") == "three hundred forty two"
        assert normalize_text("9999") == "nine thousand nine hundred ninety nine"

    def test_huge_integers_read_digitwise(self):
        assert normalize_text("10000") == "one zero zero zero zero"

    def test_output_never_contains_digits(self):
        samples = [GOLDEN_RAW, "7 cars at 19.25 m", "0.5", "8000 and 42", "x9y"]
        for raw in samples:
            assert not any(ch.isdigit() for ch in normalize_text(raw))

    def test_idempotent(self):
        samples = [GOLDEN_RAW, "7 cars at 19.25 m", "Nothing detected nearby."]
        for raw in samples:
            once = normalize_text(raw)
            assert normalize_text(once) == once

    def test_empty_rejected(self):
        with pytest.raises(EmptyText):
            normalize_text("   ")


class TestBuildRequest:
    def test_speaker_out_of_range(self):
        with pytest.raises(SpeakerOutOfRange):
            build_request("hello", VOICE_COUNT, Prosody())
        with pytest.raises(SpeakerOutOfRange):
            build_request("hello", -1, Prosody())

    def test_byte_identical_for_identical_inputs(self):
        a = build_request(GOLDEN_SPOKEN, 3, Prosody(1.5, 1.25, 0.8))
        b = build_request(GOLDEN_SPOKEN, 3, Prosody(1.5, 1.25, 0.8))
        assert a == b

    def test_default_prosody_literals(self):
        body = json.loads(build_request("hello there", 0, Prosody()))
        assert body == {
            "text": "hello there",
            "speaker_id": 0,
            "prosody": {"pitch": 0.0, "rate": 1.0, "amplitude": 1.0},
        }

    def test_canonical_key_order(self):
        raw = build_request("hello", 1, Prosody()).decode()
        assert raw == '{"text":"hello","speaker_id":1,"prosody":{"pitch":0.0,"rate":1.0,"amplitude":1.0}}'

    def test_digits_rejected(self):
        with pytest.raises(TextNotNormalized):
            build_request("at 1.36 meters", 0, Prosody())

    def test_distinct_inputs_distinct_bytes(self):
        a = build_request("hello", 0, Prosody())
        b = build_request("hello", 1, Prosody())
        c = build_request("hello", 0, Prosody(pitch_shift_semitones=2.0))
        assert len({a, b, c}) == 3


class TestProsodyAndUtterance:
    def test_prosody_ranges(self):
        with pytest.raises(ValueError):
            Prosody(pitch_shift_semitones=13.0)
        with pytest.raises(ValueError):
            Prosody(rate_factor=0.5)
        with pytest.raises(ValueError):
            Prosody(amplitude_gain=0.0)

    def test_utterance_validation(self):
        with pytest.raises(SpeakerOutOfRange):
            Utterance(text="hi", speaker_id=34, prosody=Prosody(), created_at_ms=0.0)
        with pytest.raises(EmptyText):
            Utterance(text="", speaker_id=0, prosody=Prosody(), created_at_ms=0.0)


class _RecordingTransport:
    def __init__(self, duration_ms=2000, status=200, payload=None):
        self.sent: list[tuple[float, bytes]] = []
        self.duration_ms = duration_ms
        self.status = status
        self.payload = payload
        self.clock = None

    def __call__(self, url, body):
        self.sent.append((self.clock.now_ms(), body))
        if self.payload is not None:
            return self.status, self.payload
        return self.status, {"duration_ms": self.duration_ms}


def _dispatcher(transport, clock=None):
    clock = clock or SimulatedClock()
    transport.clock = clock
    return SpeechDispatcher("http://tts.local", clock, transport=transport), clock


def _utterance(text, at_ms=0.0):
    return Utterance(text=text, speaker_id=0, prosody=Prosody(), created_at_ms=at_ms)


class TestDispatcher:
    def test_single_utterance_single_request(self):
        transport = _RecordingTransport()
        dispatcher, _ = _dispatcher(transport)
        ack = dispatcher.enqueue_speak(_utterance("hello"))
        assert ack.duration_ms == 2000
        assert len(transport.sent) == 1

    def test_freshest_wins_while_playing(self):
        transport = _RecordingTransport(duration_ms=2000)
        dispatcher, clock = _dispatcher(transport)
        dispatcher.enqueue_speak(_utterance("first"))
        clock.advance(1.0)
        dispatcher.enqueue_speak(_utterance("second"))
        clock.advance(1.0)
        dispatcher.enqueue_speak(_utterance("third"))
        clock.advance(5000.0)
        dispatcher.pump()
        texts = [json.loads(body)["text"] for _, body in transport.sent]
        assert texts == ["first", "third"]
        assert dispatcher.replaced_count == 1

    def test_no_overlap_requests_wait_out_duration(self):
        transport = _RecordingTransport(duration_ms=1500)
        dispatcher, clock = _dispatcher(transport)
        dispatcher.enqueue_speak(_utterance("a"))
        dispatcher.enqueue_speak(_utterance("b"))
        dispatcher.pump()  # still playing; must not send
        assert len(transport.sent) == 1
        clock.advance(1500.0)
        dispatcher.pump()
        assert len(transport.sent) == 2
        assert transport.sent[1][0] - transport.sent[0][0] >= 1500.0

    def test_wire_order_matches_dispatch_order(self):
        transport = _RecordingTransport(duration_ms=100)
        dispatcher, clock = _dispatcher(transport)
        names = ["alpha", "bravo", "charlie", "delta"]
        for name in names:
            dispatcher.enqueue_speak(_utterance(name))
            clock.advance(200.0)
        texts = [json.loads(body)["text"] for _, body in transport.sent]
        assert texts == names

    def test_flush_delivers_pending(self):
        transport = _RecordingTransport(duration_ms=3000)
        dispatcher, _ = _dispatcher(transport)
        dispatcher.enqueue_speak(_utterance("now"))
        dispatcher.enqueue_speak(_utterance("later"))
        assert len(transport.sent) == 1
        dispatcher.flush()
        assert [json.loads(b)["text"] for _, b in transport.sent] == ["now", "later"]

    def test_malformed_ack(self):
        transport = _RecordingTransport(payload={"oops": 1})
        dispatcher, _ = _dispatcher(transport)
        with pytest.raises(MalformedAck):
            dispatcher.enqueue_speak(_utterance("hello"))

    def test_non_200_is_malformed(self):
        transport = _RecordingTransport(status=503, payload={"duration_ms": 10})
        dispatcher, _ = _dispatcher(transport)
        with pytest.raises(MalformedAck):
            dispatcher.enqueue_speak(_utterance("hello"))


class TestStubServerIntegration:
    def test_roundtrip_duration_proportional_to_words(self):
        with StubTtsServer(ms_per_word=150) as server:
            dispatcher = SpeechDispatcher(server.url, SimulatedClock())
            ack = dispatcher.enqueue_speak(_utterance("one two three four"))
            assert ack.duration_ms == 600
            assert server.requests[0]["text"] == "one two three four"

    def test_unreachable_endpoint(self):
        dispatcher = SpeechDispatcher("http://127.0.0.1:9", SimulatedClock(), timeout_s=0.3)
        with pytest.raises(TtsUnreachable):
            dispatcher.enqueue_speak(_utterance("hello"))
