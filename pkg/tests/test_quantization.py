import json

import numpy as np
import pytest

from scenespeak.quantization import (
    AxisOutOfRange,
    BitWidthTooSmall,
    EmptyTensor,
    LayerSpec,
    NonPositiveScale,
    QuantParams,
    QuantizedTensor,
    compute_scale,
    dequantize,
    int_range_max,
    load_layer_specs,
    quantize,
    quantize_per_channel,
    size_report,
)


def _roundtrip(weights, bit_width):
    w = np.asarray(weights, dtype=np.float64)
    s = compute_scale(w, bit_width)
    return s, dequantize(quantize(w, s, bit_width))


class TestComputeScale:
    def test_four_bit_symmetric_peak(self):
        assert compute_scale(np.array([-7.0, 3.5, 7.0]), 4) == pytest.approx(1.0)

    def test_zero_tensor_sentinel(self):
        assert compute_scale(np.array([0.0, 0.0]), 4) == 1.0

    def test_eight_bit_unit_weight(self):
        assert compute_scale(np.array([1.0]), 8) == pytest.approx(1.0 / 127.0)

    def test_empty_tensor_rejected(self):
        with pytest.raises(EmptyTensor):
            compute_scale(np.array([]), 4)

    def test_bit_width_below_two_rejected(self):
        with pytest.raises(BitWidthTooSmall):
            compute_scale(np.array([1.0]), 1)


class TestQuantize:
    def test_plain_rounding(self):
        assert quantize(np.array([3.4]), 1.0, 4).values.tolist() == [3]

    def test_tie_rounds_away_from_zero(self):
        assert quantize(np.array([2.5, -2.5]), 1.0, 4).values.tolist() == [3, -3]

    def test_clamps_to_range_maximum(self):
        assert quantize(np.array([9.0, -9.0]), 1.0, 4).values.tolist() == [7, -7]

    def test_non_positive_scale_rejected(self):
        with pytest.raises(NonPositiveScale):
            quantize(np.array([1.0]), 0.0, 4)

    def test_never_exceeds_symmetric_range(self):
        rng = np.random.default_rng(7)
        for bit_width in (2, 4, 8):
            limit = int_range_max(bit_width)
            w = rng.normal(0, 1000, size=256) * 10 ** rng.uniform(-6, 6, size=256)
            qt = quantize(w, float(rng.uniform(0.01, 10)), bit_width)
            assert np.max(np.abs(qt.values)) <= limit


class TestDequantize:
    def test_unit_scale_identity(self):
        qt = quantize(np.array([3.0]), 1.0, 4)
        assert dequantize(qt).tolist() == [3.0]

    def test_negative_value(self):
        qt = QuantizedTensor(np.array([-7]), QuantParams(4, 0.5), (1,))
        assert dequantize(qt).tolist() == [-3.5]

    def test_lattice_points_roundtrip_exactly(self):
        s = 0.37
        lattice = np.arange(-7, 8) * s
        _, back = _roundtrip(lattice, 4)
        assert np.array_equal(back, lattice)

    def test_quantize_dequantize_idempotent(self):
        rng = np.random.default_rng(11)
        w = rng.normal(0, 3, size=200)
        s = compute_scale(w, 4)
        once = dequantize(quantize(w, s, 4))
        twice = dequantize(quantize(once, s, 4))
        assert np.array_equal(once, twice)


class TestRoundTripBound:
    def test_bound_half_scale(self):
        rng = np.random.default_rng(3)
        for bit_width in (2, 4, 8):
            for _ in range(200):
                w = rng.normal(0, rng.uniform(0.1, 50), size=int(rng.integers(1, 65)))
                s, back = _roundtrip(w, bit_width)
                assert np.max(np.abs(w - back)) <= s / 2 + 1e-12


class TestPerChannel:
    def test_per_row_scales(self):
        qt = quantize_per_channel(np.array([[7.0, 0.0], [0.7, 0.0]]), 0, 4)
        assert np.allclose(qt.params.scale, [1.0, 0.1])
        assert qt.params.axis == 0

    def test_identical_rows_match_per_tensor(self):
        m = np.tile(np.array([3.0, -1.0, 0.5]), (4, 1))
        qt = quantize_per_channel(m, 0, 4)
        s = compute_scale(m, 4)
        assert np.allclose(qt.params.scale, s)
        assert np.array_equal(dequantize(qt), dequantize(quantize(m, s, 4)))

    def test_single_row_equals_per_tensor(self):
        m = np.array([[1.5, -4.0, 2.0]])
        qt = quantize_per_channel(m, 0, 4)
        s = compute_scale(m, 4)
        assert np.array_equal(dequantize(qt), dequantize(quantize(m, s, 4)))

    def test_axis_out_of_range(self):
        with pytest.raises(AxisOutOfRange):
            quantize_per_channel(np.ones((2, 2)), 2, 4)

    def test_column_axis(self):
        m = np.array([[7.0, 0.7], [0.0, 0.0]])
        qt = quantize_per_channel(m, 1, 4)
        assert np.allclose(qt.params.scale, [1.0, 0.1])

    def test_per_slice_roundtrip_bound(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            m = rng.normal(0, 1, size=(int(rng.integers(2, 6)), int(rng.integers(2, 17))))
            m *= 10 ** rng.uniform(-2, 2, size=(m.shape[0], 1))
            qt = quantize_per_channel(m, 0, 4)
            back = dequantize(qt)
            for i in range(m.shape[0]):
                assert np.max(np.abs(m[i] - back[i])) <= qt.params.scale[i] / 2 + 1e-12

    def test_scales_never_exceed_per_tensor_scale(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            m = rng.normal(0, 1, size=(int(rng.integers(1, 8)), int(rng.integers(1, 33))))
            for bit_width in (2, 4, 8):
                qt = quantize_per_channel(m, 0, bit_width)
                assert np.all(qt.params.scale <= compute_scale(m, bit_width) + 1e-15)

    def test_two_bit_sse_dominance_is_elementwise(self):
        # At 2 bits the coarse and fine lattices are {0, +-max}; per-channel
        # error never exceeds per-tensor error for any single element.
        rng = np.random.default_rng(17)
        for _ in range(500):
            m = rng.normal(0, 1, size=(int(rng.integers(2, 6)), int(rng.integers(2, 17))))
            s = compute_scale(m, 2)
            err_t = np.abs(m - dequantize(quantize(m, s, 2)))
            err_c = np.abs(m - dequantize(quantize_per_channel(m, 0, 2)))
            assert np.all(err_c <= err_t + 1e-12)

    def test_sse_dominance_has_counterexamples_above_two_bits(self):
        # A weight can sit exactly on the coarse lattice but between points of
        # the finer per-row lattice, so strict per-matrix SSE dominance fails.
        m = np.array([[7.0, 7.0], [6.3, 4.05]])
        s = compute_scale(m, 4)
        sse_t = float(np.sum((m - dequantize(quantize(m, s, 4))) ** 2))
        sse_c = float(np.sum((m - dequantize(quantize_per_channel(m, 0, 4))) ** 2))
        assert sse_c > sse_t

    def test_sse_improvement_in_aggregate(self):
        rng = np.random.default_rng(19)
        total_c = total_t = 0.0
        for _ in range(300):
            m = rng.normal(0, 1, size=(int(rng.integers(2, 8)), int(rng.integers(4, 33))))
            m *= 10 ** rng.uniform(-1.5, 1.5, size=(m.shape[0], 1))
            s = compute_scale(m, 4)
            total_t += float(np.sum((m - dequantize(quantize(m, s, 4))) ** 2))
            total_c += float(np.sum((m - dequantize(quantize_per_channel(m, 0, 4))) ** 2))
        assert total_c < total_t


class TestSizeReport:
    def test_small_tensor_with_scale_overhead(self):
        report = size_report([LayerSpec("w", elements=8, source_bits=32)], bit_width=4)
        assert report["total_before"] == 32
        assert report["total_after"] == 8  # 4 payload + 4 scale
        assert report["ratio"] == pytest.approx(4.0)

    def test_ratio_approaches_bit_ratio(self):
        report = size_report([LayerSpec("w", elements=10**9, source_bits=32)], bit_width=4)
        assert report["ratio"] == pytest.approx(8.0, rel=1e-6)

    def test_multi_layer_and_per_channel_overhead(self):
        layers = [
            LayerSpec("a", elements=1000, source_bits=32, scale_count=1),
            LayerSpec("b", elements=1000, source_bits=32, scale_count=10),
        ]
        report = size_report(layers, bit_width=4)
        assert report["layers"][0]["bytes_after"] == 1000 * 4 / 8 + 4
        assert report["layers"][1]["bytes_after"] == 1000 * 4 / 8 + 40
        assert report["total_before"] == 8000

    def test_report_carries_analytic_note(self):
        report = size_report([LayerSpec("w", elements=8)], bit_width=4)
        assert "analytic" in report["note"].lower()

    def test_load_layer_specs(self, tmp_path):
        path = tmp_path / "layers.json"
        path.write_text(
            json.dumps(
                [
                    {"name": "w", "elements": 64},
                    {"name": "x", "elements": 32, "source_bits": 16, "channels": 4},
                ]
            )
        )
        specs = load_layer_specs(str(path))
        assert specs == [
            LayerSpec("w", 64, 32, 1),
            LayerSpec("x", 32, 16, 4),
        ]

    def test_rejects_bad_layer(self):
        with pytest.raises(ValueError):
            LayerSpec("w", elements=0)
