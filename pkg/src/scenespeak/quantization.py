"""Symmetric n-bit weight quantization with per-tensor and per-channel scales.

The integer range is sign-symmetric, [-(2^(n-1)-1), 2^(n-1)-1], so a scale
``s = max(|W|) / (2^(n-1) - 1)`` maps the largest weight magnitude exactly
onto the range edge. The extra two's-complement code point ``-2^(n-1)`` is
never used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

SCALE_STORAGE_BITS = 32


class EmptyTensor(ValueError):
    """Raised when asked to quantize a tensor with no elements."""


class BitWidthTooSmall(ValueError):
    """Raised for bit widths below 2; one sign bit alone carries no magnitude."""


class NonPositiveScale(ValueError):
    """Raised when a quantization scale is zero or negative."""


class AxisOutOfRange(IndexError):
    """Raised when the per-channel axis does not exist on the tensor."""


def int_range_max(bit_width: int) -> int:
    """Largest integer magnitude representable at the given bit width."""
    return 2 ** (bit_width - 1) - 1


@dataclass(frozen=True)
class QuantParams:
    """Bit width plus scale(s). ``axis`` is None for per-tensor quantization."""

    bit_width: int
    scale: float | np.ndarray
    axis: int | None = None

    def __post_init__(self) -> None:
        if self.bit_width < 2:
            raise BitWidthTooSmall(f"bit_width must be >= 2, got {self.bit_width}")
        scales = np.atleast_1d(np.asarray(self.scale, dtype=np.float64))
        if not np.all(scales > 0.0):
            raise NonPositiveScale("every scale must be > 0")


@dataclass(frozen=True)
class QuantizedTensor:
    """Integer weight payload together with the parameters that produced it."""

    values: np.ndarray
    params: QuantParams
    shape: tuple[int, ...]

    def __post_init__(self) -> None:
        limit = int_range_max(self.params.bit_width)
        if self.values.size != int(np.prod(self.shape)):
            raise ValueError("value count does not match shape")
        if self.values.size and int(np.max(np.abs(self.values))) > limit:
            raise ValueError(f"quantized values exceed symmetric range +-{limit}")


def compute_scale(weights: np.ndarray, bit_width: int) -> float:
    """Scale for symmetric quantization: max(|W|) / (2^(n-1) - 1).

    An all-zero tensor gets the sentinel scale 1.0 so that quantization maps
    zeros to zeros without dividing by zero.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise EmptyTensor("cannot compute a scale for an empty tensor")
    if bit_width < 2:
        raise BitWidthTooSmall(f"bit_width must be >= 2, got {bit_width}")
    peak = float(np.max(np.abs(w)))
    if peak == 0.0:
        return 1.0
    return peak / int_range_max(bit_width)


def _round_half_away_from_zero(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(weights: np.ndarray, scale: float, bit_width: int) -> QuantizedTensor:
    """Map weights to integers: round(w / s), ties away from zero, then clamp."""
    if scale <= 0.0:
        raise NonPositiveScale(f"scale must be > 0, got {scale}")
    w = np.asarray(weights, dtype=np.float64)
    limit = int_range_max(bit_width)
    q = _round_half_away_from_zero(w / scale)
    q = np.clip(q, -limit, limit).astype(np.int64)
    params = QuantParams(bit_width=bit_width, scale=float(scale))
    return QuantizedTensor(values=q, params=params, shape=w.shape)


def dequantize(qt: QuantizedTensor) -> np.ndarray:
    """Reconstruct approximate weights: w = w_q * s."""
    values = qt.values.astype(np.float64)
    if qt.params.axis is None:
        return values * float(qt.params.scale)
    scales = np.asarray(qt.params.scale, dtype=np.float64)
    expand = [1] * values.ndim
    expand[qt.params.axis] = -1
    return values * scales.reshape(expand)


def quantize_per_channel(matrix: np.ndarray, axis: int, bit_width: int) -> QuantizedTensor:
    """Quantize with one scale per slice along ``axis``."""
    w = np.asarray(matrix, dtype=np.float64)
    if w.size == 0:
        raise EmptyTensor("cannot quantize an empty tensor")
    if not -w.ndim <= axis < w.ndim:
        raise AxisOutOfRange(f"axis {axis} out of range for shape {w.shape}")
    axis = axis % w.ndim
    reduce_axes = tuple(a for a in range(w.ndim) if a != axis)
    peaks = np.max(np.abs(w), axis=reduce_axes) if reduce_axes else np.abs(w)
    limit = int_range_max(bit_width)
    scales = np.where(peaks == 0.0, 1.0, peaks / limit)
    expand = [1] * w.ndim
    expand[axis] = -1
    q = _round_half_away_from_zero(w / scales.reshape(expand))
    q = np.clip(q, -limit, limit).astype(np.int64)
    params = QuantParams(bit_width=bit_width, scale=scales, axis=axis)
    return QuantizedTensor(values=q, params=params, shape=w.shape)


@dataclass(frozen=True)
class LayerSpec:
    """One tensor's contribution to the size estimate.

    ``scale_count`` is 1 for per-tensor quantization or the channel count for
    per-channel quantization.
    """

    name: str
    elements: int
    source_bits: int = 32
    scale_count: int = 1

    def __post_init__(self) -> None:
        if self.elements <= 0:
            raise ValueError(f"layer {self.name!r}: element count must be positive")
        if self.source_bits <= 0 or self.scale_count <= 0:
            raise ValueError(f"layer {self.name!r}: bits and scale count must be positive")


def load_layer_specs(path: str) -> list[LayerSpec]:
    """Read a JSON list of layer entries: name, elements, source_bits, channels."""
    with open(path, encoding="utf-8") as fh:
        entries = json.load(fh)
    specs = []
    for entry in entries:
        specs.append(
            LayerSpec(
                name=entry["name"],
                elements=int(entry["elements"]),
                source_bits=int(entry.get("source_bits", 32)),
                scale_count=int(entry.get("channels", 1)),
            )
        )
    return specs


SIZE_REPORT_NOTE = (
    "Analytic estimate: quantized payload plus scale overhead only. Deployed "
    "artifacts also carry components kept at source precision, so their real "
    "size exceeds this figure."
)


def size_report(layers: list[LayerSpec], bit_width: int) -> dict:
    """Per-layer and total byte counts before/after quantization.

    Before: elements * source_bits / 8. After: elements * bit_width / 8 plus
    one 32-bit scale per tensor or per channel.
    """
    if bit_width < 2:
        raise BitWidthTooSmall(f"bit_width must be >= 2, got {bit_width}")
    rows = []
    total_before = 0.0
    total_after = 0.0
    for spec in layers:
        before = spec.elements * spec.source_bits / 8
        after = spec.elements * bit_width / 8 + spec.scale_count * SCALE_STORAGE_BITS / 8
        rows.append({"name": spec.name, "bytes_before": before, "bytes_after": after})
        total_before += before
        total_after += after
    return {
        "layers": rows,
        "total_before": total_before,
        "total_after": total_after,
        "ratio": total_before / total_after if total_after else float("nan"),
        "note": SIZE_REPORT_NOTE,
    }
