"""Twelve classic retouching filters driven by parameters in [-1, 1].

The pipeline ``apply_pipeline`` applies every filter in a fixed order
(Dehaze, Clarity, Contrast, Exposure, Temp, Tint, Whites, Blacks,
Highlights, Shadows, Vibrance, Saturation), clamping to [0, 1] after
each step.  All filters are scale-invariant: the pointwise ones by
construction, Clarity and Dehaze because their neighbourhood radii
scale with min(H, W).  A parameter of exactly 0 is always a strict
identity, so the neutral action reproduces the input bit-for-bit.

Filter pipelines are order-sensitive and clamped, so applying ``a1``
then ``a2`` is generally *not* the same as applying ``a1 + a2`` in one
pass -- the agent has to commit to a single action vector.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter, minimum_filter

from .image import Image, LUMA_WEIGHTS

__all__ = [
    "FilterSpec",
    "FILTERS",
    "FILTER_NAMES",
    "NUM_FILTERS",
    "neutral_action",
    "validate_action",
    "apply_filter",
    "apply_pipeline",
    "format_action_report",
]


class FilterSpec:
    """Static description of one filter slot in the pipeline."""

    __slots__ = ("index", "name", "a_min", "a_max", "pointwise")

    def __init__(self, index, name, pointwise, a_min=-1.0, a_max=1.0):
        assert a_min < a_max
        self.index = index  # 1-based position in the pipeline
        self.name = name
        self.pointwise = pointwise
        self.a_min = a_min
        self.a_max = a_max

    def __repr__(self):
        return f"FilterSpec({self.index}, {self.name!r})"


FILTER_NAMES = (
    "Dehaze",
    "Clarity",
    "Contrast",
    "Exposure",
    "Temp",
    "Tint",
    "Whites",
    "Blacks",
    "Highlights",
    "Shadows",
    "Vibrance",
    "Saturation",
)

FILTERS = tuple(
    FilterSpec(i + 1, name, pointwise=name not in ("Dehaze", "Clarity"))
    for i, name in enumerate(FILTER_NAMES)
)

NUM_FILTERS = len(FILTERS)


def neutral_action() -> np.ndarray:
    """The identity edit: all twelve parameters at zero."""
    return np.zeros(NUM_FILTERS, dtype=np.float32)


def validate_action(action) -> np.ndarray:
    arr = np.asarray(action, dtype=np.float32)
    if arr.shape != (NUM_FILTERS,):
        raise ValueError(f"action must have shape ({NUM_FILTERS},), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("action contains NaN or Inf")
    for spec, v in zip(FILTERS, arr):
        if v < spec.a_min or v > spec.a_max:
            raise ValueError(
                f"{spec.name} parameter {v:.4f} outside [{spec.a_min}, {spec.a_max}]"
            )
    return arr


def _lum(v: np.ndarray) -> np.ndarray:
    return v @ LUMA_WEIGHTS


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


# -- individual filters ----------------------------------------------------
# Each takes float32 (H, W, 3) pixels plus p in [-1, 1] and returns the
# un-clamped result; apply_filter/apply_pipeline clamp afterwards.


def _dehaze(v, p):
    h, w = v.shape[:2]
    r = max(1, round(0.03 * min(h, w)))
    dark = v.min(axis=2)
    dark = minimum_filter(dark, size=2 * r + 1, mode="nearest")
    dark = gaussian_filter(dark, sigma=r, mode="nearest")
    offset = (0.7 * p) * dark[:, :, None]
    return (v - offset) / (1.0 - offset)


def _clarity(v, p):
    h, w = v.shape[:2]
    radius = max(1, round(0.02 * min(h, w)))
    lum = _lum(v)
    detail = lum - gaussian_filter(lum, sigma=radius, mode="nearest")
    return v + (p * detail)[:, :, None]


def _contrast(v, p):
    c = 4.0 * abs(p)
    half = float(np.tanh(0.5 * c))
    if p > 0:
        return 0.5 + 0.5 * np.tanh(c * (v - 0.5)) / half
    # inverse S-curve flattens contrast; exact inverse of the p > 0 form
    return 0.5 + np.arctanh(np.clip(2.0 * v - 1.0, -1.0, 1.0) * half) / c


def _exposure(v, p):
    return v * 2.0 ** (2.0 * p)


def _temp(v, p):
    out = v.copy()
    out[:, :, 0] *= 2.0 ** (0.3 * p)
    out[:, :, 2] *= 2.0 ** (-0.3 * p)
    return out


def _tint(v, p):
    out = v.copy()
    out[:, :, 1] *= 2.0 ** (0.3 * p)
    return out


def _whites(v, p):
    return v / (1.0 - 0.25 * p)


def _blacks(v, p):
    b = -0.25 * p
    return (v - b) / (1.0 - b)


def _highlights(v, p):
    mask = _smoothstep((_lum(v) - 0.5) / 0.5)
    return v * 2.0 ** (0.8 * p * mask)[:, :, None]


def _shadows(v, p):
    mask = _smoothstep((0.5 - _lum(v)) / 0.5)
    return v * 2.0 ** (0.8 * p * mask)[:, :, None]


def _vibrance(v, p):
    lum = _lum(v)[:, :, None]
    sat = v.max(axis=2) - v.min(axis=2)
    gain = 1.0 + p * (1.0 - sat)[:, :, None]
    return lum + (v - lum) * gain


def _saturation(v, p):
    lum = _lum(v)[:, :, None]
    return lum + (v - lum) * (1.0 + p)


_FILTER_FNS = {
    "Dehaze": _dehaze,
    "Clarity": _clarity,
    "Contrast": _contrast,
    "Exposure": _exposure,
    "Temp": _temp,
    "Tint": _tint,
    "Whites": _whites,
    "Blacks": _blacks,
    "Highlights": _highlights,
    "Shadows": _shadows,
    "Vibrance": _vibrance,
    "Saturation": _saturation,
}


def _apply_one(pixels: np.ndarray, spec: FilterSpec, p: float) -> np.ndarray:
    if p == 0.0:
        return pixels
    out = _FILTER_FNS[spec.name](pixels, float(p))
    return np.clip(out, 0.0, 1.0, out=out).astype(np.float32, copy=False)


def apply_filter(image: Image, k: int, value: float) -> Image:
    """Apply filter ``k`` (1-based pipeline index) at ``value``."""
    if not 1 <= k <= NUM_FILTERS:
        raise ValueError(f"unknown filter index {k} (expected 1..{NUM_FILTERS})")
    spec = FILTERS[k - 1]
    if not np.isfinite(value) or value < spec.a_min or value > spec.a_max:
        raise ValueError(
            f"{spec.name} parameter {value} outside [{spec.a_min}, {spec.a_max}]"
        )
    return Image(_apply_one(image.pixels, spec, value))


def apply_pipeline(image: Image, action) -> Image:
    """Run all twelve filters in pipeline order with per-step clamping."""
    arr = validate_action(action)
    pixels = image.pixels
    for spec, p in zip(FILTERS, arr):
        pixels = _apply_one(pixels, spec, float(p))
    if pixels is image.pixels:
        return image
    return Image(pixels)


def format_action_report(action) -> str:
    """Render an action as JSON: an ordered list of name/value pairs.

    Values are printed with exactly four decimals so reports diff cleanly.
    """
    arr = validate_action(action)
    lines = ["["]
    for spec, v in zip(FILTERS, arr):
        comma = "," if spec.index < NUM_FILTERS else ""
        lines.append(f'  {{"name": "{spec.name}", "value": {float(v):.4f}}}{comma}')
    lines.append("]")
    return "\n".join(lines) + "\n"
