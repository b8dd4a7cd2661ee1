"""Synthetic partially-rendered frames: stitching, blending, loading injection."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from renderwait.errors import InvalidArgument
from renderwait.imaging import Frame
from renderwait.states import LOADING, TRANSITING, RenderState

SPINNER_TICKS = 12
MAX_SHADOW = 0.6
BLEND_ALPHA_RANGE = (0.2, 0.8)
STITCH_FRACTION_RANGE = (0.1, 0.9)
SHADOW_RANGE = (0.2, 1.0)
# Partial:Full ratio of the reference dataset (6,171 / 4,485).
DEFAULT_RATIO = 1.38


class AugmentKind(str, enum.Enum):
    STITCH = "stitch"
    BLEND = "blend"
    LOADING_INJECT = "loading"


@dataclass(frozen=True)
class AugmentSpec:
    kind: AugmentKind
    seed: int
    params: dict[str, Any] = field(default_factory=dict)


def _same_geometry(a: Frame, b: Frame) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise InvalidArgument(f"frame geometry differs: {a.pixels.shape} vs {b.pixels.shape}")


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def stitch(a: Frame, b: Frame, crop_fraction: float, seed: int | None = None) -> tuple[Frame, RenderState]:
    """Left ``round(crop_fraction * width)`` columns of ``a``, the rest from ``b``."""
    _same_geometry(a, b)
    if not (0.0 < crop_fraction <= 1.0):
        raise InvalidArgument(f"crop_fraction must lie in (0, 1), got {crop_fraction}")
    k = int(math.floor(crop_fraction * a.width + 0.5))
    out = b.pixels.copy()
    out[:, :k] = a.pixels[:, :k]
    return Frame(out, a.timestamp_ms), TRANSITING


def blend(a: Frame, b: Frame, alpha: float, seed: int | None = None) -> tuple[Frame, RenderState]:
    """Per-pixel ``alpha * a + (1 - alpha) * b`` rounded half-up."""
    _same_geometry(a, b)
    if not (0.0 <= alpha <= 1.0):
        raise InvalidArgument(f"alpha must lie in [0, 1], got {alpha}")
    mixed = alpha * a.pixels.astype(np.float64) + (1.0 - alpha) * b.pixels.astype(np.float64)
    return Frame(_round_half_up(mixed), a.timestamp_ms), TRANSITING


def spinner_mask(
    height: int, width: int, cx: float, cy: float, radius: float, phase: int
) -> tuple[np.ndarray, np.ndarray]:
    """Boolean tick mask and per-pixel gray level for a 12-tick spinning wheel.

    The tick at index ``phase`` is the darkest; intensity fades around the
    wheel. ``level`` is only meaningful where ``mask`` is set.
    """
    if radius < 2:
        raise InvalidArgument("spinner radius must be at least 2 px")
    if cx - radius < 0 or cy - radius < 0 or cx + radius > width - 1 or cy + radius > height - 1:
        raise InvalidArgument("spinner does not fit inside the frame")
    mask = np.zeros((height, width), dtype=bool)
    level = np.zeros((height, width), dtype=np.float64)
    # only the wheel's bounding box can contain tick pixels
    y0, y1 = int(math.floor(cy - radius)), int(math.ceil(cy + radius)) + 1
    x0, x1 = int(math.floor(cx - radius)), int(math.ceil(cx + radius)) + 1
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    r = np.hypot(dx, dy)
    step = 2.0 * math.pi / SPINNER_TICKS
    angle = np.mod(np.arctan2(dy, dx) + math.pi / 2.0, 2.0 * math.pi)
    tick = np.mod(np.floor(angle / step + 0.5), SPINNER_TICKS).astype(np.intp)
    # perpendicular distance from the pixel to its nearest tick ray
    off = angle - tick * step
    off = np.where(off > math.pi, off - 2.0 * math.pi, off)
    perp = np.abs(r * np.sin(off))
    half_thick = max(0.75, radius * 0.11)
    mask[y0:y1, x0:x1] = (r >= radius * 0.45) & (r <= radius) & (perp <= half_thick)
    age = np.mod(tick - phase, SPINNER_TICKS)
    level[y0:y1, x0:x1] = 40.0 + age * (170.0 / (SPINNER_TICKS - 1))
    return mask, level


def shade(pixels: np.ndarray, shadow_intensity: float) -> np.ndarray:
    if not (0.0 <= shadow_intensity <= 1.0):
        raise InvalidArgument("shadow_intensity must lie in [0, 1]")
    factor = 1.0 - shadow_intensity * MAX_SHADOW
    return _round_half_up(pixels.astype(np.float64) * factor)


def draw_loading(
    pixels: np.ndarray, cx: float, cy: float, radius: float, phase: int, shadow_intensity: float
) -> np.ndarray:
    out = shade(pixels, shadow_intensity)
    h, w = pixels.shape[:2]
    mask, level = spinner_mask(h, w, cx, cy, radius, phase)
    ticks = _round_half_up(level)
    if out.ndim == 3:
        out[mask] = ticks[mask][:, None]
    else:
        out[mask] = ticks[mask]
    return out


def inject_loading(a: Frame, spec: AugmentSpec) -> tuple[Frame, RenderState]:
    p = spec.params
    out = draw_loading(a.pixels, p["cx"], p["cy"], p["radius"], int(p["phase"]), p["shadow_intensity"])
    return Frame(out, a.timestamp_ms), LOADING


def draw_spec(kind: AugmentKind, seed: int, width: int, height: int) -> AugmentSpec:
    """Sample transform parameters deterministically from ``seed``."""
    rng = np.random.default_rng(seed)
    if kind is AugmentKind.STITCH:
        params = {"crop_fraction": float(rng.uniform(*STITCH_FRACTION_RANGE))}
    elif kind is AugmentKind.BLEND:
        params = {"alpha": float(rng.uniform(*BLEND_ALPHA_RANGE))}
    else:
        short = min(width, height)
        radius = float(rng.uniform(0.07, 0.13) * short)
        margin = radius + 1.0
        params = {
            "radius": radius,
            "cx": float(np.clip(width / 2 + rng.uniform(-0.15, 0.15) * width, margin, width - 1 - margin)),
            "cy": float(np.clip(height / 2 + rng.uniform(-0.2, 0.2) * height, margin, height - 1 - margin)),
            "phase": int(rng.integers(SPINNER_TICKS)),
            "shadow_intensity": float(rng.uniform(*SHADOW_RANGE)),
        }
    return AugmentSpec(kind, seed, params)


def apply(spec: AugmentSpec, a: Frame, b: Frame | None = None) -> tuple[Frame, RenderState]:
    if spec.kind is AugmentKind.LOADING_INJECT:
        return inject_loading(a, spec)
    if b is None:
        raise InvalidArgument(f"{spec.kind.value} needs a second frame")
    if spec.kind is AugmentKind.STITCH:
        return stitch(a, b, spec.params["crop_fraction"], spec.seed)
    return blend(a, b, spec.params["alpha"], spec.seed)


@dataclass(frozen=True)
class Synthesized:
    frame: Frame
    state: RenderState
    spec: AugmentSpec
    sources: tuple[int, ...]


def synthesize(full: list[Frame], count: int, seed: int) -> list[Synthesized]:
    """Generate ``count`` partial frames from fully rendered ones.

    Two-frame transforms pair frames of equal geometry; a frame without a
    partner can only receive a loading overlay.
    """
    if count <= 0:
        return []
    if not full:
        raise InvalidArgument("augmentation needs at least one fully rendered frame")
    rng = np.random.default_rng(seed)
    by_shape: dict[tuple[int, ...], list[int]] = {}
    for i, f in enumerate(full):
        by_shape.setdefault(f.pixels.shape, []).append(i)
    kinds = list(AugmentKind)
    out: list[Synthesized] = []
    while len(out) < count:
        i = int(rng.integers(len(full)))
        kind = kinds[int(rng.integers(len(kinds)))]
        peers = by_shape[full[i].pixels.shape]
        sub_seed = int(rng.integers(2**63))
        a = full[i]
        if kind is not AugmentKind.LOADING_INJECT and len(peers) > 1:
            others = [p for p in peers if p != i]
            j = others[int(rng.integers(len(others)))]
            spec = draw_spec(kind, sub_seed, a.width, a.height)
            frame, state = apply(spec, a, full[j])
            sources = (i, j)
        else:
            spec = draw_spec(AugmentKind.LOADING_INJECT, sub_seed, a.width, a.height)
            frame, state = apply(spec, a)
            sources = (i,)
        out.append(Synthesized(frame, state, spec, sources))
    return out
