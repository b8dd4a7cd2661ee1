"""Frames, luminance, bilinear resizing and SSIM."""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy.ndimage import correlate1d

from renderwait.errors import FormatError, InvalidArgument

# SSIM is evaluated after downscaling both frames to this size (width, height).
SSIM_SIZE = (112, 192)

_FRAME_NAME = re.compile(r"^frame_(\d{10})\.(pgm|ppm)$")


@dataclass(frozen=True, eq=False)
class Frame:
    """A raster screenshot: uint8 pixels shaped (height, width) or (height, width, 3)."""

    pixels: np.ndarray
    timestamp_ms: int = 0
    _digest: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self) -> None:
        px = self.pixels
        if px.dtype != np.uint8:
            raise InvalidArgument(f"frame pixels must be uint8, got {px.dtype}")
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise InvalidArgument(f"unsupported frame shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise InvalidArgument("frame dimensions must be positive")
        if self.timestamp_ms < 0:
            raise InvalidArgument("timestamp_ms must be non-negative")
        px.setflags(write=False)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.width, self.height, self.channels

    def digest(self) -> str:
        """SHA-256 of the pixel content and geometry (timestamp excluded)."""
        if not self._digest:
            h = hashlib.sha256(f"{self.width}x{self.height}x{self.channels}".encode())
            h.update(np.ascontiguousarray(self.pixels).tobytes())
            self._digest.append(h.hexdigest())
        return self._digest[0]

    def with_timestamp(self, timestamp_ms: int) -> Frame:
        return Frame(self.pixels, timestamp_ms)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.timestamp_ms == other.timestamp_ms
            and self.pixels.shape == other.pixels.shape
            and bool(np.array_equal(self.pixels, other.pixels))
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    gaussian_sigma: float = 1.5
    dynamic_range: float = 255.0
    c1: float | None = None
    c2: float | None = None
    # None disables downscaling; otherwise (width, height) both frames are resized to.
    resolution: tuple[int, int] | None = SSIM_SIZE

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise InvalidArgument("SSIM window must be odd and >= 3")
        if self.gaussian_sigma <= 0:
            raise InvalidArgument("gaussian_sigma must be positive")
        if self.c1 is None:
            object.__setattr__(self, "c1", (0.01 * self.dynamic_range) ** 2)
        if self.c2 is None:
            object.__setattr__(self, "c2", (0.03 * self.dynamic_range) ** 2)
        if self.c1 <= 0 or self.c2 <= 0:
            raise InvalidArgument("SSIM constants must be positive")

    def kernel(self) -> np.ndarray:
        half = self.window // 2
        x = np.arange(-half, half + 1, dtype=np.float64)
        g = np.exp(-(x**2) / (2.0 * self.gaussian_sigma**2))
        return g / g.sum()


def to_luminance(frame: Frame) -> Frame:
    """BT.601 luma, rounded half-up. Grayscale frames pass through unchanged."""
    if frame.channels == 1:
        return frame
    rgb = frame.pixels.astype(np.float64)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return Frame(_quantize(y), frame.timestamp_ms)


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres, clamped at the borders
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_float(pixels: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize returning float64 samples (no quantization)."""
    if out_w <= 0 or out_h <= 0:
        raise InvalidArgument(f"target size must be positive, got {out_w}x{out_h}")
    img = pixels.astype(np.float64)
    h, w = img.shape[:2]
    if (w, h) == (out_w, out_h):
        return img
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    if img.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def resize_antialiased(pixels: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Single-channel bilinear resize whose filter widens with the shrink factor.

    Point-sampled bilinear drops or keeps thin strokes depending on where the
    sample grid lands, so the same layout looks different at each source
    resolution. Widening the triangle filter averages over the full footprint.
    """
    if out_w <= 0 or out_h <= 0:
        raise InvalidArgument(f"target size must be positive, got {out_w}x{out_h}")
    if pixels.ndim != 2:
        raise InvalidArgument("resize_antialiased expects a single-channel image")
    img = Image.fromarray(np.ascontiguousarray(pixels, dtype=np.float32), mode="F")
    return np.asarray(img.resize((out_w, out_h), Image.Resampling.BILINEAR), dtype=np.float64)


def resize_bilinear(frame: Frame, out_w: int, out_h: int) -> Frame:
    if (frame.width, frame.height) == (out_w, out_h):
        return frame
    return Frame(_quantize(resize_float(frame.pixels, out_w, out_h)), frame.timestamp_ms)


class _SsimStats:
    """Per-frame Gaussian moments, reusable across many pairwise comparisons."""

    def __init__(self, pixels: np.ndarray, params: SsimParams) -> None:
        self.x = pixels.astype(np.float64)
        self.mu = _gauss_valid(self.x, params)
        self.xx = _gauss_valid(self.x * self.x, params)


def _gauss_valid(img: np.ndarray, params: SsimParams) -> np.ndarray:
    k = params.kernel()
    half = params.window // 2
    out = correlate1d(img, k, axis=-1, mode="constant")
    out = correlate1d(out, k, axis=-2, mode="constant")
    return out[..., half:-half, half:-half]


def _check_pair(a: Frame, b: Frame, params: SsimParams) -> None:
    if a.channels != 1 or b.channels != 1:
        raise InvalidArgument("ssim requires single-channel frames")
    if a.pixels.shape != b.pixels.shape:
        raise InvalidArgument(f"dimension mismatch: {a.pixels.shape} vs {b.pixels.shape}")


def _prepared(frame: Frame, params: SsimParams) -> np.ndarray:
    px = frame.pixels
    if params.resolution is not None:
        px = resize_float(px, *params.resolution)
    if min(px.shape) < params.window:
        raise InvalidArgument("frame is smaller than the SSIM window")
    return px


def _ssim_map_mean(mu_a, mu_b, var_a, var_b, cov, params: SsimParams) -> np.ndarray:
    mu_ab = mu_a * mu_b
    num = (2.0 * mu_ab + params.c1) * (2.0 * cov + params.c2)
    den = (mu_a * mu_a + mu_b * mu_b + params.c1) * (var_a + var_b + params.c2)
    return num / den


def _ssim_from_stats(sa: _SsimStats, sb: _SsimStats, params: SsimParams) -> float:
    var_a = sa.xx - sa.mu * sa.mu
    var_b = sb.xx - sb.mu * sb.mu
    if sa is sb:
        cov = var_a
    else:
        cov = _gauss_valid(sa.x * sb.x, params) - sa.mu * sb.mu
    return float(np.mean(_ssim_map_mean(sa.mu, sb.mu, var_a, var_b, cov, params)))


def ssim(a: Frame, b: Frame, params: SsimParams | None = None) -> float:
    """Mean SSIM over every valid window position."""
    params = params or SsimParams()
    _check_pair(a, b, params)
    sa = _SsimStats(_prepared(a, params), params)
    if a is b or np.array_equal(a.pixels, b.pixels):
        return _ssim_from_stats(sa, sa, params)
    sb = _SsimStats(_prepared(b, params), params)
    return _ssim_from_stats(sa, sb, params)


def ssim_matrix(frames: list[Frame], params: SsimParams | None = None) -> np.ndarray:
    """Symmetric matrix of pairwise SSIM values; the diagonal is 1.

    Per-frame moments are computed once; each entry equals :func:`ssim` on
    the same pair bit for bit.
    """
    params = params or SsimParams()
    for f in frames[1:]:
        _check_pair(frames[0], f, params)
    stats = [_SsimStats(_prepared(f, params), params) for f in frames]
    digests = [f.digest() for f in frames]
    n = len(frames)
    out = np.ones((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            sb = stats[i] if digests[i] == digests[j] else stats[j]
            out[i, j] = out[j, i] = _ssim_from_stats(stats[i], sb, params)
    return out


# --- raster files ---------------------------------------------------------


def frame_filename(frame: Frame) -> str:
    ext = "pgm" if frame.channels == 1 else "ppm"
    return f"frame_{frame.timestamp_ms:010d}.{ext}"


def write_frame(frame: Frame, path: str | os.PathLike) -> None:
    mode = "L" if frame.channels == 1 else "RGB"
    Image.fromarray(np.ascontiguousarray(frame.pixels), mode=mode).save(path, format="PPM")


def read_frame(path: str | os.PathLike, timestamp_ms: int | None = None) -> Frame:
    try:
        with Image.open(path) as im:
            if im.format != "PPM" or im.mode not in ("L", "RGB"):
                raise FormatError(f"{path}: expected 8-bit PGM/PPM, got {im.format}/{im.mode}")
            pixels = np.array(im, dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if timestamp_ms is None:
        m = _FRAME_NAME.match(os.path.basename(os.fspath(path)))
        timestamp_ms = int(m.group(1)) if m else 0
    return Frame(pixels, timestamp_ms)


def list_frames(directory: str | os.PathLike) -> list[str]:
    """Frame files of a screencast directory in timestamp order."""
    names = [n for n in os.listdir(directory) if _FRAME_NAME.match(n)]
    return [os.path.join(directory, n) for n in sorted(names)]
