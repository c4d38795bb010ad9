"""Image type, file I/O, bicubic resampling and quality metrics.

Images are float32 RGB arrays shaped (H, W, 3) with values in [0, 1].
PNG (and JPEG, decode only) goes through Pillow; binary PPM (P6) is
read and written directly so datasets can be generated without any
image library in the loop.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image as _PILImage

__all__ = [
    "Image",
    "load_image",
    "save_image",
    "resize_bicubic",
    "mse",
    "psnr",
    "ssim",
    "LUMA_WEIGHTS",
]

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float32)

_LOAD_EXTS = {".png", ".ppm", ".jpg", ".jpeg"}
_SAVE_EXTS = {".png", ".ppm"}


@dataclass(frozen=True)
class Image:
    """RGB raster: float32 (H, W, 3) in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if not (isinstance(p, np.ndarray) and p.ndim == 3 and p.shape[2] == 3):
            raise ValueError(f"expected (H, W, 3) array, got {getattr(p, 'shape', type(p))}")
        if p.dtype != np.float32:
            object.__setattr__(self, "pixels", p.astype(np.float32))
            p = self.pixels
        if not np.isfinite(p).all():
            raise ValueError("image contains NaN or Inf")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError(
                f"pixel values outside [0, 1]: min {p.min():.4g}, max {p.max():.4g}"
            )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def luminance(self) -> np.ndarray:
        return self.pixels @ LUMA_WEIGHTS


def _quantize(pixels: np.ndarray) -> np.ndarray:
    # round half up, as in floor(v * 255 + 0.5)
    return np.floor(pixels * 255.0 + 0.5).astype(np.uint8)


def load_image(path) -> Image:
    """Read PNG/PPM/JPEG into a float32 [0, 1] image."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext not in _LOAD_EXTS:
        raise ValueError(
            f"{path}: unsupported extension {ext!r} (supported: {sorted(_LOAD_EXTS)})"
        )
    if ext == ".ppm":
        arr = _read_ppm(path)
    else:
        with _PILImage.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
    return Image(arr.astype(np.float32) / 255.0)


def save_image(image: Image, path) -> None:
    """Write PNG or binary PPM; 8-bit, atomic replace on success."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext not in _SAVE_EXTS:
        raise ValueError(
            f"{path}: unsupported extension {ext!r} (supported: {sorted(_SAVE_EXTS)})"
        )
    q = _quantize(image.pixels)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".img-", suffix=ext)
    try:
        if ext == ".ppm":
            header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
            with os.fdopen(fd, "wb") as f:
                f.write(header)
                f.write(q.tobytes())
        else:
            os.close(fd)
            _PILImage.fromarray(q, mode="RGB").save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()

    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":  # comment to end of line
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PPM header")
        return data[start:pos]

    if token() != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError as e:
        raise ValueError(f"{path}: malformed PPM header") from e
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM supported (maxval {maxval})")
    pos += 1  # single whitespace after maxval
    need = w * h * 3
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise ValueError(
            f"{path}: truncated pixel data ({len(raw)} of {need} bytes)"
        )
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)


# -- resampling ------------------------------------------------------------


def _cubic_kernel(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom kernel (a = -0.5) evaluated at |t|."""
    a = -0.5
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def _resize_axis(arr: np.ndarray, out_n: int, axis: int) -> np.ndarray:
    in_n = arr.shape[axis]
    scale = in_n / out_n
    # half-pixel centre alignment
    src = (np.arange(out_n, dtype=np.float64) + 0.5) * scale - 0.5
    i0 = np.floor(src).astype(np.int64)
    frac = src - i0
    taps = []
    weights = []
    for off in (-1, 0, 1, 2):
        taps.append(np.clip(i0 + off, 0, in_n - 1))
        weights.append(_cubic_kernel(frac - off))
    wsum = np.sum(weights, axis=0)
    arr_m = np.moveaxis(arr, axis, 0)
    out = np.zeros((out_n,) + arr_m.shape[1:], dtype=np.float64)
    for idx, w in zip(taps, weights):
        out += (w / wsum).reshape((out_n,) + (1,) * (arr_m.ndim - 1)) * arr_m[idx]
    return np.moveaxis(out, 0, axis)


def resize_bicubic(image: Image, width: int, height: int) -> Image:
    """Catmull-Rom separable resampling with edge clamping.

    Constant images stay exactly constant (weights are normalised);
    overshoot from the cubic is clipped back into [0, 1].
    """
    if width < 1 or height < 1:
        raise ValueError(f"invalid target size {width}x{height}")
    work = image.pixels.astype(np.float64)
    if height != image.height:
        work = _resize_axis(work, height, 0)
    if width != image.width:
        work = _resize_axis(work, width, 1)
    return Image(np.clip(work, 0.0, 1.0).astype(np.float32))


# -- metrics -----------------------------------------------------------------


def _check_same_shape(a: Image, b: Image):
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(
            f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}"
        )


def mse(a: Image, b: Image) -> float:
    """Mean squared error over all H*W*3 values."""
    _check_same_shape(a, b)
    d = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    return float(np.mean(d * d))


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for (near-)identical inputs."""
    m = mse(a, b)
    if m < 1e-10:
        return 100.0
    return float(10.0 * np.log10(1.0 / m))


def _gaussian_taps(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable 2-D correlation, 'valid' region only."""
    r = len(taps) // 2
    out = np.zeros((img.shape[0] - 2 * r, img.shape[1]), dtype=np.float64)
    for i, t in enumerate(taps):
        out += t * img[i : i + out.shape[0], :]
    out2 = np.zeros((out.shape[0], img.shape[1] - 2 * r), dtype=np.float64)
    for i, t in enumerate(taps):
        out2 += t * out[:, i : i + out2.shape[1]]
    return out2


def ssim(a: Image, b: Image) -> float:
    """Structural similarity on luminance.

    11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, unit data
    range.  Border pixels whose window would leave the image are
    excluded from the average.
    """
    _check_same_shape(a, b)
    if a.height < 11 or a.width < 11:
        raise ValueError(f"ssim needs at least 11x11 images, got {a.height}x{a.width}")
    x = a.luminance().astype(np.float64)
    y = b.luminance().astype(np.float64)
    taps = _gaussian_taps(1.5, 5)
    ux = _filter_valid(x, taps)
    uy = _filter_valid(y, taps)
    uxx = _filter_valid(x * x, taps)
    uyy = _filter_valid(y * y, taps)
    uxy = _filter_valid(x * y, taps)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    cxy = uxy - ux * uy
    c1 = 0.01**2
    c2 = 0.03**2
    s = ((2 * ux * uy + c1) * (2 * cxy + c2)) / ((ux**2 + uy**2 + c1) * (vx + vy + c2))
    return float(s.mean())
