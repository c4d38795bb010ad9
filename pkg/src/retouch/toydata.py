"""Synthetic unpaired enhancement task with a known optimal edit.

Smooth random color fields serve as "well-exposed" targets; sources are
the same kind of field pushed through a fixed distortion (brightness
halved, chroma scaled by 0.7).  Recovering the original is therefore
within reach of the filter pipeline: a positive Exposure setting undoes
the darkening and a positive Saturation/Vibrance setting restores the
chroma.  Held-out pairs keep the pristine originals for scoring.
"""

from __future__ import annotations

import os

import numpy as np

from .image import Image, LUMA_WEIGHTS, resize_bicubic, save_image

__all__ = ["coarse_field", "render", "base_image", "distort", "write_toy_dataset"]

_GRID = 6


def coarse_field(rng: np.random.Generator, grid: int = _GRID) -> np.ndarray:
    """Low-resolution RGB values; the [0.2, 0.95] range leaves headroom so
    the x0.5 darkening is exactly invertible (nothing clips)."""
    return rng.uniform(0.2, 0.95, size=(grid, grid, 3)).astype(np.float32)


def render(field: np.ndarray, size: int) -> Image:
    """Upsample a coarse field into a smooth image of the requested size.

    The same field rendered at two sizes depicts the same scene, which is
    what the scale-invariance checks need.
    """
    return resize_bicubic(Image(field), size, size)


def base_image(rng: np.random.Generator, size: int = 64) -> Image:
    return render(coarse_field(rng), size)


def distort(image: Image) -> Image:
    """Darken by x0.5, then scale chroma by 0.7 around the darkened luminance."""
    v = image.pixels.astype(np.float64) * 0.5
    lum = np.tensordot(v, LUMA_WEIGHTS, axes=([-1], [0]))[..., None]
    out = lum + (v - lum) * 0.7
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


def write_toy_dataset(root, n_source: int = 200, n_target: int = 200,
                      n_holdout: int = 50, size: int = 64, seed: int = 0):
    """Materialize source/, target/, holdout_src/ and holdout_ref/ as PPM.

    Source and target draws never share a field; held-out images come
    with their undistorted originals for PSNR scoring.
    """
    root = os.fspath(root)
    dirs = {
        name: os.path.join(root, name)
        for name in ("source", "target", "holdout_src", "holdout_ref")
    }
    for d in dirs.values():
        os.makedirs(d, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_source):
        save_image(distort(base_image(rng, size)),
                   os.path.join(dirs["source"], f"{i:04d}.ppm"))
    for i in range(n_target):
        save_image(base_image(rng, size),
                   os.path.join(dirs["target"], f"{i:04d}.ppm"))
    for i in range(n_holdout):
        original = base_image(rng, size)
        save_image(distort(original),
                   os.path.join(dirs["holdout_src"], f"{i:04d}.ppm"))
        save_image(original, os.path.join(dirs["holdout_ref"], f"{i:04d}.ppm"))
    return dirs
