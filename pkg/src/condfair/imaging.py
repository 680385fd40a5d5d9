"""Raster primitives: SSIM/DSSIM, antialiased bilinear downscaling, class averages,
Gaussian input perturbation and a variance-of-Laplacian blur index.

Images hold real-valued pixels in [0, 255] with shape (height, width, channels).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image as PILImage

from .errors import EmptyList, ImageTooSmall, ShapeMismatch, Upscale, ValidationError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class Image:
    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3) or px.shape[0] < 1 or px.shape[1] < 1:
            raise ShapeMismatch(f"expected (H, W), (H, W, 1) or (H, W, 3) pixels, got {px.shape}")
        if not np.all(np.isfinite(px)) or px.min() < 0 or px.max() > 255:
            raise ValidationError("pixel values must be finite and within [0, 255]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


def load_png(path: str | Path) -> Image:
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return Image(np.asarray(im, dtype=np.float64))


def save_png(img: Image, path: str | Path) -> None:
    """Write an 8-bit PNG; real-valued pixels are rounded to the nearest integer."""
    px = np.clip(np.rint(img.pixels), 0, 255).astype(np.uint8)
    if px.shape[2] == 1:
        PILImage.fromarray(px[:, :, 0], mode="L").save(path)
    else:
        PILImage.fromarray(px, mode="RGB").save(path)


def _same_shape(x: Image, y: Image) -> None:
    if x.shape != y.shape:
        raise ShapeMismatch(f"image shapes differ: {x.shape} vs {y.shape}")


# -- SSIM -------------------------------------------------------------------

def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D window is their outer product."""
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(a: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # separable correlation over both axes, 'valid' region only
    n = taps.size
    h, w = a.shape
    rows = sum(taps[i] * a[i:h - n + 1 + i, :] for i in range(n))
    return sum(taps[i] * rows[:, i:w - n + 1 + i] for i in range(n))


def ssim(
    x: Image,
    y: Image,
    window_size: int = 11,
    sigma: float = 1.5,
    dynamic_range: float = 255.0,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean structural similarity over all valid window positions, averaged over channels."""
    _same_shape(x, y)
    if dynamic_range <= 0:
        raise ValidationError("dynamic_range must be positive")
    if x.height < window_size or x.width < window_size:
        raise ImageTooSmall(f"image {x.height}x{x.width} is smaller than the {window_size}x{window_size} window")
    taps = gaussian_window(window_size, sigma)
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    per_channel = []
    for c in range(x.channels):
        a = x.pixels[:, :, c]
        b = y.pixels[:, :, c]
        mu_a = _filter_valid(a, taps)
        mu_b = _filter_valid(b, taps)
        var_a = _filter_valid(a * a, taps) - mu_a * mu_a
        var_b = _filter_valid(b * b, taps) - mu_b * mu_b
        cov = _filter_valid(a * b, taps) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        per_channel.append(np.mean(num / den))
    return float(np.mean(per_channel))


def dssim(x: Image, y: Image, **kwargs) -> float:
    """Structural dissimilarity (1 - SSIM) / 2."""
    return (1.0 - ssim(x, y, **kwargs)) / 2.0


# -- resampling ------------------------------------------------------------

def aa_bilinear_weights(in_size: int, out_size: int) -> np.ndarray:
    """(out_size, in_size) matrix of antialiased triangle-filter weights.

    Output pixel i is centred at (i + 0.5) * scale in input coordinates; the
    triangle kernel is stretched by ``scale = in_size / out_size`` when
    downscaling. Rows sum to one.
    """
    scale = in_size / out_size
    support = max(scale, 1.0)
    centers = (np.arange(out_size) + 0.5) * scale
    src = np.arange(in_size) + 0.5
    dist = np.abs(src[None, :] - centers[:, None]) / support
    w = np.clip(1.0 - dist, 0.0, None)
    return w / w.sum(axis=1, keepdims=True)


def downsample_bilinear_aa(img: Image, out_w: int, out_h: int) -> Image:
    if out_w < 1 or out_h < 1:
        raise ValidationError("output size must be positive")
    if out_w > img.width or out_h > img.height:
        raise Upscale(f"cannot upscale {img.width}x{img.height} to {out_w}x{out_h}")
    wy = aa_bilinear_weights(img.height, out_h)
    wx = aa_bilinear_weights(img.width, out_w)
    out = np.einsum("ih,hwc,jw->ijc", wy, img.pixels, wx)
    return Image(np.clip(out, 0.0, 255.0))


def mean_image(images: Sequence[Image]) -> Image:
    images = list(images)
    if not images:
        raise EmptyList("need at least one image")
    shape = images[0].shape
    for im in images[1:]:
        if im.shape != shape:
            raise ShapeMismatch(f"image shapes differ: {shape} vs {im.shape}")
    total = np.zeros(shape, dtype=np.float64)
    for im in images:
        total += im.pixels
    return Image(total / len(images))


def perturb_gaussian(img: Image, noise_scale: float, seed: int) -> Image:
    """Add N(0, noise_scale^2) noise, clip to [0, 255] and round to 8-bit levels.

    ``noise_scale`` is a standard deviation.
    """
    if noise_scale < 0:
        raise ValidationError("noise_scale must be non-negative")
    rng = np.random.default_rng(seed)
    noisy = img.pixels + rng.normal(0.0, noise_scale, size=img.shape) if noise_scale > 0 else img.pixels
    return Image(np.rint(np.clip(noisy, 0.0, 255.0)))


# -- blur ----------------------------------------------------------------------

def to_gray(img: Image) -> np.ndarray:
    if img.channels == 1:
        return img.pixels[:, :, 0]
    return img.pixels @ np.asarray(LUMA_WEIGHTS)


def blur_index(img: Image) -> float:
    """Variance of the 3x3 Laplacian response over the valid region; higher means sharper."""
    g = to_gray(img)
    h, w = g.shape
    if h < 3 or w < 3:
        raise ImageTooSmall(f"image {h}x{w} is smaller than 3x3")
    resp = sum(
        _LAPLACIAN[i, j] * g[i:h - 2 + i, j:w - 2 + j]
        for i in range(3) for j in range(3) if _LAPLACIAN[i, j] != 0
    )
    return float(np.var(resp))
