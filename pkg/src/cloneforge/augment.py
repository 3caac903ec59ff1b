"""Seeded clone-generation transforms: random affine, color jitter, blur.

These simulate re-photography and preservation variation around a single
anchor image. All functions take and return 3x32x32 float images in
[0, 1] and draw their parameters from the generator they are handed, so
a fixed seed reproduces a clone set bit for bit. Each clone in
``make_clones`` uses its own derived substream, which keeps clone i
independent of the requested count and makes parallel generation safe.

Fixed conventions (the underlying operations are standard but their
details diverge across libraries, so they are pinned here):
  - transform order is affine -> jitter -> blur; jitter stages run
    brightness -> contrast -> saturation, clamping to [0, 1] after each
  - affine: inverse-map output pixels through a matrix built about the
    image center, bilinear sampling, zero fill outside the input
  - grayscale weights 0.299 / 0.587 / 0.114 (BT.601)
  - blur: 3-tap separable Gaussian, reflect padding
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .seeding import stream

_GRAY = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass
class AugmentConfig:
    rot_deg: float = 20.0
    translate_frac: float = 0.10
    scale_range: tuple[float, float] = (0.9, 1.1)
    shear_deg: float = 10.0
    brightness: float = 0.3
    contrast: float = 0.3
    saturation: float = 0.2
    blur_kernel: int = 3
    blur_sigma_range: tuple[float, float] = (0.1, 2.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.blur_kernel % 2 != 1:
            raise ValueError("blur_kernel must be odd")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AugmentConfig":
        raw = json.loads(text)
        for key in ("scale_range", "blur_sigma_range"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


def _affine_matrix(
    angle_deg: float, tx: float, ty: float, scale: float, shear_deg: float, center: tuple[float, float]
) -> np.ndarray:
    """Forward 3x3 matrix: rotate-shear-scale about the image center, then translate."""
    a = np.deg2rad(angle_deg)
    s = np.deg2rad(shear_deg)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    shear = np.array([[1.0, -np.tan(s)], [0.0, 1.0]])
    core = rot @ shear * scale
    cx, cy = center
    m = np.eye(3)
    m[:2, :2] = core
    m[:2, 2] = np.array([tx + cx, ty + cy]) - core @ np.array([cx, cy])
    return m


def _bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample (3,H,W) at float coords, zero outside the image."""
    h, w = img.shape[1:]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0).astype(np.float32)
    fy = (ys - y0).astype(np.float32)

    def tap(yi: np.ndarray, xi: np.ndarray) -> np.ndarray:
        inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        vals = img[:, np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        return np.where(inside, vals, np.float32(0.0))

    top = tap(y0, x0) * (1 - fx) + tap(y0, x0 + 1) * fx
    bot = tap(y0 + 1, x0) * (1 - fx) + tap(y0 + 1, x0 + 1) * fx
    return top * (1 - fy) + bot * fy


def random_affine(img: np.ndarray, rng: np.random.Generator, config: AugmentConfig) -> np.ndarray:
    h, w = img.shape[1:]
    angle = rng.uniform(-config.rot_deg, config.rot_deg)
    tx = rng.uniform(-config.translate_frac * w, config.translate_frac * w)
    ty = rng.uniform(-config.translate_frac * h, config.translate_frac * h)
    scale = rng.uniform(*config.scale_range)
    shear = rng.uniform(-config.shear_deg, config.shear_deg)
    return apply_affine(img, angle, tx, ty, scale, shear)


def apply_affine(img: np.ndarray, angle: float, tx: float, ty: float, scale: float, shear: float) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape[1:]
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    inv = np.linalg.inv(_affine_matrix(angle, tx, ty, scale, shear, center))
    yo, xo = np.mgrid[0:h, 0:w]
    coords = np.stack([xo.ravel(), yo.ravel(), np.ones(h * w)])
    xi, yi, _ = inv @ coords
    out = _bilinear_sample(img, xi, yi).reshape(3, h, w)
    return np.clip(out, 0.0, 1.0)


def color_jitter(img: np.ndarray, rng: np.random.Generator, config: AugmentConfig) -> np.ndarray:
    b = rng.uniform(1.0 - config.brightness, 1.0 + config.brightness)
    c = rng.uniform(1.0 - config.contrast, 1.0 + config.contrast)
    s = rng.uniform(1.0 - config.saturation, 1.0 + config.saturation)
    return apply_jitter(img, b, c, s)


def apply_jitter(img: np.ndarray, b: float, c: float, s: float) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    out = np.clip(np.float32(b) * img, 0.0, 1.0)
    gray_mean = np.float32(np.tensordot(_GRAY, out, axes=(0, 0)).mean())
    out = np.clip(np.float32(c) * out + np.float32(1.0 - c) * gray_mean, 0.0, 1.0)
    gray = np.tensordot(_GRAY, out, axes=(0, 0)).astype(np.float32)
    out = np.clip(np.float32(s) * out + np.float32(1.0 - s) * gray[None], 0.0, 1.0)
    return out


def gaussian_blur(img: np.ndarray, rng: np.random.Generator, config: AugmentConfig) -> np.ndarray:
    sigma = rng.uniform(*config.blur_sigma_range)
    return apply_blur(img, sigma)


def blur_taps(sigma: float) -> np.ndarray:
    offsets = np.array([-1.0, 0.0, 1.0])
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return (taps / taps.sum()).astype(np.float32)


def apply_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    taps = blur_taps(sigma)
    padded = np.pad(img, ((0, 0), (0, 0), (1, 1)), mode="reflect")
    out = taps[0] * padded[:, :, :-2] + taps[1] * padded[:, :, 1:-1] + taps[2] * padded[:, :, 2:]
    padded = np.pad(out, ((0, 0), (1, 1), (0, 0)), mode="reflect")
    out = taps[0] * padded[:, :-2] + taps[1] * padded[:, 1:-1] + taps[2] * padded[:, 2:]
    return np.clip(out, 0.0, 1.0)


def make_clone(anchor: np.ndarray, rng: np.random.Generator, config: AugmentConfig) -> np.ndarray:
    out = random_affine(anchor, rng, config)
    out = color_jitter(out, rng, config)
    return gaussian_blur(out, rng, config)


def make_clones(anchor: np.ndarray, count: int, config: AugmentConfig) -> np.ndarray:
    """``count`` independent augmented views of the anchor, seeded by the config."""
    if count < 1:
        raise ValueError("count must be >= 1")
    anchor = np.asarray(anchor, dtype=np.float32)
    out = np.empty((count,) + anchor.shape, dtype=np.float32)
    for i in range(count):
        out[i] = make_clone(anchor, stream(config.seed, "clone", i), config)
    return out
