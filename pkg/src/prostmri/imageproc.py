"""Image decoding, standardization and MRI-safe augmentation.

Images are plain 2-D ``float64`` arrays (rows x cols). A *standardized*
image is 224x224 with intensities in [0, 1]. Geometry is always bilinear
with edge-replicate fill.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DecodeError
from .rng import SplitMix64

SIZE = 224


def decode_image(path) -> np.ndarray:
    """Raw grayscale intensities of a PNG/JPEG file (RGB collapsed by luma)."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                mode = im.mode
            arr = np.asarray(im)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from None
    arr = arr.astype(np.float64)
    if arr.ndim == 3:
        if arr.shape[2] >= 3:
            arr = 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
        else:  # LA
            arr = arr[..., 0]
    if arr.ndim != 2 or arr.size == 0:
        raise DecodeError(f"cannot decode image {path}: unexpected shape {arr.shape}")
    return arr


def sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup at real coordinates; out-of-frame coords clamp to the edge."""
    h, w = img.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resample with pixel-centre alignment: ``src = (dst + 0.5) * in/out - 0.5``."""
    h, w = img.shape
    ys = (np.arange(height) + 0.5) * (h / height) - 0.5
    xs = (np.arange(width) + 0.5) * (w / width) - 0.5
    return sample_bilinear(img, ys[:, None], xs[None, :])


def normalize_minmax(img: np.ndarray) -> np.ndarray:
    lo, hi = float(img.min()), float(img.max())
    if hi == lo:
        return np.full(img.shape, 0.5)
    return (img - lo) / (hi - lo)


def standardize(raw: np.ndarray, size: int = SIZE) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.size == 0:
        raise DecodeError(f"expected a non-empty 2-D image, got shape {raw.shape}")
    if raw.shape != (size, size):
        raw = resize_bilinear(raw, size, size)
    return normalize_minmax(raw)


def load_standardized(path, size: int = SIZE) -> np.ndarray:
    return standardize(decode_image(path), size)


def save_png(img: np.ndarray, path) -> None:
    arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


# -- geometry ---------------------------------------------------------------

def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1].copy()


def warp_affine(img: np.ndarray, inverse: np.ndarray, offset=(0.0, 0.0)) -> np.ndarray:
    """Resample ``img`` where output pixel q reads source ``inverse @ (q - c) + c - offset``.

    Coordinates are (x, y) about the image centre ``c``.
    """
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    qx, qy = xx - cx, yy - cy
    sx = inverse[0, 0] * qx + inverse[0, 1] * qy + cx - offset[0]
    sy = inverse[1, 0] * qx + inverse[1, 1] * qy + cy - offset[1]
    return sample_bilinear(img, sy, sx)


def _rotation(deg: float) -> np.ndarray:
    t = math.radians(deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def rotate(img: np.ndarray, deg: float) -> np.ndarray:
    if deg == 0:
        return img.copy()
    return warp_affine(img, _rotation(-deg))


def translate(img: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Shift content by (dx, dy) pixels."""
    if dx == 0 and dy == 0:
        return img.copy()
    return warp_affine(img, np.eye(2), offset=(dx, dy))


def rescale(img: np.ndarray, factor: float) -> np.ndarray:
    """Zoom about the centre, keeping the frame size."""
    if factor == 1:
        return img.copy()
    return warp_affine(img, np.eye(2) / factor)


# -- augmentation -------------------------------------------------------------

@dataclass(frozen=True)
class AugSpec:
    max_rotation_deg: float = 10.0
    hflip_prob: float = 0.5
    max_translate_frac: float = 0.05
    scale_range: tuple[float, float] = (0.95, 1.05)
    intensity_jitter: float = 0.05
    contrast_jitter: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "scale_range", tuple(float(v) for v in self.scale_range))
        lo, hi = self.scale_range
        if min(self.max_rotation_deg, self.max_translate_frac,
               self.intensity_jitter, self.contrast_jitter) < 0:
            raise ConfigError("augmentation magnitudes must be non-negative")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ConfigError(f"hflip_prob must lie in [0, 1], got {self.hflip_prob}")
        if not 0.0 < lo <= hi:
            raise ConfigError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")

    @classmethod
    def identity(cls) -> "AugSpec":
        return cls(0.0, 0.0, 0.0, (1.0, 1.0), 0.0, 0.0)


DEFAULT_AUG = AugSpec()
SAFE_AUG = AugSpec(max_rotation_deg=15.0, max_translate_frac=0.08, scale_range=(0.9, 1.1))


def augment(img: np.ndarray, spec: AugSpec, rng: SplitMix64) -> np.ndarray:
    """Flip, rotate, translate, scale, then intensity/contrast jitter.

    Exactly seven uniforms are drawn per call whatever the spec, so streams
    stay aligned across specs. The geometric steps are composed into one
    affine map and resampled once.
    """
    u = rng.random(7)
    h, w = img.shape
    lo, hi = spec.scale_range
    flip = u[0] < spec.hflip_prob
    angle = (2.0 * u[1] - 1.0) * spec.max_rotation_deg
    tx = (2.0 * u[2] - 1.0) * spec.max_translate_frac * w
    ty = (2.0 * u[3] - 1.0) * spec.max_translate_frac * h
    factor = lo + (hi - lo) * u[4]
    shift = (2.0 * u[5] - 1.0) * spec.intensity_jitter
    gain = 1.0 + (2.0 * u[6] - 1.0) * spec.contrast_jitter

    out = hflip(img) if flip else img
    if angle != 0 or tx != 0 or ty != 0 or factor != 1:
        # forward: q = factor * (R p + t); inverse: p = R^-1 (q / factor - t)
        rinv = _rotation(-angle)
        inverse = rinv / factor
        off = rinv @ np.array([tx, ty])
        out = warp_affine(out, inverse, offset=(off[0], off[1]))
    if gain != 1 or shift != 0:
        out = out * gain + shift
    return np.clip(out, 0.0, 1.0)


def synthesize_variants(train_fold, n_per_image: int, spec: AugSpec, rng: SplitMix64):
    """``n_per_image`` augmented copies of every (image, label) pair.

    Image ``i`` draws from substream ``rng.child(i)``, so the result does not
    depend on processing order. Only ever feed training data through this.
    """
    if n_per_image < 0:
        raise ConfigError(f"n_per_image must be >= 0, got {n_per_image}")
    out = []
    for i, (img, label) in enumerate(train_fold):
        sub = rng.child(i)
        for _ in range(n_per_image):
            out.append((augment(img, spec, sub), label))
    return out
