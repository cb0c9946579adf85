"""Synthetic two-class image sets for smoke runs and the end-to-end tests.

"cancer" images carry oriented stripes, "normal" images isotropic smoothed
noise. Sizes vary so the resampling path is exercised.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def _smooth(a: np.ndarray, passes: int = 2) -> np.ndarray:
    for _ in range(passes):
        a = (a + np.roll(a, 1, 0) + np.roll(a, -1, 0) + np.roll(a, 1, 1) + np.roll(a, -1, 1)) / 5.0
    return a


def stripe_image(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    theta = np.deg2rad(rng.uniform(-20, 20))
    period = rng.uniform(10, 16) * size / 224
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period + phase)
    return 0.5 + 0.25 * wave + 0.15 * _smooth(rng.normal(size=(size, size)))


def noise_image(rng: np.random.Generator, size: int) -> np.ndarray:
    return 0.5 + 0.6 * _smooth(rng.normal(size=(size, size)), passes=3)


def make_textured_dataset(root, n_per_class: int = 100, seed: int = 0,
                          sizes=(160, 224, 256)) -> Path:
    """Write ``root/cancer/*.png`` and ``root/normal/*.png``; returns ``root``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for cls, fn in (("cancer", stripe_image), ("normal", noise_image)):
        d = root / cls
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            size = int(sizes[i % len(sizes)])
            img = np.clip(fn(rng, size), 0, 1)
            Image.fromarray(np.round(img * 255).astype(np.uint8), mode="L").save(d / f"{cls}_{i:03d}.png")
    return root


if __name__ == "__main__":
    import argparse

    ap = argparse.ArgumentParser(description="write a synthetic cancer/normal image set")
    ap.add_argument("root")
    ap.add_argument("--n-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    print(make_textured_dataset(a.root, a.n_per_class, a.seed))
