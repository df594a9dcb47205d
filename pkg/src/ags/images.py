"""PNG image I/O.

Images travel as 8-bit PNGs on disk and as float64 arrays in [0, 1] in
memory, so a load is quantized to the 1/255 grid by construction.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def load_image(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Load a PNG as (rgb, alpha), both float in [0, 1].

    RGB images get an all-ones alpha; RGBA alpha is returned as-is and the
    color channels are left un-premultiplied.
    """
    img = Image.open(path)
    if img.mode not in ("RGB", "RGBA"):
        img = img.convert("RGBA")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.shape[2] == 4:
        return arr[:, :, :3], arr[:, :, 3]
    return arr, np.ones(arr.shape[:2])


def save_image(path: str, rgb: np.ndarray, alpha: np.ndarray | None = None) -> None:
    rgb8 = np.clip(np.round(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    if alpha is not None:
        a8 = np.clip(np.round(np.asarray(alpha) * 255.0), 0, 255).astype(np.uint8)
        rgb8 = np.concatenate([rgb8, a8[:, :, None]], axis=2)
        Image.fromarray(rgb8, "RGBA").save(path)
    else:
        Image.fromarray(rgb8, "RGB").save(path)


def composite_over_white(rgb: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return rgb * alpha[:, :, None] + (1.0 - alpha[:, :, None])
