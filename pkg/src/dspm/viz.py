"""Displacement maps on the optical-flow color wheel and label overlays."""
from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .decomp import Decomposition

CLASS_COLORS = np.array(
    [[0, 0, 0], [230, 160, 120], [120, 60, 20], [60, 120, 220], [60, 200, 90], [220, 60, 60], [240, 220, 60], [160, 80, 200]],
    dtype=np.uint8,
)


def color_wheel() -> np.ndarray:
    """``(55, 3)`` hue ramp red-yellow-green-cyan-blue-magenta, as used for flow."""
    segs = [(15, (255, 0, 0), (255, 255, 0)), (6, (255, 255, 0), (0, 255, 0)), (4, (0, 255, 0), (0, 255, 255)),
            (11, (0, 255, 255), (0, 0, 255)), (13, (0, 0, 255), (255, 0, 255)), (6, (255, 0, 255), (255, 0, 0))]
    rows = []
    for n, a, b in segs:
        t = np.arange(n)[:, None] / n
        rows.append(np.array(a) + (np.array(b) - np.array(a)) * t)
    return np.concatenate(rows)


def flow_to_color(u: np.ndarray, v: np.ndarray, max_norm: float | None = None) -> np.ndarray:
    """Hue from direction, saturation from magnitude (white = no motion)."""
    wheel = color_wheel()
    n = len(wheel)
    mag = np.hypot(u, v)
    if max_norm is None:
        max_norm = float(mag.max()) if mag.size else 1.0
    max_norm = max(max_norm, 1e-12)
    r = np.clip(mag / max_norm, 0, 1)
    ang = np.arctan2(-v, -u) / np.pi            # (-1, 1]
    fk = (ang + 1) / 2 * (n - 1)
    k0 = np.floor(fk).astype(int) % n
    k1 = (k0 + 1) % n
    f = (fk - np.floor(fk))[..., None]
    col = ((1 - f) * wheel[k0] + f * wheel[k1]) / 255.0
    col = 1 - r[..., None] * (1 - col)
    return np.round(col * 255).astype(np.uint8)


def displacement_map(d: Decomposition, displacement: np.ndarray, max_norm: float | None = None) -> np.ndarray:
    """Paint each superpixel with the color of its ``(K, 2)`` displacement."""
    displacement = np.asarray(displacement, dtype=np.float64)
    colors = flow_to_color(displacement[:, 0], displacement[:, 1], max_norm)
    return colors[d.labels]


def label_overlay(image: np.ndarray, class_map: np.ndarray, text: str | None = None,
                  opacity: float = 0.5, boundaries: Decomposition | None = None) -> np.ndarray:
    """Blend class colors over ``image`` and stamp ``text`` in the corner."""
    colors = CLASS_COLORS[np.asarray(class_map) % len(CLASS_COLORS)].astype(np.float64)
    out = (1 - opacity) * np.asarray(image, dtype=np.float64)[..., :3] + opacity * colors
    out = np.round(out).astype(np.uint8)
    if boundaries is not None:
        lab = boundaries.labels
        edge = np.zeros(lab.shape, bool)
        edge[:, 1:] |= lab[:, 1:] != lab[:, :-1]
        edge[1:, :] |= lab[1:, :] != lab[:-1, :]
        out[edge] = 255
    if text:
        im = Image.fromarray(out)
        draw = ImageDraw.Draw(im)
        box = draw.textbbox((2, 2), text)
        draw.rectangle(box, fill=(0, 0, 0))
        draw.text((2, 2), text, fill=(255, 255, 255))
        out = np.asarray(im)
    return out
