"""Synthetic benchmarks: oriented-stripe mosaics, noise, scaled libraries and
labeled portrait-like scenes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .decomp import Decomposition, relabel_valid, resample_nearest
from .label import GroundTruth

SCALE_FACTORS = (1 / 2, 2 / 3, 1.0, 1.5, 2.0)


# ----------------------------------------------------------- texture mosaics


def stripe_angles(n: int = 16) -> np.ndarray:
    """``n`` evenly spaced gradient directions in degrees, in ``[0, 180)``."""
    return np.arange(n) * 180.0 / n


def stripes(h: int, w: int, angle_deg: float, wavelength: float, phase: float,
            amplitude: float = 60.0, mean: float = 128.0) -> np.ndarray:
    """Sinusoidal stripes whose intensity gradient points along ``angle_deg``."""
    t = np.deg2rad(angle_deg)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return mean + amplitude * np.sin(2 * np.pi * (xs * np.cos(t) + ys * np.sin(t)) / wavelength + phase)


class TexturePair(NamedTuple):
    image_a: np.ndarray
    image_b: np.ndarray
    decomp_a: Decomposition
    decomp_b: Decomposition
    texture_a: np.ndarray   # texture id per region
    texture_b: np.ndarray
    angles: np.ndarray      # degrees per texture id


def _tile_partition(size: int, grid: int, refine: int) -> tuple[np.ndarray, np.ndarray]:
    """Region labels and owning tile index of a ``grid x grid`` tiling whose
    tiles are split into ``refine x refine`` blocks."""
    cells = grid * refine
    edges = np.round(np.linspace(0, size, cells + 1)).astype(int)
    idx = np.searchsorted(edges, np.arange(size), side="right") - 1
    labels = idx[:, None] * cells + idx[None, :]
    ry, rx = np.divmod(np.arange(cells * cells), cells)
    tile = (ry // refine) * grid + rx // refine
    return labels, tile


def gen_textures(
    size: int = 256,
    grid: int = 4,
    n_orientations: int = 16,
    wavelength: float = 8.0,
    amplitude: float = 60.0,
    refine: int = 1,
    seed: int = 0,
) -> TexturePair:
    """Two mosaics of the same ``grid**2`` oriented textures in permuted layouts.

    Texture ``t`` is a gray stripe pattern at ``stripe_angles(n)[t]`` with a
    random phase per tile.  Ground-truth decompositions are the tile
    partitions, optionally refined into ``refine**2`` blocks per tile.
    """
    n_tiles = grid * grid
    if n_orientations != n_tiles:
        raise ValueError("one orientation per tile expected")
    rng = np.random.default_rng(seed)
    angles = stripe_angles(n_orientations)
    labels, tile = _tile_partition(size, grid, refine)
    out = []
    for _ in range(2):
        layout = rng.permutation(n_tiles)      # texture id of each tile
        phases = rng.uniform(0, 2 * np.pi, n_tiles)
        img = np.empty((size, size))
        tile_map = tile[labels]
        for t in range(n_tiles):
            m = tile_map == t
            img[m] = stripes(size, size, angles[layout[t]], wavelength, phases[t], amplitude)[m]
        img = np.clip(np.round(img), 0, 255).astype(np.uint8)
        rgb = np.repeat(img[..., None], 3, axis=2)
        out.append((rgb, Decomposition.from_labels(labels, rgb), layout[tile]))
    (ia, da, ta), (ib, db, tb) = out
    return TexturePair(ia, ib, da, db, ta, tb, angles)


def add_noise(image: np.ndarray, variance: float, seed: int = 0) -> np.ndarray:
    """I.i.d. Gaussian noise per pixel and channel, rounded and clipped to [0, 255]."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    image = np.asarray(image)
    if variance == 0:
        return image.copy()
    rng = np.random.default_rng(seed)
    noisy = image.astype(np.float64) + rng.normal(0.0, np.sqrt(variance), image.shape)
    return np.clip(np.round(noisy), 0, 255).astype(np.uint8)


# ----------------------------------------------------------- scaled libraries


@dataclass(frozen=True, eq=False)
class LibraryItem:
    image: np.ndarray
    decomp: Decomposition
    gt: GroundTruth | None = None
    factor: float = 1.0


def rescale_item(item: LibraryItem, factor: float) -> LibraryItem:
    """Nearest-neighbor resampling (no interpolation) of image, labels and classes."""
    if factor <= 0:
        raise ValueError("factor must be > 0")
    if factor == 1.0:
        return LibraryItem(item.image, item.decomp, item.gt, item.factor)
    image = resample_nearest(item.image, factor)
    labels = relabel_valid(resample_nearest(item.decomp.labels, factor))
    gt = None
    if item.gt is not None:
        gt = GroundTruth(resample_nearest(item.gt.class_map, factor), item.gt.n_classes, item.gt.names)
    return LibraryItem(image, Decomposition.from_labels(labels, image), gt, item.factor * factor)


def gen_scaled_library(
    items: Sequence[LibraryItem],
    factors: Sequence[float] = SCALE_FACTORS,
    seed: int = 0,
) -> list[LibraryItem]:
    """Each item resampled by a factor drawn uniformly from ``factors``."""
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(factors), len(items))
    return [rescale_item(it, float(factors[p])) for it, p in zip(items, picks)]


# ----------------------------------------------------------- portrait scenes

SCENE_CLASSES = ("background", "skin", "hair")

_SKIN = np.array([[224, 172, 140], [198, 134, 96], [241, 194, 160], [141, 85, 56], [255, 205, 170]], float)
_HAIR = np.array([[35, 25, 20], [90, 56, 30], [200, 160, 90], [120, 50, 25], [60, 60, 60]], float)


def _ellipse(xs, ys, cx, cy, ax, ay, angle=0.0):
    c, s = np.cos(angle), np.sin(angle)
    u = (xs - cx) * c + (ys - cy) * s
    v = -(xs - cx) * s + (ys - cy) * c
    return (u / ax) ** 2 + (v / ay) ** 2


def gen_scene(size: int = 160, seed: int = 0, noise_sigma: float = 6.0) -> tuple[np.ndarray, GroundTruth]:
    """A head-and-shoulders scene with background / skin / hair classes.

    Face position, shape and colors, hair style, background clutter and the
    shirt are drawn from ``seed``.  Eyes, brows and mouth are painted inside
    the face but keep the skin class.
    """
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    s = size / 160.0

    # background: tilted color gradient plus a few blobs and bars
    c0, c1 = rng.uniform(20, 235, (2, 3))
    t = rng.uniform(0, 2 * np.pi)
    ramp = ((xs * np.cos(t) + ys * np.sin(t)) / size + 1) / 2
    img = c0 + (c1 - c0) * ramp[..., None]
    for _ in range(rng.integers(2, 6)):
        m = _ellipse(xs, ys, *rng.uniform(0, size, 2), *rng.uniform(8, 30, 2) * s, rng.uniform(0, np.pi)) <= 1
        img[m] = rng.uniform(0, 255, 3)
    if rng.random() < 0.5:
        x0 = rng.uniform(0, size)
        img[np.abs(xs - x0) < rng.uniform(3, 10) * s] = rng.uniform(0, 255, 3)
    cls = np.zeros((size, size), dtype=np.int64)

    cx = size / 2 + rng.uniform(-12, 12) * s
    cy = size * 0.52 + rng.uniform(-8, 8) * s
    fa = rng.uniform(27, 35) * s
    fb = rng.uniform(35, 43) * s
    tilt = rng.uniform(-0.2, 0.2)
    skin = _SKIN[rng.integers(len(_SKIN))] + rng.uniform(-15, 15, 3)
    hair = _HAIR[rng.integers(len(_HAIR))] + rng.uniform(-12, 12, 3)

    # shirt (background class) and neck
    shirt = rng.uniform(0, 255, 3)
    m = ys > cy + fb * 0.9 + ((xs - cx) / (2.2 * fa)) ** 2 * 20 * s
    img[m] = shirt
    neck = (np.abs(xs - cx) < fa * 0.45) & (ys > cy) & (ys < cy + fb * 1.15)
    img[neck] = skin * 0.9
    cls[neck] = 1

    # hair behind and above the face
    ha = fa * rng.uniform(1.1, 1.35)
    hb = fb * rng.uniform(1.05, 1.25)
    long_hair = rng.random() < 0.4
    hm = _ellipse(xs, ys, cx, cy - fb * 0.15, ha, hb, tilt) <= 1
    if not long_hair:
        hm &= ys < cy + fb * 0.1
    img[hm] = hair
    cls[hm] = 2
    streak = 0.5 + 0.5 * np.sin(xs * rng.uniform(0.6, 1.2) + ys * 0.2)
    img[hm] += (streak[hm, None] - 0.5) * 25

    face = _ellipse(xs, ys, cx, cy, fa, fb, tilt) <= 1
    fringe = rng.uniform(0.25, 0.6)
    face &= ~(hm & (ys < cy - fb * fringe))
    shade = 1.0 - 0.25 * np.clip((xs - cx) / fa, -1, 1) * rng.choice([-1, 1])
    img[face] = skin * shade[face, None]
    cls[face] = 1

    # features stay in the skin class
    ey = cy - fb * 0.15
    for sx in (-1, 1):
        ex = cx + sx * fa * 0.4
        img[(_ellipse(xs, ys, ex, ey, 4.5 * s, 2.5 * s) <= 1) & face] = (40, 30, 30)
        img[(np.abs(ys - (ey - 7 * s)) < 1.5 * s) & (np.abs(xs - ex) < 6 * s) & face] = hair * 0.8
    mouth = (_ellipse(xs, ys, cx, cy + fb * 0.5, 9 * s, 2.5 * s) <= 1) & face
    img[mouth] = (150, 60, 60)

    img += rng.normal(0, noise_sigma, img.shape)
    img = np.clip(np.round(img), 0, 255).astype(np.uint8)
    return img, GroundTruth(cls, len(SCENE_CLASSES), SCENE_CLASSES)
