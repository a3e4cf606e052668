"""Label transfer from library matches, multi-scale decision and accuracy."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .decomp import Decomposition
from .match import MatchRecord

BANDWIDTH_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-pixel class map with ``n_classes`` classes."""

    class_map: np.ndarray
    n_classes: int
    names: tuple[str, ...] = ()

    def __post_init__(self):
        cm = np.asarray(self.class_map)
        if cm.ndim != 2 or not np.issubdtype(cm.dtype, np.integer):
            raise ValueError("class map must be a 2-D integer array")
        if cm.size and (cm.min() < 0 or cm.max() >= self.n_classes):
            raise ValueError(f"class values must lie in [0, {self.n_classes - 1}]")
        names = tuple(self.names) or tuple(str(m) for m in range(self.n_classes))
        if len(names) != self.n_classes:
            raise ValueError("one name per class expected")
        object.__setattr__(self, "class_map", cm)
        object.__setattr__(self, "names", names)

    def counts(self, d: Decomposition) -> np.ndarray:
        """``(K, M)`` pixel counts of each class inside each superpixel."""
        if d.labels.shape != self.class_map.shape:
            raise ValueError("ground truth and decomposition sizes differ")
        c = np.zeros((d.K, self.n_classes), dtype=np.int64)
        np.add.at(c, (d.labels.ravel(), self.class_map.ravel()), 1)
        return c

    def majority(self, d: Decomposition) -> np.ndarray:
        """Majority class per superpixel, lowest class on ties."""
        return self.counts(d).argmax(1)


@dataclass(frozen=True, eq=False)
class LabelScores:
    """Fused class scores.

    ``scores[i, s, m]`` is the normalized weight of class ``m`` among the
    matches of source superpixel ``i`` at library radius ``scales[s]``;
    ``weight_sum`` holds the normalizer and ``empty`` flags (i, s) cells
    without any match, whose scores are uniform.
    """

    scales: tuple[float, ...]
    scores: np.ndarray
    weight_sum: np.ndarray
    empty: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.scores.shape[2]


def omega(distances: np.ndarray, h: float | None = None) -> np.ndarray:
    """Similarity weights ``exp(-D^2 / h^2)``; ``h`` defaults to the median distance."""
    d = np.asarray(distances, dtype=np.float64)
    if h is None:
        h = float(np.median(d)) if d.size else 0.0
    h = max(h, BANDWIDTH_FLOOR)
    return np.exp(-(d * d) / (h * h))


def fuse_labels(
    records: Iterable[MatchRecord],
    lib_classes: Sequence[np.ndarray],
    n_classes: int,
    n_src: int,
    scales: Sequence[float] | None = None,
    h: float | None = None,
) -> LabelScores:
    """Weighted vote of library classes per source superpixel and scale.

    ``lib_classes[b][j]`` is the class of superpixel ``j`` of library image
    ``b``.  ``h=None`` uses the median of each cell's match distances as
    bandwidth.
    """
    records = list(records)
    if scales is None:
        scales = sorted({m.scale for m in records})
    scales = tuple(float(s) for s in scales)
    s_idx = {s: k for k, s in enumerate(scales)}
    S = len(scales)

    src = np.array([m.src_superpixel for m in records], dtype=np.int64)
    sc = np.array([s_idx[float(m.scale)] for m in records], dtype=np.int64)
    dist = np.array([m.distance for m in records], dtype=np.float64)
    try:
        cls = np.array([lib_classes[m.lib_image][m.lib_superpixel] for m in records], dtype=np.int64)
    except IndexError:
        raise ValueError("match refers to a library superpixel without ground truth") from None
    if src.size and (src.min() < 0 or src.max() >= n_src):
        raise ValueError("source superpixel out of range")
    if cls.size and (cls.min() < 0 or cls.max() >= n_classes):
        raise ValueError("library class out of range")

    w = np.empty_like(dist)
    cell = src * S + sc
    order = np.argsort(cell, kind="stable")
    bounds = np.flatnonzero(np.diff(cell[order])) + 1
    for grp in np.split(order, bounds):
        if grp.size:
            w[grp] = omega(dist[grp], h)

    acc = np.zeros((n_src, S, n_classes))
    np.add.at(acc, (src, sc, cls), w)
    count = np.zeros((n_src, S), dtype=np.int64)
    np.add.at(count, (src, sc), 1)
    W = acc.sum(2)
    empty = count == 0
    scores = np.full_like(acc, 1.0 / n_classes)
    ok = W > 0
    scores[ok] = acc[ok] / W[ok, None]
    return LabelScores(scales, scores, W, empty)


def decide_labels(scores: LabelScores, scales: Sequence[float] | None = None) -> np.ndarray:
    """``argmax_m max_r L_m^r``, optionally restricted to ``scales``; ties to the lowest class."""
    s = scores.scores
    if scales is not None:
        idx = [scores.scales.index(float(r)) for r in scales]
        s = s[:, idx]
    return s.max(1).argmax(1)


def paint(pred: np.ndarray, d: Decomposition) -> np.ndarray:
    return np.asarray(pred)[d.labels]


def evaluate(pred: np.ndarray, gt: GroundTruth, d: Decomposition) -> dict[str, float]:
    pred = np.asarray(pred)
    if pred.shape != (d.K,):
        raise ValueError(f"expected {d.K} predictions, got {pred.shape}")
    maj = gt.majority(d)
    return {
        "superpixel_accuracy": float(np.mean(pred == maj)),
        "pixel_accuracy": float(np.mean(paint(pred, d) == gt.class_map)),
    }


# ---------------------------------------------------------------- label maps


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def write_class_map(path: str | Path, class_map: np.ndarray, names: Sequence[str]) -> None:
    """8-bit class-indexed PNG plus a JSON sidecar ``{index: name}``."""
    cm = np.asarray(class_map)
    if cm.size and (cm.min() < 0 or cm.max() > 255):
        raise ValueError("class indices must fit in 8 bits")
    Image.fromarray(cm.astype(np.uint8), mode="L").save(path)
    sidecar_path(path).write_text(json.dumps({str(i): n for i, n in enumerate(names)}, indent=1) + "\n")


def read_class_map(path: str | Path, n_classes: int | None = None) -> GroundTruth:
    """Inverse of :func:`write_class_map`; the sidecar is optional."""
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            raise ValueError(f"{path}: expected an 8-bit class map, got mode {im.mode}")
        cm = np.asarray(im).astype(np.int64)
    side = sidecar_path(path)
    names: tuple[str, ...] = ()
    if side.exists():
        table = json.loads(side.read_text())
        names = tuple(table[str(i)] for i in range(len(table)))
    m = n_classes or len(names) or int(cm.max()) + 1
    if names and len(names) != m:
        names = ()
    return GroundTruth(cm, m, names)
