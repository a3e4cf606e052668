"""Dual superpatches: radius neighborhoods of region and interface descriptors."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .features import DescriptorTable


class RegionDescriptor(NamedTuple):
    feature: np.ndarray
    barycenter: tuple[float, float]
    superpixel_id: int


class InterfaceDescriptor(NamedTuple):
    feature: np.ndarray
    position: tuple[float, float]


@dataclass(frozen=True)
class ScaleSet:
    """Query radius and the library radii searched against it.

    A radius of 0 reduces every superpatch to its center region.
    """

    source_radius: float = 50.0
    library_radii: tuple[float, ...] = (50.0,)

    def __post_init__(self):
        object.__setattr__(self, "library_radii", tuple(float(r) for r in self.library_radii))
        if not self.library_radii:
            raise ValueError("at least one library radius is required")
        if self.source_radius < 0 or any(r < 0 for r in self.library_radii):
            raise ValueError("radii must be >= 0")

    @classmethod
    def relative(cls, source_radius: float, factors) -> "ScaleSet":
        return cls(source_radius, tuple(source_radius * f for f in factors))


@dataclass(frozen=True, eq=False)
class DualSuperpatch:
    """Region and interface descriptors around ``center_id`` within ``radius``.

    The descriptors are stored as index arrays into ``table``.
    :func:`rescale_dsp` changes ``radius`` but keeps ``extraction_radius``;
    positions exposed by the properties are magnified by their ratio
    ``scale`` about the center barycenter.
    """

    table: DescriptorTable
    center_id: int
    radius: float
    region_ids: np.ndarray
    interface_ids: np.ndarray
    extraction_radius: float | None = None

    def __post_init__(self):
        if self.extraction_radius is None:
            object.__setattr__(self, "extraction_radius", float(self.radius))

    @property
    def scale(self) -> float:
        if self.extraction_radius == self.radius:
            return 1.0
        return self.radius / self.extraction_radius

    @property
    def center_barycenter(self) -> np.ndarray:
        return self.table.decomp.barycenters[self.center_id]

    def _place(self, pts: np.ndarray) -> np.ndarray:
        c = self.center_barycenter
        return c + (pts - c) * self.scale

    @property
    def region_features(self) -> np.ndarray:
        return self.table.region_features[self.region_ids]

    @property
    def region_barycenters(self) -> np.ndarray:
        """Superpixel barycenters of the included regions (membership positions)."""
        return self._place(self.table.decomp.barycenters[self.region_ids])

    @property
    def region_positions(self) -> np.ndarray:
        """Barycenters of the eroded regions."""
        return self._place(self.table.region_positions[self.region_ids])

    @property
    def interface_features(self) -> np.ndarray:
        return self.table.interface_features[self.interface_ids]

    @property
    def interface_positions(self) -> np.ndarray:
        return self._place(self.table.interface_positions[self.interface_ids])

    @property
    def regions(self) -> list[RegionDescriptor]:
        return [
            RegionDescriptor(f, (float(x), float(y)), int(i))
            for f, (x, y), i in zip(self.region_features, self.region_positions, self.region_ids)
        ]

    @property
    def interfaces(self) -> list[InterfaceDescriptor]:
        return [
            InterfaceDescriptor(f, (float(x), float(y)))
            for f, (x, y) in zip(self.interface_features, self.interface_positions)
        ]


def _within(points: np.ndarray, center: np.ndarray, r: float) -> np.ndarray:
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    d = np.hypot(points[:, 0] - center[0], points[:, 1] - center[1])
    return np.flatnonzero(d <= r)


def build_dsp(table: DescriptorTable, center: int, r: float) -> DualSuperpatch:
    """Superpatch of ``center``: regions whose superpixel barycenter and
    interfaces whose position lie within Euclidean distance ``r``."""
    if not 0 <= center < table.K:
        raise IndexError(f"superpixel {center} out of range [0, {table.K})")
    if r < 0:
        raise ValueError("radius must be >= 0")
    bary = table.decomp.barycenters
    c = bary[center]
    regions = _within(bary, c, r)
    return DualSuperpatch(table, int(center), float(r), regions, _within(table.interface_positions, c, r))


def rescale_dsp(p: DualSuperpatch, target_radius: float) -> DualSuperpatch:
    """Scale all center-relative positions by ``target_radius / p.radius``."""
    if p.radius <= 0 or target_radius <= 0:
        raise ValueError("rescaling requires positive radii")
    if target_radius == p.radius:
        return p
    return replace(p, radius=float(target_radius))


class Neighborhoods(NamedTuple):
    """CSR neighborhoods of every superpixel at one radius."""

    radius: float
    region_indptr: np.ndarray
    region_indices: np.ndarray
    interface_indptr: np.ndarray
    interface_indices: np.ndarray


def _csr(points: np.ndarray, centers: np.ndarray, r: float, chunk: int = 512):
    indptr = [np.zeros(1, dtype=np.int64)]
    indices = []
    total = 0
    for s in range(0, len(centers), chunk):
        c = centers[s : s + chunk]
        if len(points):
            d = np.hypot(c[:, None, 0] - points[None, :, 0], c[:, None, 1] - points[None, :, 1])
            rows, cols = np.nonzero(d <= r)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
        counts = np.bincount(rows, minlength=len(c))
        indptr.append(total + np.cumsum(counts))
        total += int(counts.sum())
        indices.append(cols)
    return np.concatenate(indptr), np.concatenate(indices).astype(np.int32)


def neighborhoods(table: DescriptorTable, r: float) -> Neighborhoods:
    """All superpatches of ``table`` at radius ``r`` in CSR form.

    Row ``i`` equals ``build_dsp(table, i, r)``'s region and interface ids.
    """
    bary = table.decomp.barycenters
    rp, ri = _csr(bary, bary, r)
    ip, ii = _csr(table.interface_positions, bary, r)
    return Neighborhoods(float(r), rp, ri, ip, ii)
