"""Superpatch distances on :class:`~dspm.dsp.DualSuperpatch` pairs.

``a`` is always the processed (query) structure.  With
``DistanceConfig.rescale`` set, a ``b`` extracted at a different radius is
rescaled to ``a.radius`` before comparison.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _kernels as K
from .dsp import DualSuperpatch, rescale_dsp

RegionMode = Literal["symmetric", "projected", "quadratic"]
_MODES = {"quadratic": K.QUADRATIC, "projected": K.PROJECTED, "symmetric": K.SYMMETRIC}


@dataclass(frozen=True)
class DistanceConfig:
    """Distance parameters.

    ``sigma1=None`` uses ``0.5 * sqrt(|I| / K)`` of the query image.
    ``region_mode`` selects the quadratic, directed projected or symmetric
    projected comparison of region descriptors.
    """

    alpha: float = 0.5
    sigma1: float | None = None
    region_mode: RegionMode = "symmetric"
    rescale: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.sigma1 is not None and self.sigma1 <= 0:
            raise ValueError("sigma1 must be > 0")
        if self.region_mode not in _MODES:
            raise ValueError(f"unknown region mode {self.region_mode!r}")

    @property
    def mode_code(self) -> int:
        return _MODES[self.region_mode]

    def sigma1_for(self, a: DualSuperpatch) -> float:
        return self.sigma1 if self.sigma1 is not None else a.table.decomp.sigma1


def weight_w(x1, x2, c1, c2, sigma1: float) -> float:
    """Similarity of two barycenters after registering ``c1`` onto ``c2``."""
    x1, x2, c1, c2 = (np.asarray(v, dtype=np.float64) for v in (x1, x2, c1, c2))
    d = x2 - (x1 - (c1 - c2))
    return float(np.exp(-(d @ d) / sigma1**2))


def weight_ws(x, c, r: float) -> float:
    d = np.asarray(x, dtype=np.float64) - np.asarray(c, dtype=np.float64)
    return float(np.exp(-(d @ d) / (2.0 * r * r)))


def _aligned(a: DualSuperpatch, b: DualSuperpatch, cfg: DistanceConfig) -> DualSuperpatch:
    if cfg.rescale and a.radius > 0 and b.radius > 0 and a.radius != b.radius:
        return rescale_dsp(b, a.radius)
    return b


def _ratio(a: DualSuperpatch, b: DualSuperpatch) -> float:
    """Factor taking ``a``'s raw center offsets into ``b``'s raw frame."""
    if a.radius == b.radius:
        # same bits whichever side was rescaled
        if a.extraction_radius == b.extraction_radius:
            return 1.0
        return b.extraction_radius / a.extraction_radius
    return a.scale / b.scale


def _projected(a: DualSuperpatch, b: DualSuperpatch) -> float:
    ta, tb = a.table, b.table
    db = tb.decomp
    return K.region_projected(
        a.region_ids, ta.region_features, ta.decomp.anchors, ta.region_positions,
        ta.decomp.barycenters, a.center_id, a.extraction_radius,
        db.labels.ravel(), 0, db.width, db.height, 0,
        tb.region_features, db.anchors, b.center_id, _ratio(a, b),
    )


def distance_quadratic(a: DualSuperpatch, b: DualSuperpatch, cfg: DistanceConfig = DistanceConfig()) -> float:
    """All-pairs weighted region distance (quadratic in region count)."""
    if a.region_ids.size == 0 or b.region_ids.size == 0:
        raise ValueError("superpatches must contain at least one region")
    b = _aligned(a, b, cfg)
    ta, tb = a.table, b.table
    return K.region_quadratic(
        a.region_ids, ta.region_features, ta.decomp.barycenters, a.center_id, a.scale, a.extraction_radius,
        b.region_ids, tb.region_features, tb.decomp.barycenters, b.center_id, b.scale, b.extraction_radius,
        cfg.sigma1_for(a),
    )


def distance_projected(a: DualSuperpatch, b: DualSuperpatch, cfg: DistanceConfig = DistanceConfig()) -> float:
    """Directed projected distance: each region of ``a`` is compared with the
    superpixel of ``b``'s decomposition under its registered position."""
    return _projected(a, _aligned(a, b, cfg))


def distance_projected_symmetric(a: DualSuperpatch, b: DualSuperpatch, cfg: DistanceConfig = DistanceConfig()) -> float:
    b = _aligned(a, b, cfg)
    return 0.5 * (_projected(a, b) + _projected(b, a))


def distance_interfaces(a: DualSuperpatch, b: DualSuperpatch, cfg: DistanceConfig = DistanceConfig()) -> float | None:
    """Symmetric nearest-interface distance, ``None`` if either side has none."""
    b = _aligned(a, b, cfg)
    if a.interface_ids.size == 0 or b.interface_ids.size == 0:
        return None
    ta, tb = a.table, b.table
    ca, cb = a.center_barycenter, b.center_barycenter
    ab = K.interface_directed(
        a.interface_ids, ta.interface_features, ta.interface_positions, ca[0], ca[1], a.extraction_radius,
        b.interface_ids, tb.interface_features, tb.interface_positions, cb[0], cb[1], _ratio(a, b),
    )
    ba = K.interface_directed(
        b.interface_ids, tb.interface_features, tb.interface_positions, cb[0], cb[1], b.extraction_radius,
        a.interface_ids, ta.interface_features, ta.interface_positions, ca[0], ca[1], _ratio(b, a),
    )
    return 0.5 * (ab + ba)


def region_distance(a: DualSuperpatch, b: DualSuperpatch, cfg: DistanceConfig = DistanceConfig()) -> float:
    if cfg.region_mode == "quadratic":
        return distance_quadratic(a, b, cfg)
    if cfg.region_mode == "projected":
        return distance_projected(a, b, cfg)
    return distance_projected_symmetric(a, b, cfg)


def distance_dual(a: DualSuperpatch, b: DualSuperpatch, cfg: DistanceConfig = DistanceConfig()) -> float:
    """``alpha * region + (1 - alpha) * interface``; the region term alone
    when either structure has no interface."""
    iface = distance_interfaces(a, b, cfg) if cfg.alpha < 1.0 else None
    if iface is not None and cfg.alpha <= 0.0:
        return iface
    region = region_distance(a, b, cfg)
    if iface is None:
        return region
    return cfg.alpha * region + (1.0 - cfg.alpha) * iface
