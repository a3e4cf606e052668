"""Region descriptors on eroded superpixels and HoG descriptors at interfaces."""
from __future__ import annotations

import hashlib
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import ndimage

from .decomp import Decomposition

RegionFeatureKind = Literal["mean-rgb", "cumulative-rgb-hist-9", "hog"]
REGION_FEATURE_KINDS = ("mean-rgb", "cumulative-rgb-hist-9", "hog")

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])
HOG_EPS = 1e-9


@dataclass(frozen=True)
class FeatureConfig:
    beta: int = 1
    region_feature_kind: RegionFeatureKind = "cumulative-rgb-hist-9"
    interface_window: int = 9
    hog_bins: int = 9
    interface_min_spacing: int = 4
    region_hog_bins: int = 18

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.region_feature_kind not in REGION_FEATURE_KINDS:
            raise ValueError(f"unknown region feature kind {self.region_feature_kind!r}")
        if self.interface_window < 1 or self.interface_window % 2 == 0:
            raise ValueError(f"interface_window must be odd, got {self.interface_window}")
        if self.interface_min_spacing < 1:
            raise ValueError("interface_min_spacing must be >= 1")
        if self.hog_bins < 1 or self.region_hog_bins < 1:
            raise ValueError("histogram bin counts must be >= 1")

    def key(self) -> str:
        return ",".join(f"{k}={v}" for k, v in sorted(asdict(self).items()))


# ------------------------------------------------------------------ regions


def eroded_mask(labels: np.ndarray, beta: int) -> np.ndarray:
    """Pixels whose ``(2*beta+1)`` square window holds only their own label.

    Windows are clipped at the image border, so the border itself never
    erodes a region.
    """
    if beta == 0:
        return np.ones(labels.shape, dtype=bool)
    size = 2 * beta + 1
    lo = ndimage.minimum_filter(labels, size=size, mode="nearest")
    hi = ndimage.maximum_filter(labels, size=size, mode="nearest")
    return (lo == labels) & (hi == labels)


def erode_region(d: Decomposition, id: int, beta: int) -> tuple[np.ndarray, bool]:
    """Member pixels of ``id`` farther than ``beta`` (Chebyshev) from any other label.

    Returns ``(pixels, fallback)``; when erosion empties the region the full
    member list is returned with ``fallback=True``.
    """
    members = d.members[id]
    if beta == 0:
        return members, False
    kept = members[eroded_mask(d.labels, beta).ravel()[members]]
    if kept.size == 0:
        return members, True
    return kept, False


def _hist_cumulative(values: np.ndarray, bins: int = 9) -> np.ndarray:
    idx = (values.astype(np.int64) * bins) // 256
    out = np.empty((values.shape[1], bins))
    for c in range(values.shape[1]):
        h = np.bincount(idx[:, c], minlength=bins)[:bins].astype(np.float64)
        out[c] = np.cumsum(h) / h.sum()
    return out.ravel()


def _orientation_hist(gx: np.ndarray, gy: np.ndarray, bins: int) -> np.ndarray:
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    b = np.minimum((ang * (bins / np.pi)).astype(np.int64), bins - 1)
    hist = np.bincount(b, weights=mag, minlength=bins)
    return hist / np.sqrt(hist @ hist + HOG_EPS**2)


def gray(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64)[..., :3] @ GRAY_WEIGHTS


def gradients(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences on the grayscale image with edge replication."""
    g = np.pad(gray(image), 1, mode="edge")
    gx = 0.5 * (g[1:-1, 2:] - g[1:-1, :-2])
    gy = 0.5 * (g[2:, 1:-1] - g[:-2, 1:-1])
    return gx, gy


def region_feature(
    image: np.ndarray,
    pixels: np.ndarray,
    kind: RegionFeatureKind = "cumulative-rgb-hist-9",
    *,
    grad: tuple[np.ndarray, np.ndarray] | None = None,
    hog_bins: int = 18,
) -> np.ndarray:
    """Feature vector of the pixel set ``pixels`` (flat row-major indices).

    ``hog`` is a magnitude-weighted orientation histogram over the set,
    using gradients of the whole image.
    """
    pixels = np.asarray(pixels)
    if pixels.size == 0:
        raise ValueError("empty pixel list")
    if kind == "mean-rgb":
        return np.asarray(image).reshape(-1, 3)[pixels].astype(np.float64).mean(0)
    if kind == "cumulative-rgb-hist-9":
        return _hist_cumulative(np.asarray(image).reshape(-1, 3)[pixels], 9)
    if kind == "hog":
        gx, gy = grad if grad is not None else gradients(image)
        return _orientation_hist(gx.ravel()[pixels], gy.ravel()[pixels], hog_bins)
    raise ValueError(f"unknown region feature kind {kind!r}")


# --------------------------------------------------------------- interfaces


def interface_candidates(labels: np.ndarray) -> np.ndarray:
    """Mask of pixels whose clamped 3x3 neighborhood has >= 3 distinct labels."""
    h, w = labels.shape
    p = np.pad(labels, 1, mode="edge")
    stack = np.stack([p[dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3)])
    stack.sort(axis=0)
    distinct = 1 + (np.diff(stack, axis=0) != 0).sum(0)
    return distinct >= 3


def detect_interfaces(d: Decomposition, min_spacing: int = 4) -> np.ndarray:
    """Interface points as an ``(n, 2)`` integer array of ``(x, y)``.

    Candidates are visited in raster order and kept when no kept point lies
    within Chebyshev distance ``< min_spacing``.
    """
    h, w = d.labels.shape
    blocked = np.zeros((h, w), dtype=bool)
    s = min_spacing - 1
    kept = []
    for y, x in np.argwhere(interface_candidates(d.labels)):
        if blocked[y, x]:
            continue
        kept.append((x, y))
        blocked[max(0, y - s) : y + s + 1, max(0, x - s) : x + s + 1] = True
    return np.array(kept, dtype=np.int64).reshape(-1, 2)


def _window_hogs(gx, gy, centers: np.ndarray, window: int, bins: int) -> np.ndarray:
    if len(centers) == 0:
        return np.zeros((0, bins))
    h, w = gx.shape
    half = window // 2
    off = np.arange(-half, half + 1)
    xs = np.clip(centers[:, 0, None, None] + off[None, None, :], 0, w - 1)
    ys = np.clip(centers[:, 1, None, None] + off[None, :, None], 0, h - 1)
    wx, wy = gx[ys, xs], gy[ys, xs]
    mag = np.hypot(wx, wy).reshape(len(centers), -1)
    ang = np.mod(np.arctan2(wy, wx), np.pi).reshape(len(centers), -1)
    b = np.minimum((ang * (bins / np.pi)).astype(np.int64), bins - 1)
    rows = np.repeat(np.arange(len(centers)), b.shape[1])
    hist = np.zeros((len(centers), bins))
    np.add.at(hist, (rows, b.ravel()), mag.ravel())
    norm = np.sqrt((hist**2).sum(1, keepdims=True) + HOG_EPS**2)
    return hist / norm


def interface_feature(
    image: np.ndarray,
    center: tuple[int, int],
    window: int = 9,
    bins: int = 9,
    *,
    grad: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Unsigned, magnitude-weighted HoG of a ``window x window`` square.

    Out-of-image window pixels are clamped to the border.  A flat window
    yields the zero vector, anything else has unit L2 norm.
    """
    gx, gy = grad if grad is not None else gradients(image)
    c = np.array([center], dtype=np.int64)
    return _window_hogs(gx, gy, c, window, bins)[0]


# -------------------------------------------------------------------- table


@dataclass(frozen=True, eq=False)
class DescriptorTable:
    """All region and interface descriptors of one decomposed image.

    Feature values and eroded barycenters are rounded through float32 so
    that a cache round-trip reproduces them bit-exactly.
    """

    decomp: Decomposition
    config: FeatureConfig
    region_features: np.ndarray  # (K, Fr)
    region_positions: np.ndarray  # (K, 2) eroded barycenters
    fallback: np.ndarray  # (K,) bool
    interface_features: np.ndarray  # (N, Fi)
    interface_positions: np.ndarray  # (N, 2)
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.decomp.K

    @property
    def n_interfaces(self) -> int:
        return len(self.interface_positions)


def _f32(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def compute_descriptors(decomp: Decomposition, config: FeatureConfig = FeatureConfig(), image: np.ndarray | None = None) -> DescriptorTable:
    image = decomp.image if image is None else image
    if image is None:
        raise ValueError("decomposition has no image attached")
    image = np.asarray(image)
    grad = gradients(image)
    keep = eroded_mask(decomp.labels, config.beta).ravel()
    w = decomp.width
    feats, pos, fb = [], np.empty((decomp.K, 2)), np.zeros(decomp.K, dtype=bool)
    for i, members in enumerate(decomp.members):
        px = members[keep[members]]
        if px.size == 0:
            px, fb[i] = members, True
        feats.append(region_feature(image, px, config.region_feature_kind, grad=grad, hog_bins=config.region_hog_bins))
        pos[i] = (np.mean(px % w), np.mean(px // w))
    ipos = detect_interfaces(decomp, config.interface_min_spacing)
    ifeat = _window_hogs(*grad, ipos, config.interface_window, config.hog_bins)
    return DescriptorTable(
        decomp=decomp,
        config=config,
        region_features=_f32(np.array(feats)),
        region_positions=_f32(pos),
        fallback=fb,
        interface_features=_f32(ifeat.reshape(-1, config.hog_bins)),
        interface_positions=ipos.astype(np.float64),
    )


def content_key(image: np.ndarray, labels: np.ndarray, config: FeatureConfig) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(image, dtype=np.uint8).tobytes())
    h.update(str(image.shape).encode())
    h.update(np.ascontiguousarray(labels, dtype=np.int32).tobytes())
    h.update(str(labels.shape).encode())
    h.update(config.key().encode())
    return h.hexdigest()


# ------------------------------------------------------------- cache files
#
# Layout (little-endian):
#   b"DSPF"  u32 version  u32 n_blocks
#   per block:
#     32 bytes  sha256 content key (raw digest)
#     u32 K  u32 Fr  u32 N  u32 Fi
#     f32[K*Fr] region features     f32[K*2] region (x, y)
#     u8[K]     erosion fallback flags
#     f32[N*Fi] interface features  f32[N*2] interface (x, y)

CACHE_MAGIC = b"DSPF"
CACHE_VERSION = 1


class CacheFormatError(ValueError):
    pass


@dataclass
class CacheBlock:
    key: str
    region_features: np.ndarray
    region_positions: np.ndarray
    fallback: np.ndarray
    interface_features: np.ndarray
    interface_positions: np.ndarray

    @classmethod
    def from_table(cls, table: DescriptorTable, key: str) -> "CacheBlock":
        return cls(key, table.region_features, table.region_positions, table.fallback,
                   table.interface_features, table.interface_positions)


def write_cache(path: str | Path, blocks: list[CacheBlock]) -> None:
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC + struct.pack("<II", CACHE_VERSION, len(blocks)))
        for b in blocks:
            K, Fr = b.region_features.shape
            N, Fi = b.interface_features.shape
            fh.write(bytes.fromhex(b.key))
            fh.write(struct.pack("<IIII", K, Fr, N, Fi))
            for arr in (b.region_features, b.region_positions):
                fh.write(np.asarray(arr, dtype="<f4").tobytes())
            fh.write(np.asarray(b.fallback, dtype=np.uint8).tobytes())
            for arr in (b.interface_features, b.interface_positions):
                fh.write(np.asarray(arr, dtype="<f4").tobytes())


def read_cache(path: str | Path) -> list[CacheBlock]:
    data = Path(path).read_bytes()
    if data[:4] != CACHE_MAGIC:
        raise CacheFormatError(f"{path}: bad magic {data[:4]!r}")
    version, n = struct.unpack_from("<II", data, 4)
    if version != CACHE_VERSION:
        raise CacheFormatError(f"{path}: unsupported version {version}")
    pos = 12
    blocks = []

    def take(count, dtype, shape):
        nonlocal pos
        nbytes = count * np.dtype(dtype).itemsize
        if pos + nbytes > len(data):
            raise CacheFormatError(f"{path}: truncated")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos).reshape(shape)
        pos += nbytes
        return arr

    for _ in range(n):
        if pos + 48 > len(data):
            raise CacheFormatError(f"{path}: truncated")
        key = data[pos : pos + 32].hex()
        K, Fr, N, Fi = struct.unpack_from("<IIII", data, pos + 32)
        pos += 48
        rf = take(K * Fr, "<f4", (K, Fr)).astype(np.float64)
        rp = take(K * 2, "<f4", (K, 2)).astype(np.float64)
        fb = take(K, np.uint8, (K,)).astype(bool)
        inf = take(N * Fi, "<f4", (N, Fi)).astype(np.float64)
        ip = take(N * 2, "<f4", (N, 2)).astype(np.float64)
        blocks.append(CacheBlock(key, rf, rp, fb, inf, ip))
    if pos != len(data):
        raise CacheFormatError(f"{path}: {len(data) - pos} trailing bytes")
    return blocks


def table_from_block(decomp: Decomposition, config: FeatureConfig, block: CacheBlock) -> DescriptorTable:
    if len(block.region_features) != decomp.K:
        raise CacheFormatError("cache block does not match decomposition")
    return DescriptorTable(decomp, config, block.region_features, block.region_positions,
                           block.fallback, block.interface_features, block.interface_positions)


def cached_descriptors(decomp: Decomposition, config: FeatureConfig, cache_dir: str | Path | None) -> DescriptorTable:
    """:func:`compute_descriptors` with an optional on-disk DSPF cache."""
    if cache_dir is None:
        return compute_descriptors(decomp, config)
    key = content_key(decomp.image, decomp.labels, config)
    path = Path(cache_dir) / f"{key}.dspf"
    if path.exists():
        return table_from_block(decomp, config, read_cache(path)[0])
    table = compute_descriptors(decomp, config)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    write_cache(tmp, [CacheBlock.from_table(table, key)])
    tmp.replace(path)
    return table
