"""Correspondence search between a query image and a library of images.

Two searches share one compiled distance path:

* :func:`match_exhaustive` scans every library superpixel (the oracle);
* :func:`dspm_search` runs independent randomized propagation/random-search
  passes, one approximate field per run.

Run ``j`` draws its random numbers from ``numpy.random.Generator(PCG64(seed + j))``
so a fixed seed gives byte-identical output regardless of thread count.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from .dist import DistanceConfig, RegionMode
from .dsp import ScaleSet, neighborhoods
from .features import DescriptorTable


class MatchRecord(NamedTuple):
    src_superpixel: int
    lib_image: int
    lib_superpixel: int
    scale: float
    distance: float
    run: int = 0


@dataclass(frozen=True)
class SearchConfig:
    iterations: int = 5
    runs: int = 50
    seed: int = 0
    scales: ScaleSet = field(default_factory=ScaleSet)
    alpha: float = 0.5
    region_mode: RegionMode = "symmetric"
    rescale: bool = True
    sigma1: float | None = None
    # False: one independent search per library radius (strict per-scale runs)
    joint_scales: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.iterations < 1 or self.runs < 1:
            raise ValueError("iterations and runs must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        self.distance  # validates alpha / mode

    @property
    def distance(self) -> DistanceConfig:
        return DistanceConfig(self.alpha, self.sigma1, self.region_mode, self.rescale)


@dataclass(frozen=True, eq=False)
class SearchBank:
    """Query + library tables flattened for the compiled kernels.

    Image 0 is the query; library image ``i`` is bank image ``i + 1``.
    """

    arrays: K.Bank
    query: DescriptorTable
    library: tuple[DescriptorTable, ...]
    radii: tuple[float, ...]

    def scale_index(self, r: float) -> int:
        return self.radii.index(float(r))

    @property
    def lib_imgs(self) -> np.ndarray:
        return np.arange(1, len(self.library) + 1, dtype=np.int64)


def build_bank(query: DescriptorTable, library: Sequence[DescriptorTable], radii: Iterable[float]) -> SearchBank:
    if len(library) == 0:
        raise ValueError("empty library")
    radii = tuple(dict.fromkeys(float(r) for r in radii))
    tables = [query, *library]
    fr = {t.region_features.shape[1] for t in tables}
    fi = {t.interface_features.shape[1] for t in tables}
    if len(fr) != 1 or len(fi) != 1:
        raise ValueError("feature lengths differ across images; use one FeatureConfig")

    sizes = np.array([t.decomp.pixel_count for t in tables])
    ks = np.array([t.K for t in tables])
    ns = np.array([t.n_interfaces for t in tables])
    sp_off = np.concatenate([[0], np.cumsum(ks)]).astype(np.int64)
    if_off = np.concatenate([[0], np.cumsum(ns)]).astype(np.int64)
    ktot = int(sp_off[-1])

    r_indptr = np.zeros((len(radii), ktot + 1), dtype=np.int64)
    i_indptr = np.zeros((len(radii), ktot + 1), dtype=np.int64)
    r_chunks, i_chunks = [], []
    r_total = i_total = 0
    for s, r in enumerate(radii):
        for n, t in enumerate(tables):
            nb = neighborhoods(t, r)
            a, b = sp_off[n], sp_off[n + 1]
            r_indptr[s, a + 1 : b + 1] = r_total + nb.region_indptr[1:]
            i_indptr[s, a + 1 : b + 1] = i_total + nb.interface_indptr[1:]
            r_indptr[s, a] = r_total
            i_indptr[s, a] = i_total
            r_chunks.append(nb.region_indices.astype(np.int64) + a)
            i_chunks.append(nb.interface_indices.astype(np.int64) + if_off[n])
            r_total += len(nb.region_indices)
            i_total += len(nb.interface_indices)

    arrays = K.Bank(
        labels=np.concatenate([t.decomp.labels.ravel() for t in tables]).astype(np.int32),
        lab_off=np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64),
        width=np.array([t.decomp.width for t in tables], dtype=np.int64),
        height=np.array([t.decomp.height for t in tables], dtype=np.int64),
        sp_off=sp_off,
        sp_img=np.repeat(np.arange(len(tables)), ks).astype(np.int64),
        feat_r=np.ascontiguousarray(np.concatenate([t.region_features for t in tables])),
        bary=np.concatenate([t.decomp.barycenters for t in tables]),
        anch=np.concatenate([t.decomp.anchors for t in tables]),
        xr=np.concatenate([t.region_positions for t in tables]),
        if_off=if_off,
        feat_i=np.ascontiguousarray(np.concatenate([t.interface_features for t in tables])),
        ipos=np.concatenate([t.interface_positions for t in tables]).reshape(-1, 2),
        radii=np.array(radii, dtype=np.float64),
        r_indptr=r_indptr,
        r_indices=np.concatenate(r_chunks) if r_chunks else np.zeros(0, np.int64),
        i_indptr=i_indptr,
        i_indices=np.concatenate(i_chunks) if i_chunks else np.zeros(0, np.int64),
        diag=np.array([t.decomp.diagonal for t in tables]),
        spacing=np.array([t.decomp.spacing for t in tables]),
    )
    return SearchBank(arrays, query, tuple(library), radii)


def _bank_for(query, library, cfg: SearchConfig) -> SearchBank:
    return build_bank(query, library, (cfg.scales.source_radius, *cfg.scales.library_radii))


def _sigma1(query: DescriptorTable, cfg: SearchConfig) -> float:
    return cfg.sigma1 if cfg.sigma1 is not None else query.decomp.sigma1


def pair_distance(bank: SearchBank, src: int, lib_image: int, lib_sp: int, scale: float, cfg: SearchConfig) -> float:
    """Dual distance between query superpixel ``src`` and one library superpixel."""
    B = bank.arrays
    return K.bank_dual(
        B, int(B.sp_off[0] + src), bank.scale_index(cfg.scales.source_radius),
        int(B.sp_off[lib_image + 1] + lib_sp), bank.scale_index(scale),
        cfg.alpha, cfg.distance.mode_code, cfg.rescale, _sigma1(bank.query, cfg),
    )


def match_exhaustive(
    query: DescriptorTable,
    library: Sequence[DescriptorTable],
    cfg: SearchConfig = SearchConfig(),
    bank: SearchBank | None = None,
) -> list[MatchRecord]:
    """Global minimum of the dual distance for each query superpixel and scale.

    Ties resolve to the lowest ``(lib_image, lib_superpixel)``.  Records are
    ordered by ``(src_superpixel, scale)`` and carry ``run=0``.
    """
    bank = bank or _bank_for(query, library, cfg)
    B = bank.arrays
    q_scale = bank.scale_index(cfg.scales.source_radius)
    src = np.arange(query.K, dtype=np.int64)
    sigma1 = _sigma1(query, cfg)
    per_scale = []
    for r in cfg.scales.library_radii:
        out_img = np.empty(query.K, np.int64)
        out_sp = np.empty(query.K, np.int64)
        out_d = np.empty(query.K, np.float64)
        chunks = np.array_split(src, cfg.threads)

        def work(c, out_img=out_img, out_sp=out_sp, out_d=out_d, r=r):
            if c.size == 0:
                return
            oi, os_, od = np.empty(c.size, np.int64), np.empty(c.size, np.int64), np.empty(c.size)
            K.exhaustive(B, 0, q_scale, c, bank.lib_imgs, bank.scale_index(r), cfg.alpha,
                         cfg.distance.mode_code, cfg.rescale, sigma1, oi, os_, od)
            out_img[c], out_sp[c], out_d[c] = oi, os_, od

        if cfg.threads == 1:
            work(src)
        else:
            with ThreadPoolExecutor(cfg.threads) as ex:
                list(ex.map(work, chunks))
        per_scale.append((r, out_img, out_sp, out_d))
    return [
        MatchRecord(i, int(oi[i]), int(os_[i]), r, float(od[i]), 0)
        for i in range(query.K)
        for r, oi, os_, od in per_scale
    ]


def raster_order(table: DescriptorTable) -> np.ndarray:
    """Superpixels sorted by barycenter, rows (y) first then x."""
    bary = table.decomp.barycenters
    return np.lexsort((bary[:, 0], bary[:, 1])).astype(np.int64)


def _max_steps(bank: SearchBank) -> int:
    B = bank.arrays
    ratio = B.diag[1:].max() / B.spacing[1:].min()
    return int(math.floor(math.log2(max(ratio, 1.0)))) + 1


def _run(bank: SearchBank, cfg: SearchConfig, lib_scales: np.ndarray, run: int, seed: int):
    B = bank.arrays
    q = bank.query
    k = q.K
    steps = _max_steps(bank)
    rng = np.random.Generator(np.random.PCG64(seed))
    rand_init = rng.random((k, 3))
    rand_search = rng.random((cfg.iterations, k, steps, 3))
    out_img = np.empty(k, np.int64)
    out_sp = np.empty(k, np.int64)
    out_sc = np.empty(k, np.int64)
    out_d = np.empty(k, np.float64)
    K.dspm_run(
        B, 0, bank.scale_index(cfg.scales.source_radius), bank.lib_imgs, lib_scales, cfg.iterations,
        raster_order(q), q.decomp.adjacency_indptr, q.decomp.adjacency_indices.astype(np.int64),
        rand_init, rand_search, cfg.alpha, cfg.distance.mode_code, cfg.rescale, _sigma1(q, cfg),
        out_img, out_sp, out_sc, out_d,
    )
    radii = B.radii[lib_scales]
    return [
        MatchRecord(i, int(out_img[i]), int(out_sp[i]), float(radii[out_sc[i]]), float(out_d[i]), run)
        for i in range(k)
    ]


def dspm_search(
    query: DescriptorTable,
    library: Sequence[DescriptorTable],
    cfg: SearchConfig = SearchConfig(),
    bank: SearchBank | None = None,
) -> list[MatchRecord]:
    """Randomized multi-run search; records sorted by ``(src, run, scale)``.

    With ``cfg.joint_scales`` each run searches all library radii at once and
    yields one record per source superpixel; otherwise every radius gets its
    own set of runs (same seeds).
    """
    bank = bank or _bank_for(query, library, cfg)
    all_scales = np.array([bank.scale_index(r) for r in cfg.scales.library_radii], dtype=np.int64)
    groups = [all_scales] if cfg.joint_scales else [all_scales[i : i + 1] for i in range(len(all_scales))]
    jobs = [(g, j) for g in groups for j in range(cfg.runs)]

    def work(job):
        g, j = job
        return _run(bank, cfg, g, j, cfg.seed + j)

    if cfg.threads == 1:
        results = [work(job) for job in jobs]
    else:
        with ThreadPoolExecutor(cfg.threads) as ex:
            results = list(ex.map(work, jobs))
    records = [r for res in results for r in res]
    records.sort(key=lambda m: (m.src_superpixel, m.run, m.scale))
    return records


def knn_collect(records: Iterable[MatchRecord], k: int) -> dict[int, list[MatchRecord]]:
    """The records of runs ``0..k-1`` grouped per source superpixel.

    Runs are independent samples, so duplicates across runs are kept.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    out: dict[int, list[MatchRecord]] = {}
    for m in records:
        if m.run < k:
            out.setdefault(m.src_superpixel, []).append(m)
    for v in out.values():
        v.sort(key=lambda m: (m.run, m.scale))
    return out


def best_of_runs(records: Iterable[MatchRecord]) -> dict[int, MatchRecord]:
    """Lowest-distance record per source superpixel (first run on ties)."""
    best: dict[int, MatchRecord] = {}
    for m in records:
        cur = best.get(m.src_superpixel)
        if cur is None or m.distance < cur.distance:
            best[m.src_superpixel] = m
    return best


def match_displacement(records: Iterable[MatchRecord], query: DescriptorTable, library: Sequence[DescriptorTable]) -> np.ndarray:
    """``(n, 2)`` barycenter displacement of each record, library minus query."""
    qb = query.decomp.barycenters
    return np.array(
        [library[m.lib_image].decomp.barycenters[m.lib_superpixel] - qb[m.src_superpixel] for m in records]
    ).reshape(-1, 2)


# ---------------------------------------------------------------- CSV I/O

CSV_HEADER = ["src_sp", "run", "lib_image", "lib_sp", "scale", "distance"]


def write_matches_csv(path: str | Path, records: Iterable[MatchRecord]) -> None:
    rows = sorted(records, key=lambda m: (m.src_superpixel, m.run, m.scale))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for m in rows:
            w.writerow([m.src_superpixel, m.run, m.lib_image, m.lib_superpixel, f"{m.scale:g}", f"{m.distance:.6f}"])


class MatchFormatError(ValueError):
    pass


def read_matches_csv(path: str | Path) -> list[MatchRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise MatchFormatError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        out = []
        for n, row in enumerate(reader, start=2):
            try:
                s, run, li, ls, sc, d = row
                out.append(MatchRecord(int(s), int(li), int(ls), float(sc), float(d), int(run)))
            except ValueError as e:
                raise MatchFormatError(f"{path}:{n}: {e}") from None
    return out
