"""Benchmark protocols shared by the tests, the demos and the ``sweep`` command.

* matching robustness: every superpixel of one decomposition is matched into
  a second decomposition of the same image; the error is the barycenter
  displacement of the match;
* texture matching on the oriented-stripe mosaics;
* label transfer from a labeled library, optionally rescaled.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .decomp import Decomposition, generate_slic
from .dsp import ScaleSet
from .features import DescriptorTable, FeatureConfig, cached_descriptors, compute_descriptors
from .label import LabelScores, decide_labels, evaluate, fuse_labels
from .match import (MatchRecord, SearchConfig, best_of_runs, build_bank, dspm_search, match_displacement,
                    match_exhaustive)
from .synth import LibraryItem, TexturePair, add_noise, gen_scaled_library, gen_scene

SUITE_IMAGES = ("astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry")
TABLE2_RADII = (25.0, 33.0, 50.0, 75.0, 100.0)


def suite_image(name: str, size: int = 250) -> np.ndarray:
    """A scikit-image sample picture resized to ``size x size`` RGB uint8."""
    from skimage import data, transform

    img = getattr(data, name)()
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    img = transform.resize(img[..., :3], (size, size), anti_aliasing=True, preserve_range=True)
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class DoubleDecomposition:
    name: str
    image: np.ndarray
    a: Decomposition
    b: Decomposition


def double_decompositions(
    names: Sequence[str] = SUITE_IMAGES, size: int = 250, k: int = 250, seeds: tuple[int, int] = (0, 1)
) -> list[DoubleDecomposition]:
    out = []
    for n in names:
        img = suite_image(n, size)
        out.append(DoubleDecomposition(n, img, generate_slic(img, k, seed=seeds[0]), generate_slic(img, k, seed=seeds[1])))
    return out


# ------------------------------------------------------------------ matching


def _tables(decomps: Iterable[Decomposition], feature: FeatureConfig, cache_dir) -> list[DescriptorTable]:
    return [cached_descriptors(d, feature, cache_dir) for d in decomps]


def pair_displacement(
    ta: DescriptorTable, tb: DescriptorTable, cfg: SearchConfig, exhaustive: bool = True
) -> np.ndarray:
    """Displacement norms of the matches A -> B followed by B -> A.

    With ``exhaustive=False`` the best-of-runs DSPM match is used.
    """
    out = []
    for q, lib in ((ta, tb), (tb, ta)):
        if exhaustive:
            recs = match_exhaustive(q, [lib], cfg)
        else:
            best = best_of_runs(dspm_search(q, [lib], cfg))
            recs = [best[i] for i in range(q.K)]
        out.append(np.linalg.norm(match_displacement(recs, q, [lib]), axis=1))
    return np.concatenate(out)


def suite_displacement(
    suite: Sequence[DoubleDecomposition],
    feature: FeatureConfig,
    cfg: SearchConfig,
    exhaustive: bool = True,
    cache_dir: str | Path | None = None,
) -> tuple[float, list[float]]:
    """Mean matching displacement averaged over images, and the per-image values."""
    per = []
    for dd in suite:
        ta, tb = _tables((dd.a, dd.b), feature, cache_dir)
        per.append(float(pair_displacement(ta, tb, cfg, exhaustive).mean()))
    return float(np.mean(per)), per


# Configurations adding one contribution at a time:
# (name, feature beta, alpha, region mode)
CONTRIBUTIONS = (
    ("projected, beta=0", 0, 1.0, "projected"),
    ("symmetric, beta=0", 0, 1.0, "symmetric"),
    ("symmetric, beta=1", 1, 1.0, "symmetric"),
    ("symmetric, beta=1, interfaces", 1, 0.5, "symmetric"),
)
SPM_MODE = ("quadratic, beta=0", 0, 1.0, "quadratic")


def contribution_configs(radius: float = 50.0, base: SearchConfig = SearchConfig()):
    for name, beta, alpha, mode in CONTRIBUTIONS:
        cfg = replace(base, alpha=alpha, region_mode=mode, scales=ScaleSet(radius, (radius,)))
        yield name, FeatureConfig(beta=beta), cfg


# ------------------------------------------------------------------ textures


def texture_accuracy(pair: TexturePair, beta: int, variance: float, noise_seed: int = 0) -> float:
    """Fraction of regions of A whose nearest region of B (HoG of the eroded
    interior, no neighborhood) carries the same texture."""
    fc = FeatureConfig(beta=beta, region_feature_kind="hog")
    ia = add_noise(pair.image_a, variance, 2 * noise_seed)
    ib = add_noise(pair.image_b, variance, 2 * noise_seed + 1)
    ta = compute_descriptors(pair.decomp_a, fc, ia)
    tb = compute_descriptors(pair.decomp_b, fc, ib)
    cfg = SearchConfig(alpha=1.0, region_mode="projected", scales=ScaleSet(0.0, (0.0,)))
    recs = match_exhaustive(ta, [tb], cfg)
    hit = [pair.texture_b[m.lib_superpixel] == pair.texture_a[m.src_superpixel] for m in recs]
    return float(np.mean(hit))


# ------------------------------------------------------------------ labeling


def scene_items(n: int, start: int = 0, size: int = 160, k: int = 100) -> list[LibraryItem]:
    """Labeled synthetic scenes ``start .. start + n - 1`` with SLIC decompositions."""
    items = []
    for s in range(start, start + n):
        img, gt = gen_scene(size, s)
        items.append(LibraryItem(img, generate_slic(img, k, seed=s), gt))
    return items


@dataclass(eq=False)
class LabelingBenchmark:
    """Train library and test queries sharing one feature configuration."""

    train: list[LibraryItem]
    test: list[LibraryItem]
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    cache_dir: str | Path | None = None

    def __post_init__(self):
        self.lib_tables = _tables((it.decomp for it in self.train), self.feature, self.cache_dir)
        self.test_tables = _tables((it.decomp for it in self.test), self.feature, self.cache_dir)
        self.lib_classes = [it.gt.majority(it.decomp) for it in self.train]
        self.n_classes = self.train[0].gt.n_classes

    def search(self, cfg: SearchConfig, exhaustive: bool = False) -> list[list[MatchRecord]]:
        """Match records per test image; query ``q`` uses seed ``cfg.seed + q * cfg.runs``."""
        out = []
        for q, t in enumerate(self.test_tables):
            bank = build_bank(t, self.lib_tables, (cfg.scales.source_radius, *cfg.scales.library_radii))
            if exhaustive:
                out.append(match_exhaustive(t, self.lib_tables, cfg, bank))
            else:
                out.append(dspm_search(t, self.lib_tables, replace(cfg, seed=cfg.seed + q * cfg.runs), bank))
        return out

    def scores(self, records: Sequence[list[MatchRecord]], k: int | None = None) -> list[LabelScores]:
        out = []
        for recs, t in zip(records, self.test_tables):
            if k is not None:
                recs = [m for m in recs if m.run < k]
            out.append(fuse_labels(recs, self.lib_classes, self.n_classes, t.K))
        return out

    def accuracy(self, scores: Sequence[LabelScores], scales: Sequence[float] | None = None) -> dict[str, float]:
        """Mean superpixel and pixel accuracy over the test images."""
        sp, px = [], []
        for sc, it in zip(scores, self.test):
            r = evaluate(decide_labels(sc, scales), it.gt, it.decomp)
            sp.append(r["superpixel_accuracy"])
            px.append(r["pixel_accuracy"])
        return {"superpixel_accuracy": float(np.mean(sp)), "pixel_accuracy": float(np.mean(px))}


def scaled_benchmark(
    n_train: int, n_test: int, factors=(1 / 2, 2 / 3, 1.5, 2.0), seed: int = 0, **kw
) -> LabelingBenchmark:
    """Scene benchmark whose library images are resampled by random ``factors``."""
    train = gen_scaled_library(scene_items(n_train, 0), factors, seed)
    return LabelingBenchmark(train, scene_items(n_test, n_train), **kw)


# ------------------------------------------------------------------ sweeps


def radius_sweep(suite, radii=(10, 20, 30, 40, 50, 60, 70), base: SearchConfig = SearchConfig(), cache_dir=None):
    """Rows ``(radius, method, displacement)`` for the SPM mode and each contribution."""
    rows = []
    for r in radii:
        r = float(r)
        named = [(SPM_MODE[0], FeatureConfig(beta=0), replace(base, alpha=1.0, region_mode="quadratic", scales=ScaleSet(r, (r,))))]
        named += list(contribution_configs(r, base))
        for name, fc, cfg in named:
            rows.append((r, name, suite_displacement(suite, fc, cfg, cache_dir=cache_dir)[0]))
    return rows


def alpha_sweep(suite, alphas=tuple(np.round(np.linspace(0, 1, 11), 2)), radius: float = 50.0,
                base: SearchConfig = SearchConfig(), cache_dir=None):
    """Rows ``(alpha, displacement)`` with beta=1 and the symmetric region term."""
    rows = []
    for a in alphas:
        cfg = replace(base, alpha=float(a), region_mode="symmetric", scales=ScaleSet(radius, (radius,)))
        rows.append((float(a), suite_displacement(suite, FeatureConfig(beta=1), cfg, cache_dir=cache_dir)[0]))
    return rows


def scale_grid(bench: LabelingBenchmark, radii=TABLE2_RADII, source_radius: float = 50.0,
               base: SearchConfig = SearchConfig(), fusions=((75.0, 100.0), (50.0, 75.0, 100.0), TABLE2_RADII)):
    """Rows ``(scales, rescale, superpixel_accuracy, pixel_accuracy)``.

    Each radius is searched on its own; fused rows take the max over the
    listed radii.
    """
    rows = []
    for rescale in (False, True):
        cfg = replace(base, scales=ScaleSet(source_radius, tuple(radii)), joint_scales=False, rescale=rescale)
        scores = [
            fuse_labels(recs, bench.lib_classes, bench.n_classes, t.K, scales=radii)
            for recs, t in zip(bench.search(cfg), bench.test_tables)
        ]
        for r in radii:
            acc = bench.accuracy(scores, [r])
            rows.append(((r,), rescale, acc["superpixel_accuracy"], acc["pixel_accuracy"]))
        for fu in fusions:
            acc = bench.accuracy(scores, fu)
            rows.append((tuple(fu), rescale, acc["superpixel_accuracy"], acc["pixel_accuracy"]))
    return rows
