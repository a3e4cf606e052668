"""Command-line entry point: ``dspm <subcommand> ...``.

Exit codes: 0 success, 2 usage, 3 missing file, 4 malformed input file,
5 parameter out of range.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import decomp as dc
from .dsp import ScaleSet
from .features import CacheBlock, CacheFormatError, FeatureConfig, REGION_FEATURE_KINDS, cached_descriptors, content_key, write_cache
from .label import GroundTruth, decide_labels, evaluate, fuse_labels, read_class_map, write_class_map
from .match import (MatchFormatError, SearchConfig, best_of_runs, dspm_search, knn_collect, match_exhaustive,
                    read_matches_csv, write_matches_csv)

EXIT_MISSING = 3
EXIT_FORMAT = 4
EXIT_RANGE = 5

# defaults of every tunable option; a --config TOML file may override them
DEFAULTS = dict(
    radius=50.0, alpha=0.5, beta=1, iters=5, runs=50, seed=0, feature="cumulative-rgb-hist-9",
    region_mode="symmetric", scales=None, rescale=True, per_scale=False, exhaustive=False, threads=1,
    window=9, bins=9, min_spacing=4, k=None, cache_dir=None,
)


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _missing(path) -> CliError:
    return CliError(EXIT_MISSING, f"no such file: {path}")


def _exists(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise _missing(p)
    return p


# ------------------------------------------------------------------ inputs


class LibraryEntry:
    def __init__(self, image: Path, labels: Path, gt: Path | None):
        self.image, self.labels, self.gt = image, labels, gt


def read_library_list(path) -> list[LibraryEntry]:
    """One entry per line: ``image labels [ground_truth]``; ``#`` starts a comment.

    Relative paths are resolved against the list file's directory.
    """
    path = _exists(path)
    base = path.parent
    out = []
    for n, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise CliError(EXIT_FORMAT, f"{path}:{n}: expected 'image labels [gt]'")
        ps = [base / p for p in parts]
        out.append(LibraryEntry(ps[0], ps[1], ps[2] if len(ps) == 3 else None))
    if not out:
        raise CliError(EXIT_FORMAT, f"{path}: empty library list")
    return out


def _load(image_path, labels_path) -> dc.Decomposition:
    _exists(image_path)
    _exists(labels_path)
    try:
        return dc.load_decomposition(labels_path, image_path)
    except dc.DecompositionError as e:
        raise CliError(EXIT_FORMAT, str(e)) from None
    except OSError as e:
        raise CliError(EXIT_FORMAT, f"cannot read image: {e}") from None


def _gt(path, n_classes=None) -> GroundTruth:
    _exists(path)
    try:
        return read_class_map(path, n_classes)
    except (ValueError, OSError) as e:
        raise CliError(EXIT_FORMAT, f"{path}: {e}") from None


def _feature_config(a) -> FeatureConfig:
    try:
        return FeatureConfig(beta=a.beta, region_feature_kind=a.feature, interface_window=a.window,
                             hog_bins=a.bins, interface_min_spacing=a.min_spacing)
    except ValueError as e:
        raise CliError(EXIT_RANGE, str(e)) from None


def _scales(a) -> ScaleSet:
    radii = (a.radius,)
    if a.scales:
        items = a.scales if isinstance(a.scales, list) else str(a.scales).split(",")
        try:
            radii = tuple(float(s) for s in items)
        except ValueError:
            raise CliError(EXIT_RANGE, f"bad --scales {a.scales!r}") from None
    try:
        return ScaleSet(a.radius, radii)
    except ValueError as e:
        raise CliError(EXIT_RANGE, str(e)) from None


def _search_config(a) -> SearchConfig:
    try:
        return SearchConfig(iterations=a.iters, runs=a.runs, seed=a.seed, scales=_scales(a), alpha=a.alpha,
                            region_mode=a.region_mode, rescale=a.rescale, joint_scales=not a.per_scale,
                            threads=a.threads)
    except ValueError as e:
        raise CliError(EXIT_RANGE, str(e)) from None


def _library(a, fc):
    entries = read_library_list(a.library)
    decomps = [_load(e.image, e.labels) for e in entries]
    return entries, decomps, [cached_descriptors(d, fc, a.cache_dir) for d in decomps]


def _run_search(a):
    fc = _feature_config(a)
    cfg = _search_config(a)
    q = _load(a.query_image, a.query_labels)
    entries, decomps, lib = _library(a, fc)
    qt = cached_descriptors(q, fc, a.cache_dir)
    recs = match_exhaustive(qt, lib, cfg) if a.exhaustive else dspm_search(qt, lib, cfg)
    return q, entries, decomps, recs


# ------------------------------------------------------------------ commands


def cmd_decompose(a):
    img_path = _exists(a.image)
    if a.k < 1:
        raise CliError(EXIT_RANGE, "-k must be >= 1")
    try:
        img = dc.read_image(img_path)
    except OSError as e:
        raise CliError(EXIT_FORMAT, f"cannot read image: {e}") from None
    try:
        d = dc.generate_slic(img, a.k, compactness=a.compactness, seed=a.seed)
    except ValueError as e:
        raise CliError(EXIT_RANGE, str(e)) from None
    dc.save_decomposition(d, a.output)
    print(f"{a.output}: {d.K} superpixels")


def cmd_features(a):
    d = _load(a.image, a.labels)
    fc = _feature_config(a)
    t = cached_descriptors(d, fc, a.cache_dir)
    write_cache(a.output, [CacheBlock.from_table(t, content_key(d.image, d.labels, fc))])
    print(f"{a.output}: {t.K} regions, {t.n_interfaces} interfaces")


def cmd_match(a):
    _, _, _, recs = _run_search(a)
    write_matches_csv(a.output, recs)
    print(f"{a.output}: {len(recs)} matches")


def _fused_prediction(a, q, entries, decomps, recs):
    gts = []
    for e in entries:
        if e.gt is None:
            raise CliError(EXIT_FORMAT, f"library entry {e.image} has no ground truth")
        gts.append(_gt(e.gt))
    n_classes = max(g.n_classes for g in gts)
    names = max((g.names for g in gts), key=len)
    lib_classes = [g.majority(d) if g.class_map.shape == d.labels.shape else None for g, d in zip(gts, decomps)]
    if any(c is None for c in lib_classes):
        raise CliError(EXIT_FORMAT, "ground truth and label map sizes differ")
    if a.k is not None:
        if a.k < 1:
            raise CliError(EXIT_RANGE, "-k must be >= 1")
        recs = [m for v in knn_collect(recs, a.k).values() for m in v]
    try:
        scores = fuse_labels(recs, lib_classes, n_classes, q.K)
    except ValueError as e:
        raise CliError(EXIT_FORMAT, str(e)) from None
    return decide_labels(scores), names


def cmd_label(a):
    if a.matches:
        q = _load(a.query_image, a.query_labels)
        entries = read_library_list(a.library)
        decomps = [_load(e.image, e.labels) for e in entries]
        try:
            recs = read_matches_csv(_exists(a.matches))
        except MatchFormatError as e:
            raise CliError(EXIT_FORMAT, str(e)) from None
    else:
        q, entries, decomps, recs = _run_search(a)
    pred, names = _fused_prediction(a, q, entries, decomps, recs)
    write_class_map(a.output, pred[q.labels], names)
    print(f"{a.output}: {q.K} superpixels labeled")


def _pred_per_superpixel(pred_map: np.ndarray, d: dc.Decomposition, n: int) -> np.ndarray:
    return GroundTruth(pred_map, n).majority(d)


def cmd_eval(a):
    d = dc.Decomposition.from_labels(_read_labels(a.labels))
    gt, pred = _gt(a.gt), _gt(a.pred)
    if pred.class_map.shape != d.labels.shape or gt.class_map.shape != d.labels.shape:
        raise CliError(EXIT_FORMAT, "prediction, ground truth and label map sizes differ")
    n = max(gt.n_classes, pred.n_classes)
    res = evaluate(_pred_per_superpixel(pred.class_map, d, n), GroundTruth(gt.class_map, n), d)
    print(json.dumps(res))


def _read_labels(path):
    _exists(path)
    try:
        return dc.read_label_map(path)
    except (dc.DecompositionError, OSError) as e:
        raise CliError(EXIT_FORMAT, str(e)) from None


def cmd_viz(a):
    from .viz import displacement_map, label_overlay

    if a.kind == "flow":
        q = _load(a.query_image, a.query_labels)
        entries = read_library_list(a.library)
        decomps = [_load(e.image, e.labels) for e in entries]
        try:
            recs = read_matches_csv(_exists(a.matches))
        except MatchFormatError as e:
            raise CliError(EXIT_FORMAT, str(e)) from None
        best = best_of_runs(recs)
        disp = np.zeros((q.K, 2))
        for i, m in best.items():
            if not (0 <= i < q.K and 0 <= m.lib_image < len(decomps) and 0 <= m.lib_superpixel < decomps[m.lib_image].K):
                raise CliError(EXIT_FORMAT, f"match {m} out of range")
            disp[i] = decomps[m.lib_image].barycenters[m.lib_superpixel] - q.barycenters[i]
        dc.write_image(a.output, displacement_map(q, disp, a.max_norm))
        print(f"{a.output}: mean displacement {np.linalg.norm(disp, axis=1).mean():.3f}")
    else:
        img = dc.read_image(_exists(a.image))
        pred = _gt(a.pred)
        text = None
        d = None
        if a.labels:
            d = dc.Decomposition.from_labels(_read_labels(a.labels))
        if a.gt:
            gt = _gt(a.gt)
            n = max(gt.n_classes, pred.n_classes)
            if d is not None:
                acc = evaluate(_pred_per_superpixel(pred.class_map, d, n), GroundTruth(gt.class_map, n), d)
                text = f"sp {acc['superpixel_accuracy']:.3f} px {acc['pixel_accuracy']:.3f}"
            else:
                text = f"px {np.mean(pred.class_map == gt.class_map):.3f}"
        dc.write_image(a.output, label_overlay(img, pred.class_map, text, boundaries=d))
        print(f"{a.output}: written")


def cmd_synth(a):
    from . import synth

    out = Path(a.output)
    out.mkdir(parents=True, exist_ok=True)
    if a.kind == "textures":
        p = synth.gen_textures(size=a.size, refine=a.refine, seed=a.seed)
        for tag, img, d, tex in (("a", p.image_a, p.decomp_a, p.texture_a), ("b", p.image_b, p.decomp_b, p.texture_b)):
            dc.write_image(out / f"texture_{tag}.png", synth.add_noise(img, a.noise, a.seed * 2 + (tag == "b")))
            dc.save_decomposition(d, out / f"texture_{tag}_labels.png")
            np.savetxt(out / f"texture_{tag}_ids.txt", tex, fmt="%d")
    else:
        from .experiments import scene_items

        items = scene_items(a.n, a.seed, a.size, a.k)
        if a.kind == "scaled":
            items = synth.gen_scaled_library(items, seed=a.seed)
        lines = []
        for i, it in enumerate(items):
            stem = f"scene_{a.seed + i:04d}"
            dc.write_image(out / f"{stem}.png", it.image)
            dc.save_decomposition(it.decomp, out / f"{stem}_labels.png")
            write_class_map(out / f"{stem}_gt.png", it.gt.class_map, it.gt.names)
            lines.append(f"{stem}.png {stem}_labels.png {stem}_gt.png")
        (out / "library.txt").write_text("\n".join(lines) + "\n")
    print(f"{out}: written")


def cmd_sweep(a):
    from . import experiments as ex

    base = SearchConfig(iterations=a.iters, runs=a.runs, seed=a.seed, threads=a.threads)
    with open(a.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if a.kind in ("radius", "alpha"):
            suite = ex.double_decompositions(a.images.split(","), size=a.size)
            if a.kind == "radius":
                w.writerow(["radius", "method", "displacement"])
                for r, name, v in ex.radius_sweep(suite, base=base, cache_dir=a.cache_dir):
                    w.writerow([f"{r:g}", name, f"{v:.4f}"])
            else:
                w.writerow(["alpha", "displacement"])
                for al, v in ex.alpha_sweep(suite, base=base, cache_dir=a.cache_dir):
                    w.writerow([f"{al:g}", f"{v:.4f}"])
        else:
            bench = ex.scaled_benchmark(a.n_train, a.n_test, cache_dir=a.cache_dir)
            w.writerow(["scales", "rescale", "superpixel_accuracy", "pixel_accuracy"])
            for scales, rescale, sp, px in ex.scale_grid(bench, base=base):
                w.writerow(["+".join(f"{s:g}" for s in scales), int(rescale), f"{sp:.4f}", f"{px:.4f}"])
    print(f"{a.output}: written")


# ------------------------------------------------------------------ parser


def _search_options(p: argparse.ArgumentParser, library=True):
    p.add_argument("--query-image", required=True)
    p.add_argument("--query-labels", required=True)
    if library:
        p.add_argument("--library", required=True, help="list file: 'image labels [gt]' per line")
    p.add_argument("--radius", type=float, help="superpatch radius of the query (default 50)")
    p.add_argument("--alpha", type=float, help="region/interface trade-off (default 0.5)")
    p.add_argument("--region-mode", choices=("symmetric", "projected", "quadratic"))
    p.add_argument("--iters", type=int, help="propagation passes per run (default 5)")
    p.add_argument("--runs", type=int, help="independent runs (default 50)")
    p.add_argument("--seed", type=int)
    p.add_argument("--scales", help="comma-separated library radii (default: --radius)")
    p.add_argument("--rescale", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--per-scale", action="store_true", default=None, help="separate runs per library radius")
    p.add_argument("--exhaustive", action="store_true", default=None, help="global minimum instead of DSPM")
    p.add_argument("--threads", type=int)
    _feature_options(p)


def _feature_options(p):
    p.add_argument("--beta", type=int, help="erosion offset in pixels (default 1)")
    p.add_argument("--feature", choices=REGION_FEATURE_KINDS)
    p.add_argument("--window", type=int, help="interface HoG window (default 9)")
    p.add_argument("--bins", type=int, help="interface HoG bins (default 9)")
    p.add_argument("--min-spacing", type=int, help="interface spacing (default 4)")
    p.add_argument("--cache-dir", help="descriptor cache directory")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dspm", description="Dual superpatch matching and label transfer.")
    p.add_argument("--config", help="TOML file of option defaults")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("decompose", help="SLIC superpixels -> 16-bit label map")
    s.add_argument("image")
    s.add_argument("-k", type=int, default=250)
    s.add_argument("--compactness", type=float, default=10.0)
    s.add_argument("--seed", type=int)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("features", help="descriptor table -> DSPF cache file")
    s.add_argument("image")
    s.add_argument("labels")
    _feature_options(s)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("match", help="query vs library -> matches.csv")
    _search_options(s)
    s.add_argument("-o", "--output", default="matches.csv")
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("label", help="fuse library classes -> labels.png + .json")
    _search_options(s)
    s.add_argument("--matches", help="reuse a matches.csv instead of searching")
    s.add_argument("-k", type=int, help="use runs 0..k-1 only")
    s.add_argument("-o", "--output", default="labels.png")
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("eval", help="accuracy of a predicted class map")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--labels", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("viz", help="displacement map or label overlay")
    vs = s.add_subparsers(dest="kind", required=True)
    f = vs.add_parser("flow")
    f.add_argument("--query-image", required=True)
    f.add_argument("--query-labels", required=True)
    f.add_argument("--library", required=True)
    f.add_argument("--matches", required=True)
    f.add_argument("--max-norm", type=float)
    f.add_argument("-o", "--output", required=True)
    o = vs.add_parser("overlay")
    o.add_argument("--image", required=True)
    o.add_argument("--pred", required=True)
    o.add_argument("--gt")
    o.add_argument("--labels")
    o.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_viz)

    s = sub.add_parser("synth", help="write synthetic benchmark files")
    s.add_argument("kind", choices=("textures", "scenes", "scaled"))
    s.add_argument("-o", "--output", required=True)
    s.add_argument("-n", type=int, default=20)
    s.add_argument("--size", type=int)
    s.add_argument("-k", type=int, default=100)
    s.add_argument("--refine", type=int, default=1)
    s.add_argument("--noise", type=float, default=0.0, help="noise variance (textures)")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("sweep", help="CSV tables: radius / alpha sweeps, scale grid")
    s.add_argument("kind", choices=("radius", "alpha", "scales"))
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--images", default=",".join(("astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry")))
    s.add_argument("--size", type=int, default=250)
    s.add_argument("--n-train", type=int, default=50)
    s.add_argument("--n-test", type=int, default=20)
    s.add_argument("--iters", type=int)
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--cache-dir")
    s.set_defaults(func=cmd_sweep)
    return p


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return _is_int(v) or isinstance(v, float)


_CONFIG_TYPES = {
    **{k: _is_num for k in ("radius", "alpha")},
    **{k: _is_int for k in ("beta", "iters", "runs", "seed", "threads", "window", "bins", "min_spacing", "k")},
    **{k: lambda v: isinstance(v, bool) for k in ("rescale", "per_scale", "exhaustive")},
    **{k: lambda v: isinstance(v, str) for k in ("feature", "region_mode", "cache_dir")},
    "scales": lambda v: isinstance(v, str) or (isinstance(v, list) and all(map(_is_num, v))),
}


def _load_config(path) -> dict:
    try:
        import tomllib
    except ImportError:  # Python < 3.11
        import tomli as tomllib

    p = _exists(path)
    try:
        cfg = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as e:
        raise CliError(EXIT_FORMAT, f"{p}: {e}") from None
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise CliError(EXIT_FORMAT, f"{p}: unknown keys {sorted(unknown)}")
    for k, v in cfg.items():
        if not _CONFIG_TYPES[k](v):
            raise CliError(EXIT_FORMAT, f"{p}: bad value for {k}: {v!r}")
    return cfg


def _resolve(a: argparse.Namespace) -> argparse.Namespace:
    """Flags > config file > defaults."""
    conf = _load_config(a.config) if a.config else {}
    for k, v in DEFAULTS.items():
        if getattr(a, k, "absent") is None:
            setattr(a, k, conf.get(k, v))
    if a.command == "synth" and a.size is None:
        a.size = 256 if a.kind == "textures" else 160
    return a


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        a = _resolve(a)
        a.func(a)
    except CliError as e:
        print(f"dspm: error: {e}", file=sys.stderr)
        return e.code
    except CacheFormatError as e:
        print(f"dspm: error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    return 0


if __name__ == "__main__":
    sys.exit(main())
