"""Superpixel decompositions: validation, indexing, I/O and a seeded SLIC.

A :class:`Decomposition` wraps a dense label map (``labels[y, x]`` in
``0..K-1``) together with the per-superpixel quantities every other module
needs: barycenters in ``(x, y)`` pixel coordinates, 4-connected adjacency and
member pixel lists (flat row-major indices).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import sparse
from scipy.sparse.csgraph import connected_components


class DecompositionError(ValueError):
    """Raised when a label map violates the decomposition invariants."""


MAX_SUPERPIXELS = 65536


def _pixel_pairs(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of all horizontally and vertically adjacent pixel pairs."""
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return a, b


def _components(labels: np.ndarray) -> tuple[int, np.ndarray]:
    """4-connected components of equal-label pixels."""
    n = labels.size
    a, b = _pixel_pairs(labels)
    flat = labels.ravel()
    same = flat[a] == flat[b]
    graph = sparse.coo_matrix(
        (np.ones(int(same.sum()), dtype=np.int8), (a[same], b[same])), shape=(n, n)
    )
    n_comp, comp = connected_components(graph, directed=False)
    return n_comp, comp.reshape(labels.shape)


def enforce_connectivity(labels: np.ndarray, max_passes: int = 20) -> np.ndarray:
    """Merge every orphan component into the largest adjacent region.

    For each label, the largest 4-connected component is kept; all others are
    relabeled to the adjacent region with the most pixels (ties to the lowest
    label).  Repeats until each label is a single component.
    """
    labels = np.array(labels, dtype=np.int64, copy=True)
    for _ in range(max_passes):
        n_comp, comp = _components(labels)
        flat_comp = comp.ravel()
        flat_lab = labels.ravel()
        comp_size = np.bincount(flat_comp, minlength=n_comp)
        comp_label = np.zeros(n_comp, dtype=np.int64)
        comp_label[flat_comp] = flat_lab
        # main component = largest (lowest id on ties) per label
        order = np.lexsort((np.arange(n_comp), -comp_size, comp_label))
        first = np.ones(n_comp, dtype=bool)
        first[1:] = comp_label[order][1:] != comp_label[order][:-1]
        is_main = np.zeros(n_comp, dtype=bool)
        is_main[order[first]] = True
        if is_main.all():
            return labels

        a, b = _pixel_pairs(labels)
        ca, cb = flat_comp[a], flat_comp[b]
        diff = ca != cb
        pairs = np.unique(
            np.concatenate(
                [np.stack([ca[diff], cb[diff]], 1), np.stack([cb[diff], ca[diff]], 1)]
            ),
            axis=0,
        )
        label_size = np.bincount(flat_lab)
        starts = np.searchsorted(pairs[:, 0], np.arange(n_comp + 1))
        new_label = comp_label.copy()
        for c in np.flatnonzero(~is_main):
            nbrs = pairs[starts[c] : starts[c + 1], 1]
            nbrs = nbrs[comp_label[nbrs] != comp_label[c]]
            if nbrs.size == 0:
                continue
            cand = new_label[nbrs]
            sizes = label_size[cand]
            best = cand[sizes == sizes.max()].min()
            new_label[c] = best
        labels = new_label[comp]
    raise DecompositionError("connectivity enforcement did not converge")


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Validated superpixel decomposition.

    Use :meth:`from_labels` rather than the constructor; it checks the
    invariants and remaps non-contiguous label sets.
    """

    labels: np.ndarray
    image: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_labels(
        cls,
        labels: np.ndarray,
        image: np.ndarray | None = None,
        *,
        check_connectivity: bool = True,
    ) -> "Decomposition":
        labels = np.asarray(labels)
        if labels.ndim != 2 or labels.size == 0:
            raise DecompositionError(f"label map must be a non-empty 2-D array, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise DecompositionError(f"label map must be integer, got {labels.dtype}")
        if labels.min() < 0:
            raise DecompositionError("negative label values")
        if image is not None:
            image = np.asarray(image)
            if image.shape[:2] != labels.shape:
                raise DecompositionError(
                    f"dimension mismatch: image {image.shape[1]}x{image.shape[0]} vs "
                    f"labels {labels.shape[1]}x{labels.shape[0]}"
                )
        uniq = np.unique(labels)
        if uniq[-1] != uniq.size - 1:
            warnings.warn(
                f"non-contiguous label set ({uniq.size} ids, max {uniq[-1]}); remapping to 0..{uniq.size - 1}",
                stacklevel=2,
            )
            labels = np.searchsorted(uniq, labels)
        if uniq.size > MAX_SUPERPIXELS:
            raise DecompositionError(f"{uniq.size} superpixels exceeds the 16-bit limit")
        labels = np.ascontiguousarray(labels, dtype=np.int32)
        labels.setflags(write=False)
        d = cls(labels=labels, image=image)
        if check_connectivity:
            d.check_connectivity()
        return d

    def check_connectivity(self) -> None:
        n_comp, comp = _components(self.labels)
        if n_comp == self.K:
            return
        comp_label = np.zeros(n_comp, dtype=np.int64)
        comp_label[comp.ravel()] = self.labels.ravel()
        per_label = np.bincount(comp_label, minlength=self.K)
        bad = int(np.flatnonzero(per_label > 1)[0])
        raise DecompositionError(f"superpixel {bad} is disconnected ({per_label[bad]} components)")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def pixel_count(self) -> int:
        return self.labels.size

    @cached_property
    def K(self) -> int:
        return int(self.labels.max()) + 1

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.K)

    @cached_property
    def barycenters(self) -> np.ndarray:
        """``(K, 2)`` array of ``(x, y)`` member-coordinate means."""
        ys, xs = np.indices(self.labels.shape)
        flat = self.labels.ravel()
        sx = np.bincount(flat, weights=xs.ravel(), minlength=self.K)
        sy = np.bincount(flat, weights=ys.ravel(), minlength=self.K)
        return np.stack([sx, sy], axis=1) / self.sizes[:, None]

    @cached_property
    def _adjacency_csr(self) -> tuple[np.ndarray, np.ndarray]:
        a, b = _pixel_pairs(self.labels)
        flat = self.labels.ravel()
        la, lb = flat[a], flat[b]
        diff = la != lb
        pairs = np.concatenate(
            [np.stack([la[diff], lb[diff]], 1), np.stack([lb[diff], la[diff]], 1)]
        )
        pairs = np.unique(pairs, axis=0) if pairs.size else np.zeros((0, 2), dtype=np.int64)
        indptr = np.searchsorted(pairs[:, 0], np.arange(self.K + 1)).astype(np.int64)
        return indptr, pairs[:, 1].astype(np.int32)

    @property
    def adjacency_indptr(self) -> np.ndarray:
        return self._adjacency_csr[0]

    @property
    def adjacency_indices(self) -> np.ndarray:
        return self._adjacency_csr[1]

    def neighbors(self, i: int) -> np.ndarray:
        """Sorted ids of the superpixels 4-adjacent to ``i``."""
        indptr, indices = self._adjacency_csr
        return indices[indptr[i] : indptr[i + 1]]

    @cached_property
    def adjacency(self) -> list[np.ndarray]:
        return [self.neighbors(i) for i in range(self.K)]

    @cached_property
    def members(self) -> list[np.ndarray]:
        """Flat row-major pixel indices of each superpixel."""
        order = np.argsort(self.labels.ravel(), kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])

    @cached_property
    def anchors(self) -> np.ndarray:
        """Projection anchors: the barycenter when it falls inside its own
        superpixel, otherwise the nearest member pixel to it."""
        bary = self.barycenters
        anchors = bary.copy()
        at = self.labels_at(bary[:, 0], bary[:, 1])
        for i in np.flatnonzero(at != np.arange(self.K)):
            m = self.members[i]
            px, py = m % self.width, m // self.width
            d2 = (px - bary[i, 0]) ** 2 + (py - bary[i, 1]) ** 2
            k = int(np.argmin(d2))
            anchors[i] = (px[k], py[k])
        return anchors

    @property
    def sigma1(self) -> float:
        """Barycenter displacement scale ``0.5 * sqrt(|I| / K)``."""
        return 0.5 * np.sqrt(self.pixel_count / self.K)

    @property
    def spacing(self) -> float:
        """Mean superpixel spacing ``sqrt(|I| / K)``."""
        return float(np.sqrt(self.pixel_count / self.K))

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))

    def labels_at(self, x, y) -> np.ndarray:
        """Vectorized :func:`superpixel_at`."""
        ix = np.clip(np.floor(np.asarray(x, dtype=np.float64) + 0.5), 0, self.width - 1).astype(np.int64)
        iy = np.clip(np.floor(np.asarray(y, dtype=np.float64) + 0.5), 0, self.height - 1).astype(np.int64)
        return self.labels[iy, ix]


def superpixel_at(d: Decomposition, x: float, y: float) -> int:
    """Id of the superpixel under ``(x, y)``, rounded and clamped to the image."""
    return int(d.labels_at(x, y))


# --------------------------------------------------------------------- I/O


def read_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_image(path: str | Path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


def read_label_map(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I;16B", "I;16L", "I", "L"):
            raise DecompositionError(f"{path}: label map must be single-channel grayscale, got mode {im.mode}")
        return np.asarray(im).astype(np.int64)


def write_label_map(path: str | Path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.max(initial=0) >= MAX_SUPERPIXELS:
        raise DecompositionError("label values exceed 16 bits")
    Image.fromarray(labels.astype(np.uint16)).save(path)


def load_decomposition(label_map_path: str | Path, image_path: str | Path | None = None) -> Decomposition:
    labels = read_label_map(label_map_path)
    image = read_image(image_path) if image_path is not None else None
    return Decomposition.from_labels(labels, image)


def save_decomposition(d: Decomposition, label_map_path: str | Path) -> None:
    write_label_map(label_map_path, d.labels)


# -------------------------------------------------------------------- SLIC


def _rgb_to_lab(image: np.ndarray) -> np.ndarray:
    from skimage.color import rgb2lab

    return rgb2lab(np.asarray(image, dtype=np.uint8))


def generate_slic(
    image: np.ndarray,
    k_target: int,
    compactness: float = 10.0,
    iters: int = 10,
    seed: int = 0,
) -> Decomposition:
    """Seeded SLIC over-segmentation.

    Centers start on a regular grid of step ``S = sqrt(N / k_target)`` and are
    jittered by up to ``S / 4`` using ``seed``; k-means then runs in
    ``(L, a, b, x, y)`` restricted to ``2S x 2S`` windows.  Orphan
    components are merged into their largest neighbor afterwards.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    if k_target < 1 or iters < 1:
        raise ValueError("k_target and iters must be >= 1")
    if k_target > h * w:
        raise ValueError(f"k_target={k_target} exceeds the pixel count {h * w}")

    lab = _rgb_to_lab(image) if image.ndim == 3 else np.repeat(np.asarray(image, float)[..., None], 3, -1)
    step = np.sqrt(h * w / k_target)
    ny = max(1, int(round(h / step)))
    nx = max(1, int(round(k_target / ny)))
    nx = min(nx, w)
    ny = min(ny, h)
    gx = (np.arange(nx) + 0.5) * w / nx
    gy = (np.arange(ny) + 0.5) * h / ny
    cx, cy = np.meshgrid(gx, gy)
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-0.25, 0.25, size=(2, cx.size)) * step
    cx = np.clip(cx.ravel() + jitter[0], 0, w - 1)
    cy = np.clip(cy.ravel() + jitter[1], 0, h - 1)
    centers = np.column_stack(
        [lab[cy.round().astype(int), cx.round().astype(int)], cx, cy]
    ).astype(np.float64)

    ys, xs = np.mgrid[0:h, 0:w]
    m2 = (compactness / step) ** 2
    win = int(np.ceil(step))
    labels = np.zeros((h, w), dtype=np.int64)
    for _ in range(iters):
        best = np.full((h, w), np.inf)
        for k, (l, a, b, x, y) in enumerate(centers):
            x0, x1 = max(0, int(x) - win), min(w, int(x) + win + 1)
            y0, y1 = max(0, int(y) - win), min(h, int(y) + win + 1)
            sub = lab[y0:y1, x0:x1]
            dc = ((sub - (l, a, b)) ** 2).sum(-1)
            ds = (xs[y0:y1, x0:x1] - x) ** 2 + (ys[y0:y1, x0:x1] - y) ** 2
            dist = dc + m2 * ds
            upd = dist < best[y0:y1, x0:x1]
            best[y0:y1, x0:x1][upd] = dist[upd]
            labels[y0:y1, x0:x1][upd] = k
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(centers))
        keep = counts > 0
        feats = np.column_stack([lab.reshape(-1, 3), xs.ravel(), ys.ravel()])
        sums = np.stack([np.bincount(flat, weights=feats[:, c], minlength=len(centers)) for c in range(5)], 1)
        centers[keep] = sums[keep] / counts[keep, None]

    labels = enforce_connectivity(labels)
    _, labels = np.unique(labels, return_inverse=True)
    return Decomposition.from_labels(labels.reshape(h, w), image)


def resample_nearest(array: np.ndarray, factor: float) -> np.ndarray:
    """Nearest-neighbor resampling of the first two axes by ``factor``."""
    h, w = array.shape[:2]
    nh, nw = max(1, int(round(h * factor))), max(1, int(round(w * factor)))
    sy = np.minimum(((np.arange(nh) + 0.5) * h / nh).astype(np.int64), h - 1)
    sx = np.minimum(((np.arange(nw) + 0.5) * w / nw).astype(np.int64), w - 1)
    return array[sy[:, None], sx[None, :]]


def relabel_valid(labels: np.ndarray) -> np.ndarray:
    """Connectivity-enforced, contiguous relabeling of an arbitrary label map."""
    labels = enforce_connectivity(labels)
    _, inv = np.unique(labels, return_inverse=True)
    return inv.reshape(labels.shape)
