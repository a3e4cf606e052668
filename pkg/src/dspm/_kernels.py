"""Compiled distance and search kernels.

Every kernel works on index arrays into descriptor tables, so the same code
serves single superpatch pairs (tables of one image, ``base == 0``) and the
concatenated multi-image bank used by the search (global ids).

Directed projected and interface kernels take a ratio ``f`` mapping the
source structure's center-relative offsets into the target image frame.
The quadratic kernel works in display frames (offsets times scale ``s``)
because its displacement weight depends on absolute distances.  Spatial
weights always use raw offsets and the extraction radius, so rescaling
leaves them unchanged.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numba import njit

QUADRATIC = 0
PROJECTED = 1
SYMMETRIC = 2

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def lookup(labels, off, w, h, x, y):
    ix = int(np.floor(x + 0.5))
    iy = int(np.floor(y + 0.5))
    if ix < 0:
        ix = 0
    elif ix > w - 1:
        ix = w - 1
    if iy < 0:
        iy = 0
    elif iy > h - 1:
        iy = h - 1
    return labels[off + iy * w + ix]


@njit(**_JIT)
def l2(fa, i, fb, j):
    s = 0.0
    for k in range(fa.shape[1]):
        t = fa[i, k] - fb[j, k]
        s += t * t
    return np.sqrt(s)


@njit(**_JIT)
def spatial_weight(dx, dy, r):
    if r <= 0.0:
        return 1.0
    return np.exp(-(dx * dx + dy * dy) / (2.0 * r * r))


@njit(**_JIT)
def region_quadratic(ids_a, feat_a, bary_a, ca, s_a, r_a,
                     ids_b, feat_b, bary_b, cb, s_b, r_b, sigma1):
    na, nb = ids_a.size, ids_b.size
    wa = np.empty(na)
    wb = np.empty(nb)
    for t in range(na):
        k = ids_a[t]
        wa[t] = spatial_weight(bary_a[k, 0] - bary_a[ca, 0], bary_a[k, 1] - bary_a[ca, 1], r_a)
    for u in range(nb):
        k = ids_b[u]
        wb[u] = spatial_weight(bary_b[k, 0] - bary_b[cb, 0], bary_b[k, 1] - bary_b[cb, 1], r_b)
    inv_s2 = 1.0 / (sigma1 * sigma1)
    num = 0.0
    den = 0.0
    for t in range(na):
        k = ids_a[t]
        ax = (bary_a[k, 0] - bary_a[ca, 0]) * s_a
        ay = (bary_a[k, 1] - bary_a[ca, 1]) * s_a
        for u in range(nb):
            j = ids_b[u]
            dx = (bary_b[j, 0] - bary_b[cb, 0]) * s_b - ax
            dy = (bary_b[j, 1] - bary_b[cb, 1]) * s_b - ay
            w = np.exp(-(dx * dx + dy * dy) * inv_s2) * wa[t] * wb[u]
            num += w * l2(feat_a, k, feat_b, j)
            den += w
    if den <= 0.0:
        return l2(feat_a, ca, feat_b, cb)
    return num / den


@njit(**_JIT)
def region_projected(ids_a, feat_a, anch_a, xr_a, bary_a, ca, r_a,
                     labels_b, off_b, w_b, h_b, base_b, feat_b, anch_b, cb, f):
    """Directed projected distance from the regions of ``a`` onto image ``b``.

    ``f`` maps raw center-relative offsets of ``a`` into ``b``'s pixel frame.
    """
    cax, cay = anch_a[ca, 0], anch_a[ca, 1]
    cbx, cby = anch_b[cb, 0], anch_b[cb, 1]
    num = 0.0
    den = 0.0
    for t in range(ids_a.size):
        k = ids_a[t]
        px = cbx + (anch_a[k, 0] - cax) * f
        py = cby + (anch_a[k, 1] - cay) * f
        j = base_b + lookup(labels_b, off_b, w_b, h_b, px, py)
        ws = spatial_weight(xr_a[k, 0] - bary_a[ca, 0], xr_a[k, 1] - bary_a[ca, 1], r_a)
        num += ws * l2(feat_a, k, feat_b, j)
        den += ws
    if den <= 0.0:
        return l2(feat_a, ca, feat_b, cb)
    return num / den


@njit(**_JIT)
def interface_directed(ids_a, ifeat_a, ipos_a, cax, cay, r_a,
                       ids_b, ifeat_b, ipos_b, cbx, cby, f):
    """Directed nearest-interface distance; ``-1`` when either side is empty.

    ``f`` maps raw center-relative offsets of ``a`` into ``b``'s pixel frame.
    Ties go to the lowest position in ``ids_b``.
    """
    na, nb = ids_a.size, ids_b.size
    if na == 0 or nb == 0:
        return -1.0
    bx = np.empty(nb)
    by = np.empty(nb)
    for u in range(nb):
        bx[u] = ipos_b[ids_b[u], 0] - cbx
        by[u] = ipos_b[ids_b[u], 1] - cby
    num = 0.0
    den = 0.0
    for t in range(na):
        k = ids_a[t]
        rx = ipos_a[k, 0] - cax
        ry = ipos_a[k, 1] - cay
        ax, ay = rx * f, ry * f
        bd = np.inf
        bu = 0
        for u in range(nb):
            dx = bx[u] - ax
            dy = by[u] - ay
            dd = dx * dx + dy * dy
            if dd < bd:
                bd = dd
                bu = u
        ws = spatial_weight(rx, ry, r_a)
        num += ws * l2(ifeat_a, k, ifeat_b, ids_b[bu])
        den += ws
    if den <= 0.0:
        return -1.0
    return num / den


class Bank(NamedTuple):
    """Flat descriptor arrays of several images (see ``dspm.match.build_bank``)."""

    labels: np.ndarray      # int32, all label maps concatenated
    lab_off: np.ndarray     # int64 (n_img,)
    width: np.ndarray       # int64 (n_img,)
    height: np.ndarray      # int64 (n_img,)
    sp_off: np.ndarray      # int64 (n_img + 1,)
    sp_img: np.ndarray      # int64 (Ktot,)
    feat_r: np.ndarray      # (Ktot, Fr)
    bary: np.ndarray        # (Ktot, 2)
    anch: np.ndarray        # (Ktot, 2)
    xr: np.ndarray          # (Ktot, 2)
    if_off: np.ndarray      # int64 (n_img + 1,)
    feat_i: np.ndarray      # (Ntot, Fi)
    ipos: np.ndarray        # (Ntot, 2)
    radii: np.ndarray       # (S,)
    r_indptr: np.ndarray    # int64 (S, Ktot + 1)
    r_indices: np.ndarray   # int64
    i_indptr: np.ndarray    # int64 (S, Ktot + 1)
    i_indices: np.ndarray   # int64
    diag: np.ndarray        # (n_img,)
    spacing: np.ndarray     # (n_img,)


@njit(**_JIT)
def _ratios(ra, rb, rescale):
    if rescale and ra > 0.0 and rb > 0.0:
        return rb / ra, ra / rb
    return 1.0, 1.0


@njit(**_JIT)
def bank_region_term(B, ga, sa, gb, sb, mode, rescale, sigma1):
    ra = B.radii[sa]
    rb = B.radii[sb]
    s_b = ra / rb if (rescale and ra > 0.0 and rb > 0.0) else 1.0
    ids_a = B.r_indices[B.r_indptr[sa, ga]:B.r_indptr[sa, ga + 1]]
    ids_b = B.r_indices[B.r_indptr[sb, gb]:B.r_indptr[sb, gb + 1]]
    if mode == QUADRATIC:
        return region_quadratic(ids_a, B.feat_r, B.bary, ga, 1.0, ra,
                                ids_b, B.feat_r, B.bary, gb, s_b, rb, sigma1)
    f_ab, f_ba = _ratios(ra, rb, rescale)
    ib = B.sp_img[gb]
    ab = region_projected(ids_a, B.feat_r, B.anch, B.xr, B.bary, ga, ra,
                          B.labels, B.lab_off[ib], B.width[ib], B.height[ib], B.sp_off[ib],
                          B.feat_r, B.anch, gb, f_ab)
    if mode == PROJECTED:
        return ab
    ia = B.sp_img[ga]
    ba = region_projected(ids_b, B.feat_r, B.anch, B.xr, B.bary, gb, rb,
                          B.labels, B.lab_off[ia], B.width[ia], B.height[ia], B.sp_off[ia],
                          B.feat_r, B.anch, ga, f_ba)
    return 0.5 * (ab + ba)


@njit(**_JIT)
def bank_interface_term(B, ga, sa, gb, sb, rescale):
    ra = B.radii[sa]
    rb = B.radii[sb]
    f_ab, f_ba = _ratios(ra, rb, rescale)
    ids_a = B.i_indices[B.i_indptr[sa, ga]:B.i_indptr[sa, ga + 1]]
    ids_b = B.i_indices[B.i_indptr[sb, gb]:B.i_indptr[sb, gb + 1]]
    if ids_a.size == 0 or ids_b.size == 0:
        return -1.0
    ab = interface_directed(ids_a, B.feat_i, B.ipos, B.bary[ga, 0], B.bary[ga, 1], ra,
                            ids_b, B.feat_i, B.ipos, B.bary[gb, 0], B.bary[gb, 1], f_ab)
    ba = interface_directed(ids_b, B.feat_i, B.ipos, B.bary[gb, 0], B.bary[gb, 1], rb,
                            ids_a, B.feat_i, B.ipos, B.bary[ga, 0], B.bary[ga, 1], f_ba)
    return 0.5 * (ab + ba)


@njit(**_JIT)
def combine(alpha, region, iface):
    if iface < 0.0:
        return region
    return alpha * region + (1.0 - alpha) * iface


@njit(**_JIT)
def bank_dual(B, ga, sa, gb, sb, alpha, mode, rescale, sigma1):
    iface = -1.0
    if alpha < 1.0:
        iface = bank_interface_term(B, ga, sa, gb, sb, rescale)
    if iface >= 0.0 and alpha <= 0.0:
        return iface
    region = bank_region_term(B, ga, sa, gb, sb, mode, rescale, sigma1)
    return combine(alpha, region, iface)


@njit(**_JIT)
def exhaustive(B, q_img, q_scale, src, lib_imgs, lib_scale, alpha, mode, rescale, sigma1,
               out_img, out_sp, out_d):
    base = B.sp_off[q_img]
    for t in range(src.size):
        gi = base + src[t]
        best = np.inf
        bi = -1
        bs = -1
        for li in range(lib_imgs.size):
            img = lib_imgs[li]
            for gj in range(B.sp_off[img], B.sp_off[img + 1]):
                d = bank_dual(B, gi, q_scale, gj, lib_scale, alpha, mode, rescale, sigma1)
                if d < best:
                    best = d
                    bi = li
                    bs = gj - B.sp_off[img]
        out_img[t] = bi
        out_sp[t] = bs
        out_d[t] = best


@njit(**_JIT)
def dspm_run(B, q_img, q_scale, lib_imgs, lib_scales, iterations, order,
             adj_ptr, adj_idx, rand_init, rand_search, alpha, mode, rescale, sigma1,
             out_img, out_sp, out_sc, out_d):
    """One randomized search run; fills the ``out_*`` arrays per source superpixel.

    ``out_img`` indexes ``lib_imgs``, ``out_sp`` is a local superpixel id and
    ``out_sc`` indexes ``lib_scales``.
    """
    base = B.sp_off[q_img]
    K = B.sp_off[q_img + 1] - base
    L = lib_imgs.size
    S = lib_scales.size
    max_steps = rand_search.shape[2]
    for i in range(K):
        li = min(int(rand_init[i, 0] * L), L - 1)
        img = lib_imgs[li]
        nk = B.sp_off[img + 1] - B.sp_off[img]
        out_img[i] = li
        out_sp[i] = min(int(rand_init[i, 1] * nk), nk - 1)
        out_sc[i] = min(int(rand_init[i, 2] * S), S - 1)
        out_d[i] = bank_dual(B, base + i, q_scale, B.sp_off[img] + out_sp[i],
                             lib_scales[out_sc[i]], alpha, mode, rescale, sigma1)

    processed = np.zeros(K, dtype=np.bool_)
    for it in range(iterations):
        processed[:] = False
        for t in range(K):
            i = order[t] if it % 2 == 0 else order[K - 1 - t]
            gi = base + i
            for e in range(adj_ptr[i], adj_ptr[i + 1]):
                a = adj_idx[e]
                if not processed[a]:
                    continue
                li = out_img[a]
                img = lib_imgs[li]
                sc = out_sc[a]
                rho = 1.0
                if rescale and B.radii[q_scale] > 0.0 and B.radii[lib_scales[sc]] > 0.0:
                    rho = B.radii[lib_scales[sc]] / B.radii[q_scale]
                gt = B.sp_off[img] + out_sp[a]
                px = B.bary[gt, 0] + rho * (B.bary[gi, 0] - B.bary[base + a, 0])
                py = B.bary[gt, 1] + rho * (B.bary[gi, 1] - B.bary[base + a, 1])
                cand = lookup(B.labels, B.lab_off[img], B.width[img], B.height[img], px, py)
                if li == out_img[i] and cand == out_sp[i] and sc == out_sc[i]:
                    continue
                d = bank_dual(B, gi, q_scale, B.sp_off[img] + cand, lib_scales[sc],
                              alpha, mode, rescale, sigma1)
                if d < out_d[i]:
                    out_d[i] = d
                    out_img[i] = li
                    out_sp[i] = cand
                    out_sc[i] = sc

            li = out_img[i]
            img = lib_imgs[li]
            g0 = B.sp_off[img] + out_sp[i]
            x0 = B.bary[g0, 0]
            y0 = B.bary[g0, 1]
            R = B.diag[img]
            step = 0
            while R >= B.spacing[img] and step < max_steps:
                u0 = rand_search[it, i, step, 0]
                u1 = rand_search[it, i, step, 1]
                u2 = rand_search[it, i, step, 2]
                cand = lookup(B.labels, B.lab_off[img], B.width[img], B.height[img],
                              x0 + R * (2.0 * u0 - 1.0), y0 + R * (2.0 * u1 - 1.0))
                sc = min(int(u2 * S), S - 1)
                if not (li == out_img[i] and cand == out_sp[i] and sc == out_sc[i]):
                    d = bank_dual(B, gi, q_scale, B.sp_off[img] + cand, lib_scales[sc],
                                  alpha, mode, rescale, sigma1)
                    if d < out_d[i]:
                        out_d[i] = d
                        out_img[i] = li
                        out_sp[i] = cand
                        out_sc[i] = sc
                R *= 0.5
                step += 1
            processed[i] = True
