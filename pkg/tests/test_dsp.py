import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dspm.decomp import Decomposition, generate_slic
from dspm.dsp import ScaleSet, build_dsp, neighborhoods, rescale_dsp
from dspm.features import compute_descriptors
from instances import random_table, voronoi_labels


@pytest.fixture
def table(rng):
    img = rng.integers(0, 256, (60, 60, 3)).astype(np.uint8)
    return compute_descriptors(Decomposition.from_labels(voronoi_labels(rng, 60, 60, 40), img))


class TestBuild:
    def test_radius_zero_is_center_only(self, table):
        p = build_dsp(table, 5, 0.0)
        assert p.region_ids.tolist() == [5]

    def test_saturation(self, table):
        p = build_dsp(table, 3, table.decomp.diagonal)
        assert p.region_ids.size == table.K and p.interface_ids.size == table.n_interfaces

    def test_inclusion_uses_superpixel_barycenters(self, table):
        c = 7
        p = build_dsp(table, c, 15.0)
        bary = table.decomp.barycenters
        d = np.hypot(*(bary - bary[c]).T)
        assert set(p.region_ids) == set(np.flatnonzero(d <= 15.0))
        if table.n_interfaces:
            di = np.hypot(*(table.interface_positions - bary[c]).T)
            assert set(p.interface_ids) == set(np.flatnonzero(di <= 15.0))

    def test_monotone_in_radius(self, table):
        for c in range(0, table.K, 7):
            sizes = [build_dsp(table, c, r).region_ids.size for r in (0, 5, 10, 20, 40, 80)]
            assert sizes == sorted(sizes)

    def test_first_ring_at_25(self):
        img = np.zeros((250, 250, 3), np.uint8)
        img[..., 0] = np.arange(250)[None, :]
        img[..., 1] = np.arange(250)[:, None]
        t = compute_descriptors(generate_slic(img, 250, seed=0))
        c = int(np.argmin(np.hypot(*(t.decomp.barycenters - 125).T)))
        p = build_dsp(t, c, 25.0)
        ring = set(t.decomp.neighbors(c)) | {c}
        assert 0.6 * len(ring) <= p.region_ids.size <= 1.6 * len(ring)

    def test_bad_center(self, table):
        with pytest.raises(IndexError):
            build_dsp(table, table.K, 10.0)

    def test_neighborhoods_match_build(self, table):
        nb = neighborhoods(table, 18.0)
        for c in range(table.K):
            p = build_dsp(table, c, 18.0)
            assert np.array_equal(nb.region_indices[nb.region_indptr[c] : nb.region_indptr[c + 1]], p.region_ids)
            assert np.array_equal(nb.interface_indices[nb.interface_indptr[c] : nb.interface_indptr[c + 1]], p.interface_ids)


class TestRescale:
    def test_identity(self, table):
        p = build_dsp(table, 4, 20.0)
        assert rescale_dsp(p, 20.0) is p

    def test_offset_doubles(self):
        lab = np.zeros((5, 30), int)
        lab[:, 15:] = 1
        t = compute_descriptors(Decomposition.from_labels(lab, np.zeros((5, 30, 3), np.uint8)))
        p = build_dsp(t, 0, 20.0)
        q = rescale_dsp(p, 40.0)
        off = q.region_barycenters[1] - q.center_barycenter
        np.testing.assert_allclose(off, 2 * (p.region_barycenters[1] - p.center_barycenter))
        np.testing.assert_allclose(off, (30.0, 0.0))

    def test_features_and_lengths_kept(self, table):
        p = build_dsp(table, 9, 20.0)
        q = rescale_dsp(p, 13.0)
        assert np.array_equal(q.region_features, p.region_features)
        assert np.array_equal(q.interface_features, p.interface_features)
        assert q.radius == 13.0 and q.extraction_radius == 20.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6), st.floats(1.0, 80.0), st.floats(1.0, 80.0))
    def test_roundtrip_and_ratio(self, seed, r, t):
        rng = np.random.default_rng(seed)
        tab = random_table(rng)
        p = build_dsp(tab, int(rng.integers(tab.K)), r)
        q = rescale_dsp(p, t)
        back = rescale_dsp(q, r)
        np.testing.assert_allclose(back.region_positions, p.region_positions, atol=1e-9)
        np.testing.assert_allclose(back.interface_positions.reshape(-1, 2), p.interface_positions.reshape(-1, 2), atol=1e-9)
        c = p.center_barycenter
        np.testing.assert_allclose(np.hypot(*(q.region_barycenters - c).T),
                                   np.hypot(*(p.region_barycenters - c).T) * (t / r), rtol=1e-9, atol=1e-9)

    @pytest.mark.parametrize("target", [0.0, -3.0])
    def test_rejects_non_positive(self, table, target):
        with pytest.raises(ValueError):
            rescale_dsp(build_dsp(table, 0, 10.0), target)
        with pytest.raises(ValueError):
            rescale_dsp(build_dsp(table, 0, 0.0), 10.0)


def test_scaleset():
    s = ScaleSet.relative(50, (0.5, 2))
    assert s.library_radii == (25.0, 100.0)
    with pytest.raises(ValueError):
        ScaleSet(50, ())
    with pytest.raises(ValueError):
        ScaleSet(-1, (5,))


def test_descriptor_views(table):
    p = build_dsp(table, 2, 20.0)
    regs = p.regions
    assert len(regs) == p.region_ids.size and regs[0].superpixel_id == p.region_ids[0]
    assert len(p.interfaces) == p.interface_ids.size
