import numpy as np
import pytest

from dspm.decomp import Decomposition, generate_slic
from dspm.features import erode_region, gradients, region_feature
from dspm.synth import (SCENE_CLASSES, LibraryItem, add_noise, gen_scaled_library, gen_scene, gen_textures,
                        rescale_item, stripe_angles)


@pytest.fixture(scope="module")
def pair():
    return gen_textures(size=128, seed=3)


class TestTextures:
    def test_partitions_are_valid(self, pair):
        for d, tex in ((pair.decomp_a, pair.texture_a), (pair.decomp_b, pair.texture_b)):
            Decomposition.from_labels(d.labels)
            assert d.K == 16 and sorted(tex) == list(range(16))
        assert not np.array_equal(pair.texture_a, pair.texture_b)

    def test_refinement(self):
        p = gen_textures(size=128, refine=2, seed=0)
        assert p.decomp_a.K == 64 and np.bincount(p.texture_a).tolist() == [4] * 16

    def test_angles(self):
        np.testing.assert_allclose(stripe_angles(16)[:3], (0, 11.25, 22.5))
        assert stripe_angles(16).max() < 180

    def test_dominant_orientation(self, pair):
        bins = 18
        width = 180 / bins
        for img, d, tex in ((pair.image_a, pair.decomp_a, pair.texture_a), (pair.image_b, pair.decomp_b, pair.texture_b)):
            g = gradients(img)
            for i in range(d.K):
                px, _ = erode_region(d, i, 2)
                got = int(np.argmax(region_feature(img, px, "hog", grad=g, hog_bins=bins)))
                want = int(pair.angles[tex[i]] // width)
                assert min((got - want) % bins, (want - got) % bins) <= 1, (i, got, want)

    def test_deterministic(self):
        a, b = gen_textures(size=64, seed=5), gen_textures(size=64, seed=5)
        assert np.array_equal(a.image_a, b.image_a) and np.array_equal(a.texture_b, b.texture_b)
        assert not np.array_equal(a.image_a, gen_textures(size=64, seed=6).image_a)

    def test_grid_must_match_orientations(self):
        with pytest.raises(ValueError):
            gen_textures(grid=3)


class TestNoise:
    def test_zero_is_identity(self, pair):
        out = add_noise(pair.image_a, 0.0, seed=1)
        assert out.tobytes() == pair.image_a.tobytes() and out is not pair.image_a

    def test_variance(self):
        img = np.full((250, 250, 3), 128, np.uint8)
        diff = add_noise(img, 50.0, seed=2).astype(float) - img
        assert abs(diff.var() - 50.0) <= 5.0

    def test_seeded(self, pair):
        assert np.array_equal(add_noise(pair.image_a, 100, 4), add_noise(pair.image_a, 100, 4))
        assert not np.array_equal(add_noise(pair.image_a, 100, 4), add_noise(pair.image_a, 100, 5))

    def test_negative(self, pair):
        with pytest.raises(ValueError):
            add_noise(pair.image_a, -1.0)


class TestScaled:
    def _item(self):
        img, gt = gen_scene(64, seed=1)
        return LibraryItem(img, generate_slic(img, 30, seed=1), gt)

    def test_identity(self):
        it = self._item()
        out = rescale_item(it, 1.0)
        assert out.decomp is it.decomp and out.factor == 1.0

    def test_factor_two(self):
        it = self._item()
        big = rescale_item(it, 2.0)
        assert big.image.shape == (128, 128, 3) and big.factor == 2.0
        assert big.decomp.K == it.decomp.K
        np.testing.assert_array_equal(big.decomp.sizes, 4 * it.decomp.sizes)
        assert np.abs(big.decomp.barycenters - 2 * it.decomp.barycenters).max() <= 1.0
        assert big.gt.class_map.shape == (128, 128)

    def test_downsampled_is_valid(self):
        small = rescale_item(self._item(), 0.5)
        assert small.image.shape[:2] == small.decomp.labels.shape == small.gt.class_map.shape == (32, 32)
        Decomposition.from_labels(small.decomp.labels)

    def test_library_picks(self):
        items = [self._item()] * 6
        lib = gen_scaled_library(items, (0.5, 2.0), seed=3)
        assert {it.factor for it in lib} <= {0.5, 2.0}
        assert [it.factor for it in lib] == [it.factor for it in gen_scaled_library(items, (0.5, 2.0), seed=3)]


def test_scene():
    img, gt = gen_scene(96, seed=4)
    assert img.shape == (96, 96, 3) and img.dtype == np.uint8
    assert gt.names == SCENE_CLASSES and set(np.unique(gt.class_map)) == {0, 1, 2}
    img2, gt2 = gen_scene(96, seed=4)
    assert np.array_equal(img, img2) and np.array_equal(gt.class_map, gt2.class_map)
