import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nextedit.errors import CorruptionError, InputError
from nextedit.tokenizer import (EDIT, UNEDIT, EditMask, TokenGrid, TokenizerConfig,
                                decode_tokens, default_palette, encode_image,
                                image_to_png, mask_from_patches, mask_to_png,
                                mask_token_ids, patchify_mask, png_to_image, png_to_mask)


@pytest.fixture(scope="module")
def cfg():
    return TokenizerConfig()


def images(draw):
    rng = np.random.default_rng(draw)
    return rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)


class TestEncode:
    def test_solid_palette_color_encodes_to_its_id(self, cfg):
        for idx in (0, 17, 63):
            img = np.tile(cfg.palette[idx], (32, 32, 1))
            grid = encode_image(img, cfg)
            assert np.all(grid.ids == idx)

    def test_nearest_neighbor_matches_exhaustive_scan(self, cfg):
        # a mid-gray patch mean, checked against a brute-force scan of all 64 entries
        img = np.full((32, 32, 3), 127, dtype=np.uint8)
        grid = encode_image(img, cfg)
        d2 = ((cfg.palette.astype(np.float64) - 127.0) ** 2).sum(axis=1)
        best = int(np.argmin(d2))
        assert np.all(grid.ids == best)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_quantizer_idempotent(self, seed):
        cfg = TokenizerConfig()
        img = images(seed)
        first = encode_image(img, cfg)
        again = encode_image(decode_tokens(first, cfg), cfg)
        assert np.array_equal(first.ids, again.ids)

    def test_tie_breaks_to_lowest_id(self):
        # palette with two identical-distance entries: mean sits exactly between
        pal = np.array([[0, 0, 0], [10, 0, 0], [5, 5, 5]], dtype=np.uint8)
        cfg = TokenizerConfig(image_h=4, image_w=4, patch=4, palette=pal)
        img = np.full((4, 4, 3), 0, dtype=np.uint8)
        img[..., 0] = 5  # equidistant from entries 0 and 1
        assert encode_image(img, cfg).ids[0] == 0

    def test_size_mismatch_rejected(self, cfg):
        with pytest.raises(InputError):
            encode_image(np.zeros((16, 32, 3), dtype=np.uint8), cfg)


class TestDecode:
    def test_single_id_paints_uniform_image(self, cfg):
        grid = TokenGrid(np.full(64, 12), 8, 8)
        img = decode_tokens(grid, cfg)
        assert np.all(img.reshape(-1, 3) == cfg.palette[12])

    def test_round_trip_exact_on_patch_aligned_images(self, cfg):
        rng = np.random.default_rng(1)
        ids = rng.integers(0, 64, 64)
        img = decode_tokens(TokenGrid(ids, 8, 8), cfg)
        assert np.array_equal(decode_tokens(encode_image(img, cfg), cfg), img)

    def test_matches_naive_per_pixel_painting(self, cfg):
        rng = np.random.default_rng(2)
        ids = rng.integers(0, 64, 64)
        grid = TokenGrid(ids, 8, 8)
        fast = decode_tokens(grid, cfg)
        slow = np.zeros_like(fast)
        for y in range(32):
            for x in range(32):
                slow[y, x] = cfg.palette[ids[(y // 4) * 8 + (x // 4)]]
        assert np.array_equal(fast, slow)

    def test_out_of_range_id_is_corruption(self, cfg):
        with pytest.raises(CorruptionError):
            decode_tokens(TokenGrid(np.full(64, 64), 8, 8), cfg)


class TestPatchify:
    def test_all_zero_and_all_one(self, cfg):
        zeros = patchify_mask(np.zeros((32, 32), dtype=np.uint8), cfg)
        ones = patchify_mask(np.ones((32, 32), dtype=np.uint8), cfg)
        assert zeros.patch.sum() == 0 and ones.patch.sum() == 64

    def test_single_pixel_sets_single_patch(self, cfg):
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[0, 0] = 1
        out = patchify_mask(mask, cfg)
        assert out.patch.sum() == 1 and out.patch[0] == 1

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_matches_naive_window_scan(self, seed):
        cfg = TokenizerConfig()
        rng = np.random.default_rng(seed)
        mask = (rng.random((32, 32)) < 0.1).astype(np.uint8)
        out = patchify_mask(mask, cfg)
        for i in range(8):
            for j in range(8):
                window = mask[4 * i:4 * i + 4, 4 * j:4 * j + 4]
                assert out.patch[8 * i + j] == int(window.any())

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_adding_pixels_is_monotone(self, seed):
        cfg = TokenizerConfig()
        rng = np.random.default_rng(seed)
        base = (rng.random((32, 32)) < 0.05).astype(np.uint8)
        more = base | (rng.random((32, 32)) < 0.05).astype(np.uint8)
        a = patchify_mask(base, cfg).patch
        b = patchify_mask(more, cfg).patch
        assert np.all(b >= a)

    def test_size_mismatch_rejected(self, cfg):
        with pytest.raises(InputError):
            patchify_mask(np.zeros((8, 8)), cfg)


class TestMaskTokens:
    def test_selector_cases(self):
        mask = EditMask(pixel=np.zeros((4, 4)), patch=np.array([0, 1, 1, 0]))
        assert list(mask_token_ids(mask)) == [UNEDIT, EDIT, EDIT, UNEDIT]

    def test_all_zero_mask_is_all_unedit(self):
        mask = EditMask(pixel=np.zeros((4, 4)), patch=np.zeros(4, dtype=np.uint8))
        assert np.all(mask_token_ids(mask) == UNEDIT)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_edit_count_is_popcount(self, seed):
        rng = np.random.default_rng(seed)
        patch = (rng.random(64) < 0.3).astype(np.uint8)
        mask = EditMask(pixel=np.zeros((32, 32)), patch=patch)
        assert (mask_token_ids(mask) == EDIT).sum() == patch.sum() == mask.edit_count()


class TestPngIO:
    def test_image_round_trip(self, cfg):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        assert np.array_equal(png_to_image(image_to_png(img), cfg), img)

    def test_mask_round_trip(self, cfg):
        rng = np.random.default_rng(4)
        mask = (rng.random((32, 32)) < 0.2).astype(np.uint8)
        assert np.array_equal(png_to_mask(mask_to_png(mask), cfg), mask)

    def test_garbage_bytes_rejected(self, cfg):
        with pytest.raises(InputError):
            png_to_image(b"not a png", cfg)

    def test_patch_lift_round_trip(self, cfg):
        patch = np.zeros(64, dtype=np.uint8)
        patch[[3, 17, 40]] = 1
        lifted = mask_from_patches(patch, cfg)
        assert np.array_equal(patchify_mask(lifted.pixel, cfg).patch, patch)

    def test_default_palette_is_the_lattice(self):
        pal = default_palette()
        assert pal.shape == (64, 3)
        assert list(pal[0]) == [0, 0, 0] and list(pal[63]) == [255, 255, 255]
