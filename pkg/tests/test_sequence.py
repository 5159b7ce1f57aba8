import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nextedit.errors import InputError, LayoutError
from nextedit.rng import make_rng
from nextedit.sequence import (GenerationOrder, TextTokens, build_edit_layout,
                               build_pretrain_layout, build_raster_layout,
                               build_zero_shot_layout, editing_order, sample_order)
from nextedit.tokenizer import EditMask, TokenGrid
from nextedit.vocab import PAD


def _text(n=8):
    return TextTokens(np.array([PAD] * (n - 2) + [5, 9]))


def _mask(patch):
    patch = np.asarray(patch, dtype=np.uint8)
    return EditMask(pixel=np.zeros((1, 1)), patch=patch)


class TestTextTokens:
    def test_pad_must_be_left_prefix(self):
        with pytest.raises(InputError):
            TextTokens(np.array([5, PAD, 9]))

    def test_encode_left_pads(self):
        t = TextTokens.encode("red square", 6)
        assert list(t.ids[:4]) == [PAD] * 4 and len(t) == 6

    def test_encode_rejects_unknown_and_overflow(self):
        with pytest.raises(InputError):
            TextTokens.encode("definitely-not-a-word", 8)
        with pytest.raises(InputError):
            TextTokens.encode("red red red", 2)


class TestSampleOrder:
    def test_raster_prob_one_gives_identity(self):
        rng = make_rng(0)
        for _ in range(5):
            assert np.array_equal(sample_order(6, rng, 1.0).positions, np.arange(6))

    @given(st.integers(1, 64), st.integers(0, 2**31))
    @settings(max_examples=30, deadline=None)
    def test_output_is_permutation(self, length, seed):
        order = sample_order(length, make_rng(seed), 0.0)
        assert np.array_equal(np.sort(order.positions), np.arange(length))

    def test_uniform_over_permutations(self):
        # chi-square style bound: each of the 24 orders of length 4 within 3 sigma
        rng = make_rng(123)
        draws = 10_000
        counts = {p: 0 for p in permutations(range(4))}
        for _ in range(draws):
            counts[tuple(sample_order(4, rng, 0.0).positions)] += 1
        p = 1 / 24
        sigma = math.sqrt(draws * p * (1 - p))
        for perm, count in counts.items():
            assert abs(count - draws * p) < 3.5 * sigma, (perm, count)

    def test_duplicate_positions_rejected(self):
        with pytest.raises(InputError):
            GenerationOrder(np.array([0, 0, 1]))


class TestEditingOrder:
    def test_ascending_positions_of_set_bits(self):
        order = editing_order(_mask([0, 1, 1, 0]))
        assert list(order.positions) == [1, 2]

    def test_all_ones_is_identity(self):
        order = editing_order(_mask(np.ones(16)))
        assert np.array_equal(order.positions, np.arange(16))

    @given(st.integers(0, 2**31))
    @settings(max_examples=30, deadline=None)
    def test_length_is_popcount(self, seed):
        rng = np.random.default_rng(seed)
        patch = (rng.random(64) < 0.4).astype(np.uint8)
        assert len(editing_order(_mask(patch))) == patch.sum()


class TestPretrainLayout:
    def test_identity_order_is_raster(self):
        grid = TokenGrid(np.arange(16) % 7, 4, 4)
        layout = build_pretrain_layout(_text(), grid, GenerationOrder(np.arange(16)))
        reference = build_raster_layout(_text(), grid)
        assert np.array_equal(layout.pe_index_per_step, reference.pe_index_per_step)
        assert np.array_equal(layout.teacher_ids, reference.teacher_ids)
        assert layout.prefix_len == reference.prefix_len == 8

    def test_reversed_order_reverses_teacher_stream(self):
        grid = TokenGrid(np.array([10, 11, 12, 13]), 2, 2)
        layout = build_pretrain_layout(_text(), grid, GenerationOrder(np.array([3, 2, 1, 0])))
        assert list(layout.pe_index_per_step) == [3, 2, 1, 0]
        assert list(layout.teacher_ids) == [13, 12, 11, 10]

    @given(st.integers(0, 2**31))
    @settings(max_examples=30, deadline=None)
    def test_unpermuting_teacher_recovers_grid(self, seed):
        rng = make_rng(seed)
        grid = TokenGrid(rng.integers(0, 64, 16), 4, 4)
        order = sample_order(16, rng, 0.0)
        layout = build_pretrain_layout(_text(), grid, order)
        restored = np.empty(16, dtype=np.int64)
        restored[layout.gen_order] = layout.teacher_ids
        assert np.array_equal(restored, grid.ids)

    def test_partial_order_rejected(self):
        grid = TokenGrid(np.zeros(16), 4, 4)
        with pytest.raises(LayoutError):
            build_pretrain_layout(_text(), grid, GenerationOrder(np.arange(4)))


class TestEditLayout:
    def test_prefix_is_text_plus_two_grids(self):
        text = TextTokens(np.zeros(16, dtype=np.int64))
        source = TokenGrid(np.arange(64) % 64, 8, 8)
        patch = np.zeros(64, dtype=np.uint8)
        patch[:16] = 1
        layout = build_edit_layout(text, source, _mask(patch))
        assert layout.prefix_len == 16 + 2 * 64 == 144
        assert layout.n_steps == 16
        assert len(layout.prefix_ids()) == 144
        tags = layout.segment_tags()
        assert list(np.bincount(tags)) == [16, 64, 64]

    def test_empty_mask_falls_back_to_full_raster(self):
        source = TokenGrid(np.zeros(64), 8, 8)
        for mask in (None, _mask(np.zeros(64))):
            layout = build_edit_layout(_text(16), source, mask)
            assert np.array_equal(layout.gen_order, np.arange(64))
            assert np.all(layout.mask_selectors == 0)

    @given(st.integers(0, 2**31))
    @settings(max_examples=30, deadline=None)
    def test_steps_are_exactly_the_masked_positions(self, seed):
        rng = np.random.default_rng(seed)
        patch = (rng.random(64) < 0.25).astype(np.uint8)
        if patch.sum() == 0:
            patch[5] = 1
        source = TokenGrid(rng.integers(0, 64, 64), 8, 8)
        layout = build_edit_layout(_text(16), source, _mask(patch))
        assert np.array_equal(layout.gen_order, np.flatnonzero(patch))
        # never a step on an unmasked position
        assert np.all(patch[layout.gen_order] == 1)

    def test_teacher_stream_reads_targets_at_order(self):
        source = TokenGrid(np.zeros(4), 2, 2)
        target = TokenGrid(np.array([4, 5, 6, 7]), 2, 2)
        layout = build_edit_layout(_text(), source, _mask([0, 1, 0, 1]), targets=target)
        assert list(layout.teacher_ids) == [5, 7]

    def test_order_override_must_permute_edit_set(self):
        source = TokenGrid(np.zeros(4), 2, 2)
        mask = _mask([0, 1, 0, 1])
        layout = build_edit_layout(_text(), source, mask,
                                   order=GenerationOrder(np.array([3, 1])))
        assert list(layout.gen_order) == [3, 1]
        with pytest.raises(LayoutError):
            build_edit_layout(_text(), source, mask, order=GenerationOrder(np.array([0, 1])))

    def test_target_shape_mismatch_rejected(self):
        source = TokenGrid(np.zeros(4), 2, 2)
        with pytest.raises(LayoutError):
            build_edit_layout(_text(), source, _mask([1, 0, 0, 0]),
                              targets=TokenGrid(np.zeros(16), 4, 4))

    def test_mask_source_hides_generated_positions(self):
        source = TokenGrid(np.zeros(4), 2, 2)
        layout = build_edit_layout(_text(), source, _mask([0, 1, 1, 0]), mask_source=True)
        assert list(layout.source_masked) == [False, True, True, False]


class TestZeroShotLayout:
    def test_keep_positions_lead_in_raster_order(self):
        source = TokenGrid(np.array([7, 8, 9, 10]), 2, 2)
        layout = build_zero_shot_layout(_text(), source, np.array([2, 0]))
        assert list(layout.gen_order) == [0, 2, 1, 3]
        assert list(layout.forced_ids) == [7, 9]

    def test_keep_all_means_no_free_steps(self):
        source = TokenGrid(np.arange(4), 2, 2)
        layout = build_zero_shot_layout(_text(), source, np.arange(4))
        assert len(layout.forced_ids) == layout.n_steps == 4

    def test_out_of_range_keep_rejected(self):
        source = TokenGrid(np.arange(4), 2, 2)
        with pytest.raises(InputError):
            build_zero_shot_layout(_text(), source, np.array([4]))
