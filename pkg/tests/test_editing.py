import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_config, tiny_tokenizer
from nextedit.data import render_scene, sample_edit_triple, sample_scene
from nextedit.editing import (EditRequest, EditResult, fill_back, multi_turn_edit,
                              nep_edit, outside_mask_checksum, zero_shot_edit)
from nextedit.errors import ConfigError, InputError
from nextedit.model import ImageTokenModel, SamplerConfig
from nextedit.rng import make_rng
from nextedit.tokenizer import TokenGrid, encode_image, patchify_mask


@pytest.fixture(scope="module")
def setup():
    tok = tiny_tokenizer()
    model = ImageTokenModel(tiny_config(edit_tokens=True), seed=13)
    return model, tok


def _mask_pixels(tok, patches):
    patch = np.zeros(tok.grid_tokens, dtype=np.uint8)
    patch[list(patches)] = 1
    from nextedit.tokenizer import mask_from_patches
    return mask_from_patches(patch, tok).pixel


def _scene_image(tok, seed=0):
    return render_scene(sample_scene(make_rng(seed), tok, n_objects=1), tok)


class TestNepEdit:
    def test_requires_stage2_model(self, setup):
        _, tok = setup
        stage1 = ImageTokenModel(tiny_config(edit_tokens=False), seed=0)
        req = EditRequest(image=_scene_image(tok), instruction="recolor the square to blue")
        with pytest.raises(ConfigError):
            nep_edit(stage1, tok, req)

    def test_empty_mask_regenerates_everything(self, setup):
        model, tok = setup
        req = EditRequest(image=_scene_image(tok), instruction="recolor the square to blue",
                          mask_pixels=None)
        result = nep_edit(model, tok, req)
        assert result.steps == tok.grid_tokens == result.edit_count

    def test_masked_edit_touches_only_masked_patches(self, setup):
        model, tok = setup
        image = _scene_image(tok, seed=1)
        source_ids = encode_image(image, tok).ids
        mask_pixels = _mask_pixels(tok, [2, 5, 11])
        req = EditRequest(image=image, instruction="recolor the square to red",
                          mask_pixels=mask_pixels, seed=3)
        result = nep_edit(model, tok, req)
        assert result.steps == 3
        assert list(result.positions) == [2, 5, 11]
        untouched = np.setdiff1d(np.arange(16), result.positions)
        assert np.array_equal(result.grid.ids[untouched], source_ids[untouched])

    @given(st.integers(0, 2**31))
    @settings(max_examples=15, deadline=None)
    def test_pixels_outside_mask_byte_identical(self, seed):
        tok = tiny_tokenizer()
        model = ImageTokenModel(tiny_config(edit_tokens=True), seed=13)
        rng = make_rng(seed)
        image = render_scene(sample_scene(rng, tok, n_objects=1), tok)
        pixel_mask = (rng.random((tok.image_h, tok.image_w)) < 0.15).astype(np.uint8)
        req = EditRequest(image=image, instruction="add a blue circle",
                          mask_pixels=pixel_mask, seed=seed & 0xFFFF,
                          sampler=SamplerConfig(temperature=1.0))
        result = nep_edit(model, tok, req)
        patch = patchify_mask(pixel_mask, tok).patch
        outside = np.repeat(np.repeat((patch == 0).reshape(4, 4), 4, 0), 4, 1)
        assert np.array_equal(result.image[outside], image[outside])
        assert outside_mask_checksum(result.image, patch, tok) == \
            outside_mask_checksum(image, patch, tok)

    def test_deterministic_under_seed(self, setup):
        model, tok = setup
        image = _scene_image(tok, seed=4)
        req = dict(image=image, instruction="remove the circle",
                   mask_pixels=_mask_pixels(tok, [1, 2]),
                   sampler=SamplerConfig(temperature=1.0), seed=77)
        a = nep_edit(model, tok, EditRequest(**req))
        b = nep_edit(model, tok, EditRequest(**req))
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.generated_ids, b.generated_ids)

    def test_malformed_mask_rejected(self, setup):
        model, tok = setup
        req = EditRequest(image=_scene_image(tok), instruction="remove the bar",
                          mask_pixels=np.ones((3, 3), dtype=np.uint8))
        with pytest.raises(InputError):
            nep_edit(model, tok, req)

    def test_unknown_instruction_word_rejected(self, setup):
        model, tok = setup
        req = EditRequest(image=_scene_image(tok), instruction="defenestrate everything")
        with pytest.raises(InputError):
            nep_edit(model, tok, req)


class TestZeroShot:
    def test_keep_all_reproduces_source(self, setup):
        _, tok = setup
        stage1 = ImageTokenModel(tiny_config(edit_tokens=False), seed=13)
        source = encode_image(_scene_image(tok, seed=5), tok)
        result = zero_shot_edit(stage1, tok, source, np.arange(16), "recolor the bar to red")
        assert np.array_equal(result.grid.ids, source.ids)
        assert result.steps == 0

    def test_keep_none_is_unconditional_regeneration(self, setup):
        _, tok = setup
        stage1 = ImageTokenModel(tiny_config(edit_tokens=False), seed=13)
        source = encode_image(_scene_image(tok, seed=6), tok)
        result = zero_shot_edit(stage1, tok, source, np.array([], dtype=np.int64),
                                "add a red square", sampler=SamplerConfig(temperature=1.0))
        assert result.steps == 16 and len(result.positions) == 16

    def test_kept_positions_never_resampled(self, setup):
        _, tok = setup
        stage1 = ImageTokenModel(tiny_config(edit_tokens=False), seed=13)
        source = encode_image(_scene_image(tok, seed=7), tok)
        keep = np.array([0, 3, 8, 15])
        result = zero_shot_edit(stage1, tok, source, keep, "remove the square",
                                sampler=SamplerConfig(temperature=1.0), seed=5)
        assert np.array_equal(result.grid.ids[keep], source.ids[keep])
        assert result.steps == 12


class TestMultiTurn:
    def test_single_turn_equals_direct_edit(self, setup):
        model, tok = setup
        image = _scene_image(tok, seed=8)
        mask = _mask_pixels(tok, [4, 5])
        direct = nep_edit(model, tok, EditRequest(
            image=image, instruction="recolor the square to green", mask_pixels=mask, seed=9))
        chained = multi_turn_edit(model, tok, image,
                                  [(mask, "recolor the square to green")], seed=9)
        assert len(chained) == 1
        assert np.array_equal(chained[0].image, direct.image)

    def test_disjoint_turns_preserve_everything_else(self, setup):
        model, tok = setup
        image = _scene_image(tok, seed=9)
        turns = [(_mask_pixels(tok, [0, 1]), "recolor the square to red"),
                 (_mask_pixels(tok, [14, 15]), "recolor the square to blue")]
        results = multi_turn_edit(model, tok, image, turns, seed=11)
        outside = np.repeat(np.repeat(
            np.isin(np.arange(16), [0, 1, 14, 15], invert=True).reshape(4, 4), 4, 0), 4, 1)
        assert np.array_equal(results[-1].image[outside], image[outside])

    def test_overlapping_turns_take_latest_tokens(self, setup):
        model, tok = setup
        image = _scene_image(tok, seed=10)
        turns = [(_mask_pixels(tok, [5, 6]), "recolor the square to red"),
                 (_mask_pixels(tok, [6, 7]), "recolor the square to blue")]
        results = multi_turn_edit(model, tok, image, turns, seed=12)
        # overlap position 6 must carry turn-2 output
        second = results[1]
        idx = list(second.positions).index(6)
        assert results[-1].grid.ids[6] == second.generated_ids[idx]

    def test_empty_turn_list_rejected(self, setup):
        model, tok = setup
        with pytest.raises(InputError):
            multi_turn_edit(model, tok, _scene_image(tok), [])


class TestFillBack:
    def test_replaces_exactly_given_positions(self):
        source = TokenGrid(np.arange(16), 4, 4)
        out = fill_back(source, np.array([3, 9]), np.array([60, 61]))
        assert out.ids[3] == 60 and out.ids[9] == 61
        rest = np.setdiff1d(np.arange(16), [3, 9])
        assert np.array_equal(out.ids[rest], source.ids[rest])
        assert np.array_equal(source.ids, np.arange(16))  # source untouched
