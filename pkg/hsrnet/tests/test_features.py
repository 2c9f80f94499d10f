# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from PIL import Image as PILImage

from features import (
    STAGE_TAGS,
    HqsNetState,
    StageTag,
    dump_features,
    normalize_map,
    parse_stage_tag,
    reduce_channels,
)
from output import save_feature_map
from tensor import Tensor


def test_parse_stage_tag():
    assert parse_stage_tag('msa_level') is StageTag.MSA_LEVEL
    with pytest.raises(ValueError, match='valid stages'):
        parse_stage_tag('attention')
    assert len(STAGE_TAGS) == len(StageTag)


def test_reduce_channels(rng):
    data = rng.standard_normal((2, 5, 3, 4))
    assert_allclose(
        reduce_channels(data, StageTag.LR_FEATURE), data[0].mean(axis=0)
    )
    assert_array_equal(
        reduce_channels(data, StageTag.HEB_BRANCH), data[0].max(axis=0)
    )


def test_normalize_map(rng):
    data = rng.standard_normal((6, 7))
    out = normalize_map(data)
    assert out.min() == 0.0 and out.max() == 1.0
    assert_array_equal(normalize_map(np.full((3, 3), 2.5)), 0)


def test_dump_names(rng):
    state = HqsNetState()
    state.record(StageTag.LR_FEATURE, Tensor(rng.standard_normal((1, 4, 3, 3))))
    for k in [1, 1, 2]:
        state.k = k
        state.record(
            StageTag.MSA_LEVEL, Tensor(rng.standard_normal((1, 4, 3, 3)))
        )

    names = [name for name, _ in dump_features(state, 'msa_level')]
    assert names == ['msa_level_1_0', 'msa_level_1_1', 'msa_level_2_0']
    assert [n for n, _ in dump_features(state, StageTag.LR_FEATURE)] == [
        'lr_feature_0_0'
    ]
    assert dump_features(state, StageTag.HEB_EXPLORED) == []


def test_save_feature_map(tmp_path):
    data = np.linspace(0, 1, 12).reshape(3, 4)
    path = tmp_path / 'maps' / 'map.png'
    save_feature_map(path, data)

    with PILImage.open(path) as image:
        assert image.mode == 'L'
        assert image.size == (4, 3)
        pixels = np.asarray(image)
    assert pixels[0, 0] == 0 and pixels[-1, -1] == 255
