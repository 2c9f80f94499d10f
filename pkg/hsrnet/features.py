# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from tensor import Tensor


class StageTag(str, Enum):
    # Channel mean of the entry features
    LR_FEATURE = 'lr_feature'
    SOLVER_INPUT = 'solver_input'
    DENOISER_INPUT = 'denoiser_input'
    DENOISER_OUTPUT = 'denoiser_output'
    # Branch outputs of every HEB
    HEB_BRANCH = 'heb_branch'
    # Explored branches 2..4 before the merge conv
    HEB_EXPLORED = 'heb_explored'
    # One map per pooling level of every MSA
    MSA_LEVEL = 'msa_level'


STAGE_TAGS = [tag.value for tag in StageTag]


def parse_stage_tag(value: str) -> StageTag:
    try:
        return StageTag(value)
    except ValueError:
        raise ValueError(
            f'Unknown stage {value}, valid stages: {", ".join(STAGE_TAGS)}'
        ) from None


def reduce_channels(data: np.ndarray, tag: StageTag) -> np.ndarray:
    # First image of the batch, (c, h, w) -> (h, w)
    data = data[0]
    if tag == StageTag.LR_FEATURE:
        return data.mean(axis=0)
    return data.max(axis=0)


def normalize_map(data: np.ndarray) -> np.ndarray:
    lo, hi = data.min(), data.max()
    if hi - lo <= 0:
        return np.zeros_like(data)
    return (data - lo) / (hi - lo)


class HqsNetState:
    """Intermediates of one forward pass.

    u holds the denoised estimates and i_hr the solver outputs; k is the
    number of completed iterations. Stage maps are reduced over channels as
    soon as they are recorded, keyed by the iteration that produced them (0
    for the entry features).
    """

    def __init__(self):
        self.i_lr_feat: Optional[Tensor] = None
        self.ht_i: Optional[Tensor] = None
        self.u: List[Tensor] = []
        self.i_hr: List[Tensor] = []
        self.k = 0
        self.maps: Dict[StageTag, List[Tuple[int, np.ndarray]]] = {}

    def record(self, tag: StageTag, x: Tensor):
        reduced = reduce_channels(x.data, tag)
        self.maps.setdefault(tag, []).append((self.k, reduced))

    def stage_maps(self, tag: StageTag) -> List[Tuple[int, np.ndarray]]:
        return self.maps.get(tag, [])


def dump_features(
    state: HqsNetState,
    tag: StageTag | str,
) -> List[Tuple[str, np.ndarray]]:
    if not isinstance(tag, StageTag):
        tag = parse_stage_tag(tag)

    dumped: List[Tuple[str, np.ndarray]] = []
    index_in_iteration: Dict[int, int] = {}

    for iteration, data in state.stage_maps(tag):
        index = index_in_iteration.get(iteration, 0)
        index_in_iteration[iteration] = index + 1

        name = f'{tag.value}_{iteration}_{index}'
        dumped.append((name, normalize_map(data)))

    return dumped
