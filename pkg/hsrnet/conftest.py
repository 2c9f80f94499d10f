# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

TOOL_DIR = Path(__file__).resolve().parent
CONFIGS_DIR = TOOL_DIR / 'configs'

if str(TOOL_DIR) not in sys.path:
    sys.path.insert(0, str(TOOL_DIR))

from config import HsrConfig  # noqa: E402
from imaging import Image, save  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def configs_dir():
    return CONFIGS_DIR


@pytest.fixture
def tiny_config():
    return HsrConfig(channels=16, n_blocks=2, iterations=2, scale=2)


def smooth_image(height: int, width: int, phase: float = 0.0) -> Image:
    y, x = np.mgrid[0:height, 0:width] / max(height, width)
    pixels = np.stack(
        [
            0.5 + 0.3 * np.sin(2 * np.pi * (x + phase)),
            0.5 + 0.3 * np.cos(2 * np.pi * (y - phase)),
            0.2 + 0.6 * x * y,
        ],
        axis=-1,
    )
    return Image(pixels)


def textured_image(height: int, width: int) -> Image:
    # Periods of 4 to 7 pixels, close to the LR Nyquist limit at scale 2
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    pixels = np.stack(
        [
            0.5 + 0.3 * np.sin(2 * np.pi * x / 5),
            0.5 + 0.3 * np.cos(2 * np.pi * (x + y) / 7),
            0.5 + 0.2 * np.sin(2 * np.pi * y / 4) * np.cos(np.pi * x / 6),
        ],
        axis=-1,
    )
    return Image(pixels)


@pytest.fixture
def hr_dir(tmp_path):
    directory = tmp_path / 'hr'
    directory.mkdir()
    save(smooth_image(32, 32), directory / 'a.png')
    save(smooth_image(40, 36, phase=0.25), directory / 'b.png')
    return directory
