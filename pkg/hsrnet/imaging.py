# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

from fractions import Fraction
from functools import cache
from math import ceil
from pathlib import Path
from typing import Dict

import numpy as np
from PIL import Image as PILImage
from skimage.color import rgb2lab

from utils import DataError, ShapeError, atomic_output, shape_str

CUBIC_A = -0.5
CUBIC_WIDTH = 4.0

# Pillow modes promoted to RGB on load
PROMOTED_MODES = ['L', 'LA', 'P', 'PA', '1', 'RGBA']

SAVE_FORMATS: Dict[str, str] = {
    '.png': 'PNG',
    '.ppm': 'PPM',
}


class Image:
    def __init__(self, pixels: np.ndarray):
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ShapeError(
                f'Image expects (h, w, 3) pixels, got {shape_str(pixels.shape)}'
            )
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ShapeError(f'Empty image {shape_str(pixels.shape)}')

        self.pixels = np.clip(pixels, 0.0, 1.0)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def crop(self, top: int, left: int, height: int, width: int) -> Image:
        return Image(self.pixels[top : top + height, left : left + width])

    def __eq__(self, other: object):
        if not isinstance(other, Image):
            return False
        return np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f'Image({self.height}x{self.width})'


def load(path: str | Path) -> Image:
    with PILImage.open(path) as image:
        image_format = image.format
        if image_format not in SAVE_FORMATS.values():
            raise DataError(f'{path}: unsupported format {image_format}')

        mode = image.mode
        if mode in PROMOTED_MODES:
            image = image.convert('RGB')
        elif mode != 'RGB':
            raise DataError(
                f'{path}: unsupported {image_format} mode {mode}, '
                f'only 8-bit images are supported'
            )

        data = np.asarray(image, dtype=np.uint8)

    return Image(data.astype(np.float64) / 255.0)


def quantize(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def save(img: Image, path: str | Path):
    path = Path(path)
    image_format = SAVE_FORMATS.get(path.suffix.lower())
    if image_format is None:
        raise DataError(
            f'{path}: unsupported output suffix {path.suffix}, '
            f'expected one of {", ".join(SAVE_FORMATS)}'
        )

    image = PILImage.fromarray(quantize(img.pixels))
    with atomic_output(path) as tmp_path:
        image.save(tmp_path, format=image_format)


def cubic(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    absx = np.abs(x)
    absx2 = absx * absx
    absx3 = absx2 * absx

    near = ((a + 2) * absx3 - (a + 3) * absx2 + 1) * (absx <= 1)
    far = (a * absx3 - 5 * a * absx2 + 8 * a * absx - 4 * a) * (
        (absx > 1) & (absx <= 2)
    )
    return near + far


@cache
def resize_weights(
    in_len: int,
    out_len: int,
    scale: float,
    antialias: bool,
) -> np.ndarray:
    """Dense (out_len, in_len) cubic resampling matrix.

    Output pixel centres map back with half-pixel alignment, and taps
    falling outside the input are clamped onto the border pixels.
    """
    if antialias and scale < 1:
        width = CUBIC_WIDTH / scale

        def kernel(x):
            return scale * cubic(scale * x)
    else:
        width = CUBIC_WIDTH
        kernel = cubic

    # 1-based coordinates
    x = np.arange(1, out_len + 1, dtype=np.float64)[:, np.newaxis]
    u = x / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - width / 2)
    taps = int(ceil(width)) + 2

    indices = left + np.arange(taps)[np.newaxis, :]
    weights = kernel(u - indices)
    weights /= weights.sum(axis=1, keepdims=True)
    indices = np.clip(indices - 1, 0, in_len - 1).astype(int)

    matrix = np.zeros((out_len, in_len))
    rows = np.repeat(np.arange(out_len), taps)
    np.add.at(matrix, (rows, indices.reshape(-1)), weights.reshape(-1))

    assert np.allclose(matrix.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    matrix.setflags(write=False)

    return matrix


def resize_axis(
    data: np.ndarray,
    axis: int,
    out_len: int,
    scale: float,
    antialias: bool,
) -> np.ndarray:
    weights = resize_weights(data.shape[axis], out_len, scale, antialias)
    out = np.tensordot(weights, data, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def output_size(length: int, scale: Fraction) -> int:
    return ceil(length * scale)


def resize_array(
    data: np.ndarray,
    scale: Fraction | int,
    antialias: bool = True,
) -> np.ndarray:
    """Resize the first two axes of data, unclamped."""
    scale = Fraction(scale)
    if scale <= 0:
        raise ValueError(f'Resize scale must be positive, got {scale}')

    out_h = output_size(data.shape[0], scale)
    out_w = output_size(data.shape[1], scale)
    if out_h < 1 or out_w < 1:
        raise ShapeError(
            f'Resizing {shape_str(data.shape)} by {scale} gives an empty image'
        )

    out = resize_axis(data, 0, out_h, float(scale), antialias)
    return resize_axis(out, 1, out_w, float(scale), antialias)


def bicubic_resize(
    img: Image,
    scale: Fraction | int,
    antialias: bool = True,
) -> Image:
    return Image(resize_array(img.pixels, scale, antialias))


def rgb_to_y(img: Image) -> np.ndarray:
    pixels = img.pixels
    return (
        16.0
        + 65.481 * pixels[..., 0]
        + 128.553 * pixels[..., 1]
        + 24.966 * pixels[..., 2]
    ) / 255.0


def rgb_to_lab(img: Image) -> np.ndarray:
    # sRGB, D65 white
    return rgb2lab(img.pixels)
