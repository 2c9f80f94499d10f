# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

from math import log10
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import convolve2d
from scipy.stats import pearsonr, spearmanr

from imaging import Image, rgb_to_lab, rgb_to_y
from utils import ShapeError, shape_str

IDENTICAL = 'identical'

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

MIN_CORRELATION_SAMPLES = 3
LSS_SOURCES = ['sr', 'lr', 'hr']


def _check_same_dims(a: Image, b: Image):
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(
            f'Image dimensions differ: {shape_str(a.pixels.shape)} '
            f'vs {shape_str(b.pixels.shape)}'
        )


def _crop_border(data: np.ndarray, crop: int) -> np.ndarray:
    if crop < 0:
        raise ValueError(f'crop must be >= 0, got {crop}')
    if crop == 0:
        return data

    h, w = data.shape[:2]
    if 2 * crop >= min(h, w):
        raise ShapeError(
            f'Border crop {crop} leaves nothing of a {h}x{w} image'
        )
    return data[crop:-crop, crop:-crop]


def _planes(img: Image, y_only: bool, crop: int) -> List[np.ndarray]:
    if y_only:
        return [_crop_border(rgb_to_y(img), crop)]

    pixels = _crop_border(img.pixels, crop)
    return [pixels[..., c] for c in range(pixels.shape[2])]


def format_psnr(value: Optional[float]) -> str:
    if value is None:
        return IDENTICAL
    return f'{value:.4f}'


def format_score(value: Optional[float]) -> str:
    if value is None:
        return ''
    return f'{value:.6f}'


def psnr(
    a: Image,
    b: Image,
    crop: int = 0,
    y_only: bool = True,
) -> Optional[float]:
    """PSNR in dB for [0, 1] images, None when they are identical."""
    _check_same_dims(a, b)

    pa = np.stack(_planes(a, y_only, crop))
    pb = np.stack(_planes(b, y_only, crop))
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0:
        return None

    return 10 * log10(1.0 / mse)


def gaussian_window(
    size: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
) -> np.ndarray:
    m = (size - 1) / 2
    y, x = np.ogrid[-m : m + 1, -m : m + 1]
    h = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    h[h < np.finfo(h.dtype).eps * h.max()] = 0
    return h / h.sum()


def _filter_valid(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    return convolve2d(x, np.rot90(window, 2), mode='valid')


def ssim_plane(a: np.ndarray, b: np.ndarray) -> float:
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    window = gaussian_window()

    mu1 = _filter_valid(a, window)
    mu2 = _filter_valid(b, window)
    mu1_sq = mu1 * mu1
    mu2_sq = mu2 * mu2
    mu1_mu2 = mu1 * mu2
    sigma1_sq = _filter_valid(a * a, window) - mu1_sq
    sigma2_sq = _filter_valid(b * b, window) - mu2_sq
    sigma12 = _filter_valid(a * b, window) - mu1_mu2

    ssim_map = ((2 * mu1_mu2 + c1) * (2 * sigma12 + c2)) / (
        (mu1_sq + mu2_sq + c1) * (sigma1_sq + sigma2_sq + c2)
    )
    return float(np.mean(ssim_map))


def ssim(a: Image, b: Image, y_only: bool = True, crop: int = 0) -> float:
    _check_same_dims(a, b)

    planes_a = _planes(a, y_only, crop)
    planes_b = _planes(b, y_only, crop)
    h, w = planes_a[0].shape
    if min(h, w) < SSIM_WINDOW:
        raise ShapeError(
            f'SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}'
        )

    values = [ssim_plane(pa, pb) for pa, pb in zip(planes_a, planes_b)]
    return float(np.mean(values))


class LssParams:
    def __init__(
        self,
        *,
        patch: int = 5,
        region: int = 40,
        # Full CIELAB lightness range
        c: float = 100.0,
    ):
        if patch < 1 or patch % 2 == 0:
            raise ValueError(f'LSS patch must be odd, got {patch}')
        if region % patch:
            raise ValueError(
                f'LSS region {region} is not divisible by patch {patch}'
            )
        if region // patch < 2:
            raise ValueError(f'LSS region {region} holds a single tile')
        if c <= 0:
            raise ValueError(f'LSS normalization must be positive, got {c}')

        self.patch = patch
        self.region = region
        self.c = c

    @property
    def tiles_per_side(self):
        return self.region // self.patch

    @property
    def self_tile(self):
        return (self.tiles_per_side - 1) // 2

    @property
    def region_start(self):
        # Offset of the region from ip, p_lss is tile (self_tile, self_tile)
        return -(self.patch // 2) - self.self_tile * self.patch


def _tile_grid(
    lightness: np.ndarray,
    ip: Tuple[int, int],
    params: LssParams,
) -> Tuple[np.ndarray, np.ndarray]:
    row, col = ip
    h, w = lightness.shape
    top = row + params.region_start
    left = col + params.region_start
    if (
        top < 0
        or left < 0
        or top + params.region > h
        or left + params.region > w
    ):
        raise ShapeError(
            f'LSS region at {ip} does not fit the {h}x{w} image'
        )

    n, p = params.tiles_per_side, params.patch
    region = lightness[top : top + params.region, left : left + params.region]
    tiles = region.reshape(n, p, n, p).transpose(0, 2, 1, 3)

    half = p // 2
    patch = lightness[row - half : row + half + 1, col - half : col + half + 1]

    return tiles, patch


def lss_at(
    lightness: np.ndarray,
    ip: Tuple[int, int],
    params: LssParams,
) -> float:
    """Best exp(-SSD) of the patch at ip against the non-self region tiles.

    lightness is the CIELAB L plane; SSD is the mean squared difference of
    L / c.
    """
    tiles, patch = _tile_grid(lightness, ip, params)

    diff = (tiles - patch) / params.c
    ssd = np.mean(diff * diff, axis=(2, 3))

    # Only the self tile overlaps p_lss on the aligned grid
    keep = np.ones(ssd.shape, dtype=bool)
    keep[params.self_tile, params.self_tile] = False
    assert keep.sum() == params.tiles_per_side**2 - 1

    return float(np.max(np.exp(-ssd[keep])))


def lss_centres(
    height: int,
    width: int,
    params: LssParams,
) -> List[Tuple[int, int]]:
    if min(height, width) < params.region:
        raise ShapeError(
            f'LSS needs at least {params.region}x{params.region}, '
            f'got {height}x{width}'
        )

    offset = -params.region_start
    return [
        (top + offset, left + offset)
        for top in range(0, height - params.region + 1, params.region)
        for left in range(0, width - params.region + 1, params.region)
    ]


def lss_image(img: Image, params: Optional[LssParams] = None) -> float:
    if params is None:
        params = LssParams()

    centres = lss_centres(img.height, img.width, params)
    lightness = rgb_to_lab(img)[..., 0]
    values = [lss_at(lightness, ip, params) for ip in centres]
    return float(np.mean(values))


def _check_series(x: Sequence[float], y: Sequence[float]):
    if len(x) != len(y):
        raise ValueError(f'Series lengths differ: {len(x)} vs {len(y)}')
    if len(x) < MIN_CORRELATION_SAMPLES:
        raise ValueError(
            f'Correlation needs at least {MIN_CORRELATION_SAMPLES} samples, '
            f'got {len(x)}'
        )
    for name, series in [('x', x), ('y', y)]:
        if np.ptp(np.asarray(series, dtype=np.float64)) == 0:
            raise ValueError(f'Series {name} is constant')


def plcc(x: Sequence[float], y: Sequence[float]) -> float:
    _check_series(x, y)
    return float(pearsonr(x, y).statistic)


def srcc(x: Sequence[float], y: Sequence[float]) -> float:
    # Average ranks on ties
    _check_series(x, y)
    return float(spearmanr(x, y).statistic)


class EvalRow:
    def __init__(
        self,
        *,
        name: str,
        psnr: Optional[float],
        ssim: float,
        lss: Optional[float],
        lss_lr: Optional[float] = None,
        lss_hr: Optional[float] = None,
        bicubic_psnr: Optional[float] = None,
    ):
        self.name = name
        self.psnr = psnr
        self.ssim = ssim
        # None where the image is smaller than one LSS region
        self.lss = lss
        self.lss_lr = lss_lr
        self.lss_hr = lss_hr
        self.bicubic_psnr = bicubic_psnr

    def lss_of(self, source: str) -> Optional[float]:
        match source:
            case 'sr':
                return self.lss
            case 'lr':
                return self.lss_lr
            case 'hr':
                return self.lss_hr
            case _:
                raise ValueError(
                    f'Unknown LSS source {source}, '
                    f'valid sources: {", ".join(LSS_SOURCES)}'
                )


class EvalReport:
    def __init__(
        self,
        rows: List[EvalRow],
        with_baseline: bool = False,
        with_source_lss: bool = False,
    ):
        self.rows = sorted(rows, key=lambda r: r.name)
        self.with_baseline = with_baseline
        self.with_source_lss = with_source_lss

    def _mean(self, values: List[Optional[float]]) -> Optional[float]:
        finite = [v for v in values if v is not None]
        if not finite:
            return None
        return float(np.mean(finite))

    def mean_psnr(self) -> Optional[float]:
        return self._mean([r.psnr for r in self.rows])

    def mean_ssim(self) -> Optional[float]:
        return self._mean([r.ssim for r in self.rows])

    def mean_lss(self, source: str = 'sr') -> Optional[float]:
        return self._mean([r.lss_of(source) for r in self.rows])

    def mean_bicubic_psnr(self) -> Optional[float]:
        return self._mean([r.bicubic_psnr for r in self.rows])

    def correlation(
        self,
        source: str = 'sr',
    ) -> Optional[Tuple[float, float]]:
        """PLCC and SRCC between PSNR and the LSS of one image source.

        Identical images and missing LSS values are left out; None when
        fewer than MIN_CORRELATION_SAMPLES rows remain.
        """
        pairs = [
            (r.psnr, r.lss_of(source))
            for r in self.rows
            if r.psnr is not None and r.lss_of(source) is not None
        ]
        if len(pairs) < MIN_CORRELATION_SAMPLES:
            return None

        psnrs = [p for p, _ in pairs]
        lsss = [s for _, s in pairs]
        return plcc(psnrs, lsss), srcc(psnrs, lsss)
