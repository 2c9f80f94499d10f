# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

from math import log10

import numpy as np
import pytest

from conftest import smooth_image
from imaging import Image
from metrics import (
    EvalReport,
    EvalRow,
    LssParams,
    format_psnr,
    gaussian_window,
    lss_at,
    lss_centres,
    lss_image,
    plcc,
    psnr,
    srcc,
    ssim,
    ssim_plane,
)
from utils import ShapeError


def constant_image(value: float, size: int = 16) -> Image:
    return Image(np.full((size, size, 3), value))


class TestPsnr:
    def test_known_value(self):
        a = constant_image(0.0)
        b = constant_image(16 / 255)
        value = psnr(a, b, y_only=False)
        assert value == pytest.approx(10 * log10(255**2 / 16**2), abs=1e-9)
        assert format_psnr(value) == '24.0484'

    def test_identical(self):
        img = smooth_image(16, 16)
        assert psnr(img, img) is None
        assert format_psnr(None) == 'identical'

    def test_crop_ignores_border(self):
        a = smooth_image(16, 16)
        pixels = a.pixels.copy()
        pixels[0] = 0.0
        b = Image(pixels)

        assert psnr(a, b, crop=0) is not None
        assert psnr(a, b, crop=1) is None

    def test_y_only_ignores_chroma_balance(self):
        # Same luma, different colour
        a = Image(np.full((8, 8, 3), [0.5, 0.5, 0.5]))
        shift = 0.1
        b_pixels = np.full((8, 8, 3), 0.5)
        b_pixels[..., 0] += shift * 128.553 / 65.481
        b_pixels[..., 1] -= shift
        b = Image(b_pixels)

        luma = psnr(a, b, y_only=True)
        assert luma is None or luma > 200
        assert psnr(a, b, y_only=False) is not None

    def test_symmetric(self, rng):
        a = smooth_image(16, 16)
        b = Image(a.pixels + 0.05 * rng.standard_normal((16, 16, 3)))
        assert psnr(a, b) == psnr(b, a)
        assert psnr(a, b, y_only=False) == psnr(b, a, y_only=False)

    def test_crop_matches_cropped_images(self, rng):
        a = smooth_image(20, 18)
        b = Image(a.pixels + 0.05 * rng.standard_normal((20, 18, 3)))
        assert psnr(a, b, crop=3) == pytest.approx(
            psnr(a.crop(3, 3, 14, 12), b.crop(3, 3, 14, 12)), abs=1e-12
        )

    def test_rejects_dims(self):
        with pytest.raises(ShapeError):
            psnr(constant_image(0.0, 16), constant_image(0.0, 17))

    def test_rejects_crop(self):
        with pytest.raises(ShapeError):
            psnr(constant_image(0.0, 4), constant_image(1.0, 4), crop=2)


def naive_ssim(a: np.ndarray, b: np.ndarray) -> float:
    window = gaussian_window()
    n = window.shape[0]
    c1, c2 = 0.01**2, 0.03**2

    values = []
    for i in range(a.shape[0] - n + 1):
        for j in range(a.shape[1] - n + 1):
            pa = a[i : i + n, j : j + n]
            pb = b[i : i + n, j : j + n]
            mu_a = np.sum(window * pa)
            mu_b = np.sum(window * pb)
            var_a = np.sum(window * pa * pa) - mu_a**2
            var_b = np.sum(window * pb * pb) - mu_b**2
            cov = np.sum(window * pa * pb) - mu_a * mu_b
            values.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(values))


class TestSsim:
    def test_window(self):
        window = gaussian_window()
        assert window.shape == (11, 11)
        assert window.sum() == pytest.approx(1.0)
        assert window[5, 5] == window.max()

    def test_identical(self):
        img = smooth_image(24, 20)
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_matches_naive(self, rng):
        a = rng.uniform(size=(14, 15))
        b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
        assert ssim_plane(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-10)

    def test_constant_offset(self):
        value = ssim(constant_image(0.3), constant_image(0.5), y_only=False)
        c1 = 0.01**2
        expected = (2 * 0.3 * 0.5 + c1) / (0.3**2 + 0.5**2 + c1)
        assert value == pytest.approx(expected, abs=1e-9)

    def test_noise_lowers(self, rng):
        clean = smooth_image(32, 32)
        noisy = Image(clean.pixels + 0.1 * rng.standard_normal((32, 32, 3)))
        assert ssim(clean, noisy) < 0.99

    def test_symmetric(self, rng):
        a = smooth_image(24, 20)
        b = Image(a.pixels + 0.05 * rng.standard_normal((24, 20, 3)))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_crop_ignores_border(self, rng):
        a = smooth_image(24, 20)
        b = Image(a.pixels + 0.05 * rng.standard_normal((24, 20, 3)))
        a_pixels = a.pixels.copy()
        b_pixels = b.pixels.copy()
        a_pixels[:2] = 0.0
        b_pixels[:, -2:] = 1.0

        expected = ssim(a.crop(2, 2, 20, 16), b.crop(2, 2, 20, 16))
        assert ssim(a, b, crop=2) == pytest.approx(expected, abs=1e-12)
        assert ssim(Image(a_pixels), Image(b_pixels), crop=2) == (
            pytest.approx(expected, abs=1e-12)
        )

    def test_rejects_small(self):
        with pytest.raises(ShapeError):
            ssim(constant_image(0.1, 10), constant_image(0.2, 10))


def naive_lss(
    lightness: np.ndarray,
    ip,
    patch: int = 5,
    tiles: int = 8,
    c: float = 100.0,
) -> float:
    row, col = ip
    half = patch // 2
    centre = lightness[row - half : row + half + 1, col - half : col + half + 1]

    best = 0.0
    start = -half - (tiles - 1) // 2 * patch
    for ty in range(tiles):
        for tx in range(tiles):
            top = row + start + ty * patch
            left = col + start + tx * patch
            if (top, left) == (row - half, col - half):
                continue
            tile = lightness[top : top + patch, left : left + patch]
            ssd = np.mean(((tile - centre) / c) ** 2)
            best = max(best, float(np.exp(-ssd)))
    return best


class TestLss:
    def test_params(self):
        params = LssParams()
        assert params.tiles_per_side == 8
        assert params.self_tile == 3
        assert params.region_start == -17

    @pytest.mark.parametrize(
        'kwargs', [{'patch': 4}, {'region': 42}, {'region': 5}, {'c': 0}]
    )
    def test_rejects_params(self, kwargs):
        with pytest.raises(ValueError):
            LssParams(**kwargs)

    def test_constant(self):
        assert lss_image(constant_image(0.4, 40)) == 1.0

    def test_periodic(self):
        tile = np.random.default_rng(5).uniform(size=(5, 5, 3))
        img = Image(np.tile(tile, (8, 8, 1)))
        assert lss_image(img) == pytest.approx(1.0, abs=1e-15)

    def test_noise_below_periodic(self, rng):
        img = Image(rng.uniform(size=(40, 40, 3)))
        assert lss_image(img) < 1.0

    def test_matches_naive(self, rng):
        lightness = 100 * rng.uniform(size=(40, 40))
        value = lss_at(lightness, (17, 17), LssParams())
        assert value == pytest.approx(
            naive_lss(lightness, (17, 17)), abs=1e-12
        )

    def test_self_tile_excluded(self):
        # Everything but the self tile differs from the centre patch
        lightness = np.full((40, 40), 100.0)
        lightness[15:20, 15:20] = 0.0
        assert lss_at(lightness, (17, 17), LssParams()) == pytest.approx(
            np.exp(-1.0)
        )

    def test_translation(self, rng):
        lightness = 100 * rng.uniform(size=(60, 60))
        window = lightness[5:45, 7:47]
        assert lss_at(window, (17, 17), LssParams()) == pytest.approx(
            lss_at(lightness, (22, 24), LssParams()), abs=1e-15
        )

    def test_centres(self):
        params = LssParams()
        assert lss_centres(85, 85, params) == [
            (17, 17),
            (17, 57),
            (57, 17),
            (57, 57),
        ]
        assert len(lss_centres(40, 79, params)) == 1

    def test_rejects_small(self):
        with pytest.raises(ShapeError):
            lss_image(constant_image(0.5, 39))

    def test_rejects_region_outside(self):
        with pytest.raises(ShapeError):
            lss_at(np.zeros((40, 40)), (16, 17), LssParams())


class TestCorrelation:
    def test_linear(self):
        x = [1.0, 2.0, 3.0, 4.0]
        y = [2.0, 4.0, 6.0, 8.0]
        assert plcc(x, y) == pytest.approx(1.0)
        assert srcc(x, y) == pytest.approx(1.0)

    def test_monotone(self):
        x = [1.0, 2.0, 3.0, 4.0, 5.0]
        y = [v**3 for v in x]
        assert srcc(x, y) == pytest.approx(1.0)
        assert plcc(x, y) < 1.0

    def test_reversed(self):
        x = [1.0, 2.0, 3.0]
        assert srcc(x, x[::-1]) == pytest.approx(-1.0)

    def test_ties(self):
        assert srcc([1.0, 1.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0]) == (
            pytest.approx(0.9486832980505138, abs=1e-12)
        )

    def test_srcc_rank_only(self, rng):
        x = rng.uniform(size=12)
        y = rng.uniform(size=12)
        expected = srcc(x, y)
        assert srcc(np.exp(x), y) == pytest.approx(expected, abs=1e-12)
        assert srcc(x, y**3 - 2.0) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize(
        'x, y',
        [
            ([1.0, 2.0], [1.0, 2.0]),
            ([1.0, 2.0, 3.0], [1.0, 2.0]),
            ([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]),
        ],
    )
    def test_rejects(self, x, y):
        with pytest.raises(ValueError):
            plcc(x, y)
        with pytest.raises(ValueError):
            srcc(x, y)


class TestEvalReport:
    def test_sorted_means(self):
        report = EvalReport(
            [
                EvalRow(name='b.png', psnr=30.0, ssim=0.8, lss=0.9),
                EvalRow(name='a.png', psnr=None, ssim=1.0, lss=0.7),
                EvalRow(name='c.png', psnr=20.0, ssim=0.6, lss=0.8),
            ]
        )
        assert [r.name for r in report.rows] == ['a.png', 'b.png', 'c.png']
        assert report.mean_psnr() == pytest.approx(25.0)
        assert report.mean_ssim() == pytest.approx(0.8)
        assert report.mean_bicubic_psnr() is None

    def test_correlation_skips_identical(self):
        report = EvalReport(
            [
                EvalRow(name='a', psnr=None, ssim=1.0, lss=0.1),
                EvalRow(name='b', psnr=20.0, ssim=0.5, lss=0.2),
                EvalRow(name='c', psnr=25.0, ssim=0.6, lss=0.3),
                EvalRow(name='d', psnr=30.0, ssim=0.7, lss=0.5),
            ]
        )
        pearson, spearman = report.correlation()
        assert spearman == pytest.approx(1.0)
        assert 0.9 < pearson <= 1.0

    def test_correlation_per_source(self):
        report = EvalReport(
            [
                EvalRow(name='a', psnr=20.0, ssim=0.5, lss=0.2, lss_hr=0.9),
                EvalRow(
                    name='b',
                    psnr=25.0,
                    ssim=0.6,
                    lss=0.3,
                    lss_lr=0.4,
                    lss_hr=0.6,
                ),
                EvalRow(
                    name='c',
                    psnr=30.0,
                    ssim=0.7,
                    lss=0.5,
                    lss_lr=0.1,
                    lss_hr=0.3,
                ),
            ],
            with_source_lss=True,
        )
        assert report.correlation('sr')[1] == pytest.approx(1.0)
        assert report.correlation('hr')[1] == pytest.approx(-1.0)
        # Only two rows carry an LR value
        assert report.correlation('lr') is None
        assert report.mean_lss('lr') == pytest.approx(0.25)

    def test_unknown_source(self):
        row = EvalRow(name='a', psnr=20.0, ssim=0.5, lss=None)
        assert row.lss_of('hr') is None
        with pytest.raises(ValueError, match='sr, lr, hr'):
            row.lss_of('bicubic')
