# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import smooth_image
from hqs import (
    DegradationOperator,
    HqsConfig,
    denoise_prox,
    hqs_run,
    initial_estimate,
    laplacian,
    ls_solve,
    objective,
)
from imaging import Image
from metrics import psnr
from utils import NumericError, ShapeError


def dense_matrix(fn, shape) -> np.ndarray:
    size = int(np.prod(shape))
    columns = []
    for i in range(size):
        basis = np.zeros(size)
        basis[i] = 1.0
        columns.append(fn(basis.reshape(shape)).reshape(-1))
    return np.stack(columns, axis=1)


def asymmetric_kernel(rng) -> np.ndarray:
    kernel = rng.uniform(size=(3, 5))
    return kernel / kernel.sum()


class TestDegradationOperator:
    def test_delta_is_identity(self, rng):
        x = rng.uniform(size=(6, 7))
        assert_array_equal(DegradationOperator.delta().apply(x), x)

    def test_delta_decimates(self, rng):
        x = rng.uniform(size=(8, 6, 3))
        op = DegradationOperator.delta(2)
        assert_array_equal(op.apply(x), x[::2, ::2])

    def test_gaussian_kernel(self):
        op = DegradationOperator.gaussian(1.0)
        assert op.kernel.shape == (7, 7)
        assert op.kernel.sum() == pytest.approx(1.0, abs=1e-12)
        assert_allclose(op.kernel, op.kernel.T)

    @pytest.mark.parametrize('channels', [None, 3])
    def test_adjoint(self, rng, channels):
        ops = [
            DegradationOperator.gaussian(1.0, scale=2),
            DegradationOperator(asymmetric_kernel(rng), 3),
        ]
        for op in ops:
            hr_shape = (12, 18) if channels is None else (12, 18, channels)
            for _ in range(25):
                x = rng.standard_normal(hr_shape)
                y = rng.standard_normal(op.lr_shape(hr_shape))
                lhs = np.vdot(op.apply(x), y)
                rhs = np.vdot(x, op.adjoint(y))
                assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)

    def test_constant(self):
        op = DegradationOperator.gaussian(1.5, scale=2)
        out = op.apply(np.full((10, 8), 0.7))
        assert out.shape == (5, 4)
        assert_allclose(out, 0.7, rtol=0, atol=1e-12)

    @pytest.mark.parametrize(
        'kernel', [np.ones((2, 3)) / 6, np.full((3, 3), 0.2), np.ones(3) / 3]
    )
    def test_rejects_kernel(self, kernel):
        with pytest.raises(ValueError):
            DegradationOperator(kernel, 2)

    def test_rejects_shape(self):
        op = DegradationOperator.delta(3)
        with pytest.raises(ShapeError):
            op.apply(np.zeros((7, 9)))


class TestGradient:
    def test_laplacian_of_constant(self):
        assert_array_equal(laplacian(np.full((5, 6), 0.3)), 0)

    def test_laplacian_symmetric(self):
        matrix = dense_matrix(laplacian, (4, 5))
        assert_allclose(matrix, matrix.T)
        assert np.linalg.eigvalsh(matrix).min() > -1e-12

    def test_objective_brute_force(self, rng):
        x = rng.uniform(size=(4, 4))
        y = rng.uniform(size=(2, 2))
        lam = 0.3
        op = DegradationOperator.delta(2)

        data = 0.0
        for i in range(2):
            for j in range(2):
                data += (y[i, j] - x[2 * i, 2 * j]) ** 2
        smooth = 0.0
        for i in range(4):
            for j in range(4):
                smooth += (x[(i + 1) % 4, j] - x[i, j]) ** 2
                smooth += (x[i, (j + 1) % 4] - x[i, j]) ** 2

        expected = 0.5 * data + 0.5 * lam * smooth
        assert objective(x, y, op, lam) == pytest.approx(expected, abs=1e-12)


class TestSubproblems:
    def test_ls_identity_average(self):
        op = DegradationOperator.delta()
        y = np.ones((4, 4))
        u = np.zeros((4, 4))
        assert_allclose(ls_solve(y, u, 1.0, op), 0.5, rtol=0, atol=1e-7)

    def test_ls_large_beta_keeps_u(self, rng):
        op = DegradationOperator.gaussian(1.0, scale=2)
        y = rng.uniform(size=(6, 6))
        u = rng.uniform(size=(12, 12))
        assert_allclose(ls_solve(y, u, 1e6, op), u, rtol=0, atol=1e-5)

    def test_ls_dense_oracle(self, rng):
        op = DegradationOperator.gaussian(1.0, scale=2)
        y = rng.uniform(size=(4, 4))
        u = rng.uniform(size=(8, 8))
        beta = 0.05

        h = dense_matrix(op.apply, (8, 8))
        system = h.T @ h + beta * np.eye(64)
        expected = np.linalg.solve(
            system, h.T @ y.reshape(-1) + beta * u.reshape(-1)
        )
        assert_allclose(
            ls_solve(y, u, beta, op), expected.reshape(8, 8), atol=1e-6
        )

    def test_ls_rejects_shape(self, rng):
        op = DegradationOperator.delta(2)
        with pytest.raises(ShapeError):
            ls_solve(np.zeros((4, 4)), np.zeros((6, 8)), 1.0, op)

    def test_prox_without_prior(self, rng):
        x = rng.uniform(size=(5, 5))
        out = denoise_prox(x, 0.5, 0.0)
        assert_array_equal(out, x)
        assert out is not x

    def test_prox_constant(self):
        x = np.full((6, 6, 3), 0.25)
        assert_allclose(denoise_prox(x, 0.1, 2.0), x, rtol=0, atol=1e-12)

    def test_prox_dense_oracle(self, rng):
        x = rng.uniform(size=(5, 6))
        beta, lam = 0.2, 0.7

        system = beta * np.eye(30) + lam * dense_matrix(laplacian, (5, 6))
        expected = np.linalg.solve(system, beta * x.reshape(-1))
        assert_allclose(
            denoise_prox(x, beta, lam), expected.reshape(5, 6), atol=1e-6
        )

    def test_cg_budget(self, rng):
        op = DegradationOperator.gaussian(1.0, scale=2)
        y = rng.uniform(size=(8, 8))
        u = rng.uniform(size=(16, 16))
        with pytest.raises(NumericError, match='did not converge'):
            ls_solve(y, u, 0.01, op, tol=1e-8, maxiter=1)


class TestHqsRun:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            HqsConfig(beta_growth=1.0)
        with pytest.raises(ValueError):
            HqsConfig(inner_iters=0)
        assert HqsConfig(beta0=0.5, beta_growth=2.0).beta(3) == 4.0

    def test_no_iterations(self, rng):
        y = rng.uniform(size=(8, 8))
        op = DegradationOperator.gaussian(1.0, scale=2)
        x, history = hqs_run(y, op, HqsConfig(iterations=0))

        assert_array_equal(x, initial_estimate(y, 2))
        assert [r.half for r in history] == ['init']

    def test_history_layout(self, rng):
        y = rng.uniform(size=(8, 8))
        op = DegradationOperator.gaussian(1.0, scale=2)
        cfg = HqsConfig(iterations=3, inner_iters=2)
        _, history = hqs_run(y, op, cfg)

        assert len(history) == 1 + 2 * 3 * 2
        assert [r.step for r in history] == list(range(len(history)))
        assert [r.half for r in history[1:5]] == ['ls', 'prox', 'ls', 'prox']
        assert history[-1].beta == cfg.beta(2)

    def test_data_term_decreases_without_prior(self, rng):
        hr = smooth_image(16, 16).pixels[..., 0]
        op = DegradationOperator.gaussian(1.0, scale=2)
        y = op.apply(hr)
        cfg = HqsConfig(prior_weight=0.0, cg_tol=1e-12)
        _, history = hqs_run(y, op, cfg)

        values = [r.objective for r in history if r.half in ['init', 'ls']]
        slack = 1e-9 * values[0]
        for earlier, later in zip(values, values[1:]):
            assert later <= earlier + slack

    def test_penalized_decreases_at_fixed_beta(self, rng):
        y = rng.uniform(size=(8, 8, 3))
        op = DegradationOperator.gaussian(1.0, scale=2)
        _, history = hqs_run(y, op, HqsConfig(iterations=4, inner_iters=3))

        for earlier, later in zip(history, history[1:]):
            if earlier.beta != later.beta:
                continue
            assert later.penalized <= (
                earlier.penalized * (1 + 1e-9) + 1e-14
            )

    def test_beats_bicubic(self):
        hr = smooth_image(32, 32)
        op = DegradationOperator.gaussian(1.0, scale=2)
        y = op.apply(hr.pixels)

        x, _ = hqs_run(y, op, HqsConfig())
        restored = psnr(Image(x), hr, y_only=False)
        bicubic = psnr(Image(initial_estimate(y, 2)), hr, y_only=False)
        assert restored >= bicubic + 1.0
