# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

"""Classical half-quadratic splitting for blur + decimation.

Solves min_x 1/2 |y - Hx|^2 + lam/2 |grad x|^2 by alternating

    x = argmin 1/2 |y - Hx|^2 + beta/2 |x - u|^2
    u = argmin beta/2 |x - u|^2 + lam/2 |grad u|^2

with beta growing geometrically. Both subproblems are solved by conjugate
gradients; blur and finite differences are circular so that H^T is exact.
Arrays are (h, w) or (h, w, channels).
"""

from __future__ import annotations

from math import ceil
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.sparse.linalg import LinearOperator, cg

from config import default_hqs_config
from imaging import resize_array
from utils import NumericError, ShapeError, shape_str

KERNEL_SUM_TOLERANCE = 1e-12


class HqsConfig:
    def __init__(
        self,
        *,
        beta0: float = default_hqs_config['beta0'],
        beta_growth: float = default_hqs_config['beta_growth'],
        iterations: int = default_hqs_config['iterations'],
        prior_weight: float = default_hqs_config['prior_weight'],
        cg_tol: float = default_hqs_config['cg_tol'],
        cg_maxiter: int = default_hqs_config['cg_maxiter'],
        inner_iters: int = default_hqs_config['inner_iters'],
    ):
        if beta0 <= 0:
            raise ValueError(f'beta0 must be positive, got {beta0}')
        if beta_growth <= 1:
            raise ValueError(f'beta_growth must be > 1, got {beta_growth}')
        if iterations < 0:
            raise ValueError(f'iterations must be >= 0, got {iterations}')
        if prior_weight < 0:
            raise ValueError(
                f'prior_weight must be >= 0, got {prior_weight}'
            )
        if cg_tol <= 0 or cg_maxiter < 1:
            raise ValueError(
                f'invalid CG settings tol={cg_tol} maxiter={cg_maxiter}'
            )
        if inner_iters < 1:
            raise ValueError(f'inner_iters must be >= 1, got {inner_iters}')

        self.beta0 = beta0
        self.beta_growth = beta_growth
        self.iterations = iterations
        self.prior_weight = prior_weight
        self.cg_tol = cg_tol
        self.cg_maxiter = cg_maxiter
        self.inner_iters = inner_iters

    def beta(self, k: int) -> float:
        return self.beta0 * self.beta_growth**k


class DegradationOperator:
    def __init__(self, kernel: np.ndarray, scale: int):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or (
            kernel.shape[1] % 2 == 0
        ):
            raise ValueError(
                f'Blur kernel must be 2-D with odd sides, '
                f'got {shape_str(kernel.shape)}'
            )
        if abs(kernel.sum() - 1.0) > KERNEL_SUM_TOLERANCE:
            raise ValueError(f'Blur kernel sums to {kernel.sum()}, not 1')
        if scale < 1:
            raise ValueError(f'Decimation factor must be >= 1, got {scale}')

        self.kernel = kernel
        self.scale = scale
        # Noiseless observation model
        self.noise = 0.0

    @classmethod
    def delta(cls, scale: int = 1) -> DegradationOperator:
        return cls(np.ones((1, 1)), scale)

    @classmethod
    def gaussian(
        cls,
        sigma: float,
        size: Optional[int] = None,
        scale: int = 1,
    ) -> DegradationOperator:
        if sigma <= 0:
            raise ValueError(f'Gaussian sigma must be positive, got {sigma}')
        if size is None:
            size = 2 * ceil(3 * sigma) + 1

        m = (size - 1) / 2
        y, x = np.ogrid[-m : m + 1, -m : m + 1]
        kernel = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
        return cls(kernel / kernel.sum(), scale)

    def _kernel_for(self, x: np.ndarray) -> np.ndarray:
        if x.ndim == 3:
            return self.kernel[:, :, np.newaxis]
        return self.kernel

    def check_hr_shape(self, shape: Tuple[int, ...]):
        if shape[0] % self.scale or shape[1] % self.scale:
            raise ShapeError(
                f'HR shape {shape_str(shape)} is not divisible by '
                f'scale {self.scale}'
            )

    def lr_shape(self, hr_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        self.check_hr_shape(hr_shape)
        s = self.scale
        return (hr_shape[0] // s, hr_shape[1] // s) + tuple(hr_shape[2:])

    def hr_shape(self, lr_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        s = self.scale
        return (lr_shape[0] * s, lr_shape[1] * s) + tuple(lr_shape[2:])

    def apply(self, x: np.ndarray) -> np.ndarray:
        self.check_hr_shape(x.shape)
        blurred = ndimage.convolve(x, self._kernel_for(x), mode='wrap')
        return blurred[:: self.scale, :: self.scale]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        up = np.zeros(self.hr_shape(y.shape))
        up[:: self.scale, :: self.scale] = y
        return ndimage.correlate(up, self._kernel_for(up), mode='wrap')


def gradient(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # Circular forward differences
    return np.roll(x, -1, axis=0) - x, np.roll(x, -1, axis=1) - x


def gradient_adjoint(gv: np.ndarray, gh: np.ndarray) -> np.ndarray:
    return (np.roll(gv, 1, axis=0) - gv) + (np.roll(gh, 1, axis=1) - gh)


def laplacian(x: np.ndarray) -> np.ndarray:
    # grad^T grad
    return gradient_adjoint(*gradient(x))


def prior(x: np.ndarray, lam: float) -> float:
    gv, gh = gradient(x)
    return 0.5 * lam * float(np.sum(gv * gv) + np.sum(gh * gh))


def objective(
    x: np.ndarray,
    i_lr: np.ndarray,
    op: DegradationOperator,
    lam: float,
) -> float:
    residual = i_lr - op.apply(x)
    return 0.5 * float(np.sum(residual * residual)) + prior(x, lam)


def penalized_objective(
    x: np.ndarray,
    u: np.ndarray,
    i_lr: np.ndarray,
    op: DegradationOperator,
    lam: float,
    beta: float,
) -> float:
    residual = i_lr - op.apply(x)
    coupling = x - u
    return (
        0.5 * float(np.sum(residual * residual))
        + 0.5 * beta * float(np.sum(coupling * coupling))
        + prior(u, lam)
    )


def solve_spd(
    matvec: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    x0: np.ndarray,
    tol: float,
    maxiter: int,
) -> np.ndarray:
    """Solve A x = rhs for SPD A given as a function on shaped arrays."""
    shape = rhs.shape
    n = rhs.size

    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0:
        return np.zeros(shape)

    def flat_matvec(v: np.ndarray) -> np.ndarray:
        return matvec(v.reshape(shape)).reshape(-1)

    operator = LinearOperator(
        (n, n), matvec=flat_matvec, rmatvec=flat_matvec, dtype=np.float64
    )
    solution, _ = cg(
        operator,
        rhs.reshape(-1),
        x0=x0.reshape(-1),
        rtol=tol * 0.1,
        atol=0.0,
        maxiter=maxiter,
    )

    # Trust the true residual, not the recursive one
    residual = float(np.linalg.norm(flat_matvec(solution) - rhs.reshape(-1)))
    relative = residual / rhs_norm
    if not np.isfinite(relative) or relative > tol:
        raise NumericError(
            f'CG did not converge within {maxiter} iterations: '
            f'relative residual {relative:.3e} > {tol:.1e}'
        )

    return solution.reshape(shape)


def ls_solve(
    i_lr: np.ndarray,
    u: np.ndarray,
    beta: float,
    op: DegradationOperator,
    tol: float = default_hqs_config['cg_tol'],
    maxiter: int = default_hqs_config['cg_maxiter'],
) -> np.ndarray:
    """Minimizer of 1/2 |y - Hx|^2 + beta/2 |x - u|^2.

    Normal equations (H^T H + beta I) x = H^T y + beta u.
    """
    if beta <= 0:
        raise ValueError(f'beta must be positive, got {beta}')
    if u.shape != op.hr_shape(i_lr.shape):
        raise ShapeError(
            f'u {shape_str(u.shape)} does not match LR '
            f'{shape_str(i_lr.shape)} at scale {op.scale}'
        )

    def matvec(x: np.ndarray) -> np.ndarray:
        return op.adjoint(op.apply(x)) + beta * x

    rhs = op.adjoint(i_lr) + beta * u
    return solve_spd(matvec, rhs, u, tol, maxiter)


def denoise_prox(
    x: np.ndarray,
    beta: float,
    lam: float,
    tol: float = default_hqs_config['cg_tol'],
    maxiter: int = default_hqs_config['cg_maxiter'],
) -> np.ndarray:
    """Minimizer of beta/2 |x - u|^2 + lam/2 |grad u|^2."""
    if beta <= 0:
        raise ValueError(f'beta must be positive, got {beta}')
    if lam < 0:
        raise ValueError(f'lam must be >= 0, got {lam}')
    if lam == 0:
        return x.copy()

    def matvec(u: np.ndarray) -> np.ndarray:
        return beta * u + lam * laplacian(u)

    return solve_spd(matvec, beta * x, x, tol, maxiter)


class HqsRecord:
    def __init__(
        self,
        *,
        step: int,
        half: str,
        beta: float,
        objective: float,
        penalized: float,
    ):
        self.step = step
        # 'init', 'ls' or 'prox'
        self.half = half
        self.beta = beta
        self.objective = objective
        self.penalized = penalized

    def __repr__(self):
        return (
            f'HqsRecord({self.step}, {self.half}, beta={self.beta:g}, '
            f'objective={self.objective:.6g})'
        )


def initial_estimate(i_lr: np.ndarray, scale: int) -> np.ndarray:
    return resize_array(i_lr, scale, antialias=False)


def hqs_run(
    i_lr: np.ndarray,
    op: DegradationOperator,
    cfg: HqsConfig,
    x0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, List[HqsRecord]]:
    lam = cfg.prior_weight
    x = initial_estimate(i_lr, op.scale) if x0 is None else x0.copy()
    u = x.copy()

    history: List[HqsRecord] = []

    def record(half: str, beta: float):
        history.append(
            HqsRecord(
                step=len(history),
                half=half,
                beta=beta,
                objective=objective(x, i_lr, op, lam),
                penalized=penalized_objective(x, u, i_lr, op, lam, beta),
            )
        )

    record('init', cfg.beta0)

    for k in range(cfg.iterations):
        beta = cfg.beta(k)
        for _ in range(cfg.inner_iters):
            x = ls_solve(i_lr, u, beta, op, cfg.cg_tol, cfg.cg_maxiter)
            record('ls', beta)
            u = denoise_prox(x, beta, lam, cfg.cg_tol, cfg.cg_maxiter)
            record('prox', beta)

    return x, history
