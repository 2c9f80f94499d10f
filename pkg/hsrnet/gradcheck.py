# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

"""Finite-difference oracle for the differentiable operations in ops.py.

Each case reduces the op output to a scalar through a fixed random
projection, loss = sum(out * R), so every output element contributes to the
checked gradient.
"""

from __future__ import annotations

from typing import Callable, Dict, Generator, List, Sequence, Tuple

import numpy as np

import ops
from tensor import Tensor, backward

FD_STEP = 1e-5
TOLERANCE = 1e-4

OpFn = Callable[[Sequence[Tensor]], Tensor]
Case = Tuple[OpFn, List[np.ndarray]]


def _projected_loss(
    fn: OpFn,
    arrays: Sequence[np.ndarray],
    projection: np.ndarray,
) -> float:
    out = fn([Tensor(a) for a in arrays])
    return float(np.sum(out.data * projection))


def analytic_gradients(
    fn: OpFn,
    arrays: Sequence[np.ndarray],
    projection: np.ndarray,
) -> List[np.ndarray]:
    inputs = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(inputs)
    loss = ops.total(ops.mul(out, Tensor(projection)))
    backward(loss)

    return [
        t.grad if t.grad is not None else np.zeros_like(t.data)
        for t in inputs
    ]


def numeric_gradients(
    fn: OpFn,
    arrays: Sequence[np.ndarray],
    projection: np.ndarray,
    step: float = FD_STEP,
) -> List[np.ndarray]:
    work = [a.copy() for a in arrays]
    grads: List[np.ndarray] = []

    for array in work:
        grad = np.zeros_like(array)
        flat = array.reshape(-1)
        flat_grad = grad.reshape(-1)

        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            plus = _projected_loss(fn, work, projection)
            flat[i] = saved - step
            minus = _projected_loss(fn, work, projection)
            flat[i] = saved
            flat_grad[i] = (plus - minus) / (2 * step)

        grads.append(grad)

    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale < 1e-12:
        return float(diff)
    return float(diff / scale)


def check_case(fn: OpFn, arrays: Sequence[np.ndarray], seed: int) -> float:
    out_shape = fn([Tensor(a) for a in arrays]).shape
    projection = np.random.default_rng(seed).standard_normal(out_shape)

    analytic = analytic_gradients(fn, arrays, projection)
    numeric = numeric_gradients(fn, arrays, projection)

    return max(relative_error(a, n) for a, n in zip(analytic, numeric))


def _away_from_zero(rng: np.random.Generator, shape, margin=1e-2):
    x = rng.standard_normal(shape)
    return np.sign(x) * (np.abs(x) + margin)


def _conv2d_case(rng: np.random.Generator) -> Case:
    in_ch = int(rng.integers(1, 4))
    out_ch = int(rng.integers(1, 4))
    k = int(rng.choice([1, 3]))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    size = int(rng.integers(k + 1, 7))

    arrays = [
        rng.standard_normal((1, in_ch, size, size)),
        rng.standard_normal((out_ch, in_ch, k, k)),
        rng.standard_normal((1, out_ch, 1, 1)),
    ]

    def fn(t: Sequence[Tensor]):
        return ops.conv2d(t[0], t[1], t[2], stride=stride, pad=pad)

    return fn, arrays


def _leaky_relu_case(rng: np.random.Generator) -> Case:
    slope = float(rng.uniform(0.01, 0.5))
    arrays = [_away_from_zero(rng, (1, 2, 3, 3), margin=1e-3)]
    return (lambda t: ops.leaky_relu(t[0], slope)), arrays


def _sigmoid_case(rng: np.random.Generator) -> Case:
    arrays = [3 * rng.standard_normal((1, 2, 3, 3))]
    return (lambda t: ops.sigmoid(t[0])), arrays


def _max_pool2d_case(rng: np.random.Generator) -> Case:
    k = int(rng.choice([2, 4]))
    shape = (1, 2, k * 2, k * 2)
    # Distinct values spaced far beyond the finite-difference step
    values = rng.permutation(np.prod(shape)) * 0.1
    values = values + rng.uniform(0, 0.01, values.size)
    arrays = [values.reshape(shape)]
    return (lambda t: ops.max_pool2d(t[0], k)), arrays


def _bilinear_upsample_case(rng: np.random.Generator) -> Case:
    factor = int(rng.choice(ops.UPSAMPLE_FACTORS))
    h, w = rng.integers(1, 5, size=2)
    arrays = [rng.standard_normal((1, 2, int(h), int(w)))]
    return (lambda t: ops.bilinear_upsample(t[0], factor)), arrays


def _pixel_shuffle_case(rng: np.random.Generator) -> Case:
    r = int(rng.integers(1, 4))
    arrays = [rng.standard_normal((1, 2 * r * r, 2, 3))]
    return (lambda t: ops.pixel_shuffle(t[0], r)), arrays


def _concat_channels_case(rng: np.random.Generator) -> Case:
    count = int(rng.integers(2, 4))
    arrays = [
        rng.standard_normal((1, int(rng.integers(1, 4)), 3, 3))
        for _ in range(count)
    ]
    return (lambda t: ops.concat_channels(list(t))), arrays


def _split_channels_case(rng: np.random.Generator) -> Case:
    parts = int(rng.integers(1, 5))
    arrays = [rng.standard_normal((1, 2 * parts, 3, 3))]

    def fn(t: Sequence[Tensor]):
        pieces = ops.split_channels(t[0], parts)
        return ops.concat_channels(pieces[::-1])

    return fn, arrays


def _add_case(rng: np.random.Generator) -> Case:
    arrays = [rng.standard_normal((1, 2, 3, 3)) for _ in range(2)]
    return (lambda t: ops.add(t[0], t[1])), arrays


def _mul_case(rng: np.random.Generator) -> Case:
    arrays = [rng.standard_normal((1, 2, 3, 3)) for _ in range(2)]
    return (lambda t: ops.mul(t[0], t[1])), arrays


def _l1_loss_case(rng: np.random.Generator) -> Case:
    pred = rng.standard_normal((1, 2, 3, 3))
    target = pred + _away_from_zero(rng, pred.shape)
    return (lambda t: ops.l1_loss(t[0], t[1])), [pred, target]


CASE_BUILDERS: Dict[str, Callable[[np.random.Generator], Case]] = {
    'conv2d': _conv2d_case,
    'leaky_relu': _leaky_relu_case,
    'sigmoid': _sigmoid_case,
    'max_pool2d': _max_pool2d_case,
    'bilinear_upsample': _bilinear_upsample_case,
    'pixel_shuffle': _pixel_shuffle_case,
    'concat_channels': _concat_channels_case,
    'split_channels': _split_channels_case,
    'add': _add_case,
    'mul': _mul_case,
    'l1_loss': _l1_loss_case,
}


def iter_cases(
    name: str,
    cases: int,
    seed: int,
) -> Generator[Tuple[int, OpFn, List[np.ndarray]], None, None]:
    builder = CASE_BUILDERS[name]
    rng = np.random.default_rng((seed, list(CASE_BUILDERS).index(name)))
    for index in range(cases):
        fn, arrays = builder(rng)
        yield index, fn, arrays


def run_gradcheck(cases: int = 20, seed: int = 0) -> Dict[str, float]:
    """Worst relative error per op over `cases` seeded random cases."""
    if cases < 1:
        raise ValueError(f'cases must be >= 1, got {cases}')

    worst: Dict[str, float] = {}
    for name in CASE_BUILDERS:
        errors = [
            check_case(fn, arrays, seed + index)
            for index, fn, arrays in iter_cases(name, cases, seed)
        ]
        worst[name] = max(errors)

    return worst
