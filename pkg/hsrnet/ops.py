# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

"""Differentiable operations on (batch, channels, height, width) tensors."""

from __future__ import annotations

from functools import cache
from typing import List, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from tensor import Tensor, make_result
from utils import ShapeError, shape_str

UPSAMPLE_FACTORS = [2, 4]


def _check_rank4(x: Tensor, op: str):
    if x.data.ndim != 4:
        raise ShapeError(
            f'{op} expects a rank-4 tensor, got {shape_str(x.shape)}'
        )


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(
            f'{op} shape mismatch: {shape_str(a.shape)} vs {shape_str(b.shape)}'
        )


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int = 1,
    pad: int = 0,
) -> Tensor:
    _check_rank4(x, 'conv2d')
    _check_rank4(weight, 'conv2d')

    out_ch, in_ch, kh, kw = weight.shape
    if x.shape[1] != in_ch:
        raise ShapeError(
            f'conv2d input {shape_str(x.shape)} does not match '
            f'weight {shape_str(weight.shape)}'
        )
    if bias.shape != (1, out_ch, 1, 1):
        raise ShapeError(
            f'conv2d bias {shape_str(bias.shape)} does not match '
            f'weight {shape_str(weight.shape)}'
        )
    if stride < 1 or pad < 0:
        raise ShapeError(f'conv2d invalid stride={stride} pad={pad}')

    b, _, h, w = x.shape
    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (w + 2 * pad - kw) // stride + 1
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(
            f'conv2d empty output for input {shape_str(x.shape)}, '
            f'weight {shape_str(weight.shape)}, pad={pad}, stride={stride}'
        )

    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    # (b, in_ch, out_h, out_w, kh, kw)
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]

    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2) + bias.data

    def grad_fn(grad: np.ndarray):
        grad_weight = np.tensordot(
            grad, windows, axes=([0, 2, 3], [0, 2, 3])
        )
        grad_bias = grad.sum(axis=(0, 2, 3)).reshape(bias.shape)

        grad_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                # (b, out_h, out_w, in_ch)
                contribution = np.tensordot(
                    grad, weight.data[:, :, i, j], axes=([1], [0])
                )
                grad_padded[
                    :,
                    :,
                    i : i + stride * out_h : stride,
                    j : j + stride * out_w : stride,
                ] += contribution.transpose(0, 3, 1, 2)

        grad_x = grad_padded[:, :, pad : pad + h, pad : pad + w]
        return grad_x, grad_weight, grad_bias

    assert out.shape == (b, out_ch, out_h, out_w)
    return make_result(out, (x, weight, bias), grad_fn, 'conv2d')


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    if not 0 < slope < 1:
        raise ValueError(f'leaky_relu slope must be in (0, 1), got {slope}')

    positive = x.data > 0
    out = np.where(positive, x.data, slope * x.data)

    def grad_fn(grad: np.ndarray):
        return (np.where(positive, grad, slope * grad),)

    return make_result(out, (x,), grad_fn, 'leaky_relu')


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)

    def grad_fn(grad: np.ndarray):
        return (grad * out * (1.0 - out),)

    return make_result(out, (x,), grad_fn, 'sigmoid')


def max_pool2d(x: Tensor, k: int) -> Tensor:
    _check_rank4(x, 'max_pool2d')

    b, c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(
            f'max_pool2d size {h}x{w} is not divisible by k={k}'
        )

    oh, ow = h // k, w // k
    blocks = x.data.reshape(b, c, oh, k, ow, k).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(b, c, oh, ow, k * k)
    # argmax returns the first occurrence on ties
    argmax = blocks.argmax(axis=-1)[..., np.newaxis]
    out = np.take_along_axis(blocks, argmax, axis=-1)[..., 0]

    def grad_fn(grad: np.ndarray):
        grad_blocks = np.zeros((b, c, oh, ow, k * k))
        np.put_along_axis(
            grad_blocks, argmax, grad[..., np.newaxis], axis=-1
        )
        grad_x = grad_blocks.reshape(b, c, oh, ow, k, k)
        grad_x = grad_x.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
        return (grad_x,)

    return make_result(out, (x,), grad_fn, 'max_pool2d')


@cache
def bilinear_matrix(in_len: int, factor: int) -> np.ndarray:
    # Half-pixel centres, source coordinates clamped to the edges
    out_len = in_len * factor
    matrix = np.zeros((out_len, in_len))

    src = (np.arange(out_len) + 0.5) / factor - 0.5
    src = np.clip(src, 0, in_len - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, in_len - 1)
    t = src - lo

    rows = np.arange(out_len)
    np.add.at(matrix, (rows, lo), 1.0 - t)
    np.add.at(matrix, (rows, hi), t)
    matrix.setflags(write=False)

    return matrix


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    _check_rank4(x, 'bilinear_upsample')
    if factor not in UPSAMPLE_FACTORS:
        raise ValueError(
            f'bilinear_upsample factor must be one of {UPSAMPLE_FACTORS}, '
            f'got {factor}'
        )

    rows = bilinear_matrix(x.shape[2], factor)
    cols = bilinear_matrix(x.shape[3], factor)
    out = rows @ x.data @ cols.T

    def grad_fn(grad: np.ndarray):
        return (rows.T @ grad @ cols,)

    return make_result(out, (x,), grad_fn, 'bilinear_upsample')


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    _check_rank4(x, 'pixel_shuffle')

    b, c, h, w = x.shape
    if c % (r * r):
        raise ShapeError(
            f'pixel_shuffle channels {c} not divisible by r^2={r * r}'
        )

    oc = c // (r * r)
    out = x.data.reshape(b, oc, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    out = out.reshape(b, oc, h * r, w * r)

    def grad_fn(grad: np.ndarray):
        return (pixel_unshuffle_array(grad, r),)

    return make_result(out, (x,), grad_fn, 'pixel_shuffle')


def pixel_unshuffle_array(data: np.ndarray, r: int) -> np.ndarray:
    b, oc, hr, wr = data.shape
    h, w = hr // r, wr // r
    out = data.reshape(b, oc, h, r, w, r).transpose(0, 1, 3, 5, 2, 4)
    return out.reshape(b, oc * r * r, h, w)


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    if not xs:
        raise ShapeError('concat_channels needs at least one tensor')

    for x in xs:
        _check_rank4(x, 'concat_channels')
        first, other = xs[0].shape, x.shape
        if (first[0], first[2], first[3]) != (other[0], other[2], other[3]):
            raise ShapeError(
                f'concat_channels mismatch: {shape_str(first)} '
                f'vs {shape_str(other)}'
            )

    out = np.concatenate([x.data for x in xs], axis=1)
    bounds = np.cumsum([0] + [x.shape[1] for x in xs])

    def grad_fn(grad: np.ndarray):
        return tuple(
            grad[:, start:end] for start, end in zip(bounds[:-1], bounds[1:])
        )

    return make_result(out, tuple(xs), grad_fn, 'concat_channels')


def split_channels(x: Tensor, parts: int) -> List[Tensor]:
    _check_rank4(x, 'split_channels')

    channels = x.shape[1]
    if parts < 1 or channels % parts:
        raise ShapeError(
            f'split_channels: {channels} channels not divisible by {parts}'
        )

    width = channels // parts
    pieces: List[Tensor] = []

    for index in range(parts):
        start = index * width

        def grad_fn(grad: np.ndarray, start=start):
            full = np.zeros_like(x.data)
            full[:, start : start + width] = grad
            return (full,)

        data = x.data[:, start : start + width].copy()
        pieces.append(make_result(data, (x,), grad_fn, 'split_channels'))

    return pieces


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, 'add')

    def grad_fn(grad: np.ndarray):
        return grad, grad

    return make_result(a.data + b.data, (a, b), grad_fn, 'add')


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, 'mul')

    def grad_fn(grad: np.ndarray):
        return grad * b.data, grad * a.data

    return make_result(a.data * b.data, (a, b), grad_fn, 'mul')


def scale(x: Tensor, factor: float) -> Tensor:
    def grad_fn(grad: np.ndarray):
        return (grad * factor,)

    return make_result(x.data * factor, (x,), grad_fn, 'scale')


def total(x: Tensor) -> Tensor:
    def grad_fn(grad: np.ndarray):
        return (np.broadcast_to(grad, x.shape).copy(),)

    return make_result(np.sum(x.data), (x,), grad_fn, 'sum')


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    _check_same_shape(pred, target, 'l1_loss')

    diff = pred.data - target.data
    count = diff.size

    def grad_fn(grad: np.ndarray):
        sign = np.sign(diff) * (grad / count)
        return sign, -sign

    return make_result(
        np.mean(np.abs(diff)), (pred, target), grad_fn, 'l1_loss'
    )
