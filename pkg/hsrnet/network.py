# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

from typing import Dict, Generator, List, Optional, Tuple

import numpy as np

import ops
from config import SCALES, HsrConfig
from features import HqsNetState, StageTag
from tensor import Tensor
from utils import ShapeError, shape_str
from weights import NAME_SEPARATOR, NetworkWeights, Parameter

ShapeEntry = Tuple[str, Tuple[int, ...]]

IMAGE_CHANNELS = 3
MIN_LR_SIZE = 8
# MSA pools by up to 4
SIZE_MULTIPLE = 4


def _conv_shapes(
    name: str,
    in_ch: int,
    out_ch: int,
    k: int,
) -> Generator[ShapeEntry, None, None]:
    yield f'{name}.weight', (out_ch, in_ch, k, k)
    yield f'{name}.bias', (1, out_ch, 1, 1)


def solver_prefix(cfg: HsrConfig, k: int):
    if cfg.share_iter_weights:
        return 'solver'
    return f'iter{k}.solver'


def denoiser_prefix(cfg: HsrConfig, k: int):
    if cfg.share_iter_weights:
        return 'denoiser'
    return f'iter{k}.denoiser'


def _msa_shapes(prefix: str, c: int) -> Generator[ShapeEntry, None, None]:
    q = c // 4
    yield from _conv_shapes(f'{prefix}.entry', c, 3 * q, 1)
    for level in range(1, 4):
        yield from _conv_shapes(f'{prefix}.branch{level}', q, q, 3)
    yield from _conv_shapes(f'{prefix}.fuse', 3 * q, c, 1)


def _heb_shapes(
    prefix: str,
    c: int,
    fuse_kernel: int,
) -> Generator[ShapeEntry, None, None]:
    q = c // 4
    yield from _conv_shapes(f'{prefix}.explore', c, c, 3)
    for i in range(2, 5):
        for j in range(1, i):
            yield from _conv_shapes(f'{prefix}.branch{i}.stage{j}', q, q, 3)
        yield from _conv_shapes(f'{prefix}.merge{i}', 2 * q, q, 1)
    yield from _conv_shapes(f'{prefix}.fuse', c, c, fuse_kernel)


def _denoiser_shapes(
    prefix: str,
    cfg: HsrConfig,
) -> Generator[ShapeEntry, None, None]:
    c = cfg.channels
    for n in range(1, cfg.n_blocks + 1):
        if cfg.msa_enabled:
            yield from _msa_shapes(f'{prefix}.msa{n}', c)
        yield from _heb_shapes(f'{prefix}.heb{n}', c, cfg.heb_fuse_kernel)
    yield from _conv_shapes(f'{prefix}.tail', c, c, 3)


def parameter_shapes(cfg: HsrConfig) -> Generator[ShapeEntry, None, None]:
    c = cfg.channels

    yield from _conv_shapes('entry', IMAGE_CHANNELS, c, 3)
    yield from _conv_shapes('transposition.conv0', c, c, 3)
    yield from _conv_shapes('transposition.conv1', c, c, 3)

    shared_iterations = 1 if cfg.share_iter_weights else cfg.iterations
    for k in range(shared_iterations):
        solver = solver_prefix(cfg, k)
        yield from _conv_shapes(f'{solver}.conv0', 2 * c, c, 3)
        yield from _conv_shapes(f'{solver}.conv1', c, c, 3)
        yield from _conv_shapes(f'{solver}.conv2', c, c, 3)
        yield from _denoiser_shapes(denoiser_prefix(cfg, k), cfg)

    yield from _conv_shapes(
        'upscale', c, IMAGE_CHANNELS * cfg.scale * cfg.scale, 3
    )


def _fan_in(shape: Tuple[int, ...]) -> int:
    _, in_ch, kh, kw = shape
    return in_ch * kh * kw


def init_weights(cfg: HsrConfig, seed: int) -> NetworkWeights:
    rng = np.random.default_rng(seed)
    weights = NetworkWeights()

    fan_in = 1
    for name, shape in parameter_shapes(cfg):
        # Each bias follows its weight and shares its fan-in
        if name.endswith('.weight'):
            fan_in = _fan_in(shape)

        bound = 1.0 / np.sqrt(fan_in)
        data = rng.uniform(-bound, bound, size=shape)
        weights.add(Parameter(name, Tensor(data)))

    return weights


def breakdown_key(name: str) -> str:
    parts = name.split(NAME_SEPARATOR)
    if parts[0].startswith('iter'):
        parts = parts[1:]

    if parts[0] == 'denoiser':
        block = parts[1]
        if block.startswith('msa'):
            return 'msa'
        if block.startswith('heb'):
            return 'heb'
        return 'denoiser_tail'

    return parts[0]


def param_count(cfg: HsrConfig) -> Tuple[int, Dict[str, int]]:
    breakdown: Dict[str, int] = {}
    for name, shape in parameter_shapes(cfg):
        key = breakdown_key(name)
        breakdown[key] = breakdown.get(key, 0) + int(np.prod(shape))

    return sum(breakdown.values()), breakdown


def _conv(
    x: Tensor,
    w: NetworkWeights,
    name: str,
) -> Tensor:
    weight = w.value(f'{name}.weight')
    bias = w.value(f'{name}.bias')
    # Odd kernels, "same" output size
    pad = weight.shape[2] // 2
    return ops.conv2d(x, weight, bias, stride=1, pad=pad)


def _explore(
    x: Tensor,
    cfg: HsrConfig,
    w: NetworkWeights,
    name: str,
) -> Tensor:
    return ops.leaky_relu(_conv(x, w, name), cfg.leaky_slope)


def feature_extract(img: Tensor, cfg: HsrConfig, w: NetworkWeights):
    if img.data.ndim != 4 or img.shape[1] != IMAGE_CHANNELS:
        raise ShapeError(
            f'feature_extract expects a 3-channel image tensor, '
            f'got {shape_str(img.shape)}'
        )
    return _conv(img, w, 'entry')


def transposition(feat: Tensor, cfg: HsrConfig, w: NetworkWeights):
    x = _explore(feat, cfg, w, 'transposition.conv0')
    return _conv(x, w, 'transposition.conv1')


def solver_ls(
    ht_i: Tensor,
    u: Tensor,
    cfg: HsrConfig,
    w: NetworkWeights,
    prefix: str = 'solver',
) -> Tensor:
    if ht_i.shape != u.shape:
        raise ShapeError(
            f'solver_ls inputs differ: {shape_str(ht_i.shape)} '
            f'vs {shape_str(u.shape)}'
        )

    x = ops.concat_channels([ht_i, u])
    x = _explore(x, cfg, w, f'{prefix}.conv0')
    x = _conv(x, w, f'{prefix}.conv1')
    return _conv(x, w, f'{prefix}.conv2')


def heb_forward(
    f_in: Tensor,
    cfg: HsrConfig,
    w: NetworkWeights,
    prefix: str,
    state: Optional[HqsNetState] = None,
) -> Tensor:
    if f_in.shape[1] % 4:
        raise ShapeError(
            f'HEB needs channels divisible by 4, got {shape_str(f_in.shape)}'
        )

    feat = _explore(f_in, cfg, w, f'{prefix}.explore')
    parts = ops.split_channels(feat, 4)

    previous = parts[0]
    processed = [previous]
    for i in range(2, 5):
        x = parts[i - 1]
        for j in range(1, i):
            x = _explore(x, cfg, w, f'{prefix}.branch{i}.stage{j}')

        if state is not None:
            state.record(StageTag.HEB_EXPLORED, x)

        previous = _conv(
            ops.concat_channels([x, previous]), w, f'{prefix}.merge{i}'
        )
        processed.append(previous)

    if state is not None:
        for branch in processed:
            state.record(StageTag.HEB_BRANCH, branch)

    fused = _conv(ops.concat_channels(processed), w, f'{prefix}.fuse')
    return ops.add(f_in, fused)


def msa_forward(
    f_in: Tensor,
    cfg: HsrConfig,
    w: NetworkWeights,
    prefix: str,
    state: Optional[HqsNetState] = None,
) -> Tensor:
    h, wd = f_in.shape[2], f_in.shape[3]
    if h % SIZE_MULTIPLE or wd % SIZE_MULTIPLE:
        raise ShapeError(
            f'MSA needs spatial size divisible by {SIZE_MULTIPLE}, '
            f'got {shape_str(f_in.shape)}'
        )

    x = _conv(f_in, w, f'{prefix}.entry')
    b1, b2, b3 = ops.split_channels(x, 3)

    level1 = _explore(b1, cfg, w, f'{prefix}.branch1')
    level2 = ops.bilinear_upsample(
        _explore(ops.max_pool2d(b2, 2), cfg, w, f'{prefix}.branch2'), 2
    )
    level3 = ops.bilinear_upsample(
        _explore(ops.max_pool2d(b3, 4), cfg, w, f'{prefix}.branch3'), 4
    )

    if state is not None:
        for level in [level1, level2, level3]:
            state.record(StageTag.MSA_LEVEL, level)

    fused = _conv(
        ops.concat_channels([level1, level2, level3]), w, f'{prefix}.fuse'
    )
    attention = ops.sigmoid(fused)

    match cfg.msa_mode:
        case 'gate':
            return ops.mul(f_in, attention)
        case 'additive':
            return ops.add(f_in, attention)

    assert False, cfg.msa_mode


def denoiser_forward(
    i_hr: Tensor,
    cfg: HsrConfig,
    w: NetworkWeights,
    prefix: str = 'denoiser',
    state: Optional[HqsNetState] = None,
) -> Tensor:
    x = i_hr
    for n in range(1, cfg.n_blocks + 1):
        if cfg.msa_enabled:
            x = msa_forward(x, cfg, w, f'{prefix}.msa{n}', state)
        x = heb_forward(x, cfg, w, f'{prefix}.heb{n}', state)

    return _conv(x, w, f'{prefix}.tail')


def upscale(i_hr: Tensor, w: NetworkWeights, s: int) -> Tensor:
    if s not in SCALES:
        raise ValueError(f'Upscale factor must be one of {SCALES}, got {s}')

    x = _conv(i_hr, w, 'upscale')
    return ops.pixel_shuffle(x, s)


def _check_lr_input(lr: Tensor):
    if lr.data.ndim != 4 or lr.shape[1] != IMAGE_CHANNELS:
        raise ShapeError(
            f'Expected a (b, 3, h, w) image tensor, got {shape_str(lr.shape)}'
        )
    if min(lr.shape[2], lr.shape[3]) < MIN_LR_SIZE:
        raise ShapeError(
            f'LR input must be at least {MIN_LR_SIZE}x{MIN_LR_SIZE}, '
            f'got {shape_str(lr.shape)}'
        )


def _run_iterations(
    lr: Tensor,
    cfg: HsrConfig,
    w: NetworkWeights,
    state: Optional[HqsNetState],
    final_denoiser: bool,
) -> Tuple[Tensor, List[Tensor]]:
    # Returns the last solver output and every restored estimate
    _check_lr_input(lr)

    feat = feature_extract(lr, cfg, w)
    ht_i = transposition(feat, cfg, w)
    u = ht_i

    if state is not None:
        state.k = 0
        state.i_lr_feat = feat
        state.ht_i = ht_i
        state.u = [u]
        state.record(StageTag.LR_FEATURE, feat)

    restored = [u]
    i_hr = u
    for k in range(cfg.iterations):
        if state is not None:
            state.k = k + 1
            state.record(StageTag.SOLVER_INPUT, u)

        i_hr = solver_ls(ht_i, u, cfg, w, solver_prefix(cfg, k))
        restored.append(i_hr)

        if state is not None:
            state.i_hr.append(i_hr)
            state.record(StageTag.DENOISER_INPUT, i_hr)

        # The last denoised estimate is only kept for state observers
        if k == cfg.iterations - 1 and not final_denoiser:
            break

        u = denoiser_forward(i_hr, cfg, w, denoiser_prefix(cfg, k), state)

        if state is not None:
            state.u.append(u)
            state.record(StageTag.DENOISER_OUTPUT, u)

    return i_hr, restored


def hsrnet_forward(
    lr: Tensor,
    cfg: HsrConfig,
    w: NetworkWeights,
    state: Optional[HqsNetState] = None,
) -> Tensor:
    i_hr, _ = _run_iterations(
        lr, cfg, w, state, final_denoiser=state is not None
    )
    return upscale(i_hr, w, cfg.scale)


def iteration_outputs(
    lr: Tensor,
    cfg: HsrConfig,
    w: NetworkWeights,
) -> List[Tensor]:
    """SR images from the initial estimate and after each iteration."""
    _, restored = _run_iterations(lr, cfg, w, None, final_denoiser=False)
    return [upscale(x, w, cfg.scale) for x in restored]


def image_to_tensor(pixels: np.ndarray) -> Tensor:
    if pixels.ndim != 3 or pixels.shape[2] != IMAGE_CHANNELS:
        raise ShapeError(
            f'Expected an (h, w, 3) image, got {shape_str(pixels.shape)}'
        )
    return Tensor(pixels.transpose(2, 0, 1)[np.newaxis])


def tensor_to_image(x: Tensor) -> np.ndarray:
    return np.clip(x.data[0].transpose(1, 2, 0), 0.0, 1.0)


def pad_to_multiple(
    pixels: np.ndarray,
    multiple: int = SIZE_MULTIPLE,
) -> np.ndarray:
    h, w = pixels.shape[:2]
    target_h = max(MIN_LR_SIZE, -(-h // multiple) * multiple)
    target_w = max(MIN_LR_SIZE, -(-w // multiple) * multiple)
    if (target_h, target_w) == (h, w):
        return pixels

    mode = 'reflect' if min(h, w) > 1 else 'edge'
    return np.pad(
        pixels, ((0, target_h - h), (0, target_w - w), (0, 0)), mode=mode
    )


def _run_padded(pixels: np.ndarray, scale: int, forward) -> List[np.ndarray]:
    h, w = pixels.shape[:2]
    padded = image_to_tensor(pad_to_multiple(pixels))
    return [
        tensor_to_image(out)[: scale * h, : scale * w]
        for out in forward(padded)
    ]


def super_resolve(
    pixels: np.ndarray,
    cfg: HsrConfig,
    w: NetworkWeights,
    state: Optional[HqsNetState] = None,
) -> np.ndarray:
    (sr,) = _run_padded(
        pixels,
        cfg.scale,
        lambda x: [hsrnet_forward(x, cfg, w, state)],
    )
    return sr


def super_resolve_iterations(
    pixels: np.ndarray,
    cfg: HsrConfig,
    w: NetworkWeights,
) -> List[np.ndarray]:
    return _run_padded(
        pixels, cfg.scale, lambda x: iteration_outputs(x, cfg, w)
    )
