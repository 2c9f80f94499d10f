# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

from fractions import Fraction
from math import ceil, isfinite
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from config import TrainConfig
from imaging import SAVE_FORMATS, Image, bicubic_resize, load
from network import hsrnet_forward, init_weights
from ops import l1_loss
from optim import AdamState, adam_step
from output import read_loss_csv, write_loss_csv
from tensor import Tensor, backward
from utils import Color, DataError, NumericError, ShapeError, color_print
from weights import NetworkWeights


class TrainPair:
    def __init__(self, name: str, hr: Image, lr: Image):
        self.name = name
        self.hr = hr
        self.lr = lr

    def __repr__(self):
        return f'TrainPair({self.name}, {self.hr!r}, {self.lr!r})'


def crop_to_multiple(img: Image, s: int) -> Image:
    h = img.height - img.height % s
    w = img.width - img.width % s
    if h == 0 or w == 0:
        raise ShapeError(f'{img!r} is smaller than scale {s}')

    top = (img.height - h) // 2
    left = (img.width - w) // 2
    return img.crop(top, left, h, w)


def degrade(hr: Image, s: int) -> Image:
    return bicubic_resize(hr, Fraction(1, s), antialias=True)


def list_images(directory: str | Path) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f'{directory} is not a directory')

    paths: List[Path] = []
    for path in sorted(directory.iterdir()):
        if not path.is_file():
            continue
        if path.suffix.lower() not in SAVE_FORMATS:
            color_print(f'Skipping {path}', color=Color.YELLOW)
            continue
        paths.append(path)

    return paths


def build_pairs(hr_dir: str | Path, s: int) -> List[TrainPair]:
    paths = list_images(hr_dir)
    if not paths:
        raise DataError(f'No PNG or PPM images in {hr_dir}')

    pairs: List[TrainPair] = []
    for path in paths:
        hr = load(path)
        if hr.height % s or hr.width % s:
            cropped = crop_to_multiple(hr, s)
            color_print(
                f'Cropped {path.name} from {hr.height}x{hr.width} to '
                f'{cropped.height}x{cropped.width}',
                color=Color.YELLOW,
            )
            hr = cropped

        pairs.append(TrainPair(path.name, hr, degrade(hr, s)))

    return pairs


def _augment(
    lr: np.ndarray,
    hr: np.ndarray,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    flip_h, flip_v = rng.integers(0, 2, size=2)
    turns = int(rng.integers(0, 4))

    if flip_h:
        lr, hr = lr[:, ::-1], hr[:, ::-1]
    if flip_v:
        lr, hr = lr[::-1], hr[::-1]
    return np.rot90(lr, turns), np.rot90(hr, turns)


def sample_batch(
    pairs: List[TrainPair],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> Tuple[Tensor, Tensor]:
    s = cfg.scale
    p = cfg.patch_size

    lr_patches: List[np.ndarray] = []
    hr_patches: List[np.ndarray] = []
    for _ in range(cfg.batch_size):
        pair = pairs[int(rng.integers(len(pairs)))]
        h, w = pair.lr.height, pair.lr.width
        if p > min(h, w):
            raise ShapeError(
                f'Patch {p}x{p} does not fit LR {h}x{w} of {pair.name}'
            )

        y = int(rng.integers(0, h - p + 1))
        x = int(rng.integers(0, w - p + 1))
        lr = pair.lr.pixels[y : y + p, x : x + p]
        hr = pair.hr.pixels[s * y : s * (y + p), s * x : s * (x + p)]

        if cfg.augment:
            lr, hr = _augment(lr, hr, rng)

        lr_patches.append(lr.transpose(2, 0, 1))
        hr_patches.append(hr.transpose(2, 0, 1))

    return Tensor(np.stack(lr_patches)), Tensor(np.stack(hr_patches))


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng((seed, step))


def steps_per_epoch(pairs: List[TrainPair], cfg: TrainConfig) -> int:
    return ceil(len(pairs) / cfg.batch_size)


def fill_unreached_grads(weights: NetworkWeights) -> List[str]:
    # Parameters the loss does not depend on get a zero gradient
    unreached: List[str] = []
    for param in weights.walk():
        if param.trainable and param.value.grad is None:
            param.value.grad = np.zeros(param.shape)
            unreached.append(param.name)
    return unreached


class TrainResult:
    def __init__(
        self,
        checkpoint: Checkpoint,
        losses: List[Tuple[int, float]],
    ):
        self.checkpoint = checkpoint
        self.losses = losses


def _start_state(
    cfg: TrainConfig,
    resume: Optional[str],
) -> Tuple[NetworkWeights, AdamState, int, List[Tuple[int, float]]]:
    if resume is None:
        return init_weights(cfg.network, cfg.seed), AdamState(lr=cfg.lr), 0, []

    ckpt = load_checkpoint(resume, cfg.network)
    optimizer = ckpt.optimizer
    if optimizer is None:
        raise DataError(f'{resume} has no optimizer state to resume from')

    losses: List[Tuple[int, float]] = []
    if Path(cfg.loss_log).exists():
        losses = [
            (step, loss)
            for step, loss in read_loss_csv(cfg.loss_log)
            if step <= ckpt.step
        ]

    color_print(f'Resuming from step {ckpt.step}', color=Color.GREEN)
    return ckpt.weights, optimizer, ckpt.step, losses


def train(
    cfg: TrainConfig,
    resume: Optional[str] = None,
    pairs: Optional[List[TrainPair]] = None,
) -> TrainResult:
    if pairs is None:
        pairs = build_pairs(cfg.data_dir, cfg.scale)

    weights, optimizer, start, losses = _start_state(cfg, resume)

    epoch_steps = steps_per_epoch(pairs, cfg)
    total_steps = cfg.epochs * epoch_steps
    checkpoint_every = cfg.checkpoint_interval * epoch_steps
    last_good: Optional[str] = resume

    color_print(
        f'Training {len(pairs)} images, {total_steps} steps', color=Color.GREEN
    )

    def snapshot(step: int) -> Checkpoint:
        return Checkpoint(
            config=cfg.network,
            weights=weights,
            optimizer=optimizer,
            step=step,
        )

    warned_unreached = False
    for step in range(start + 1, total_steps + 1):
        lr_batch, hr_batch = sample_batch(pairs, cfg, step_rng(cfg.seed, step))

        weights.zero_grad()
        sr = hsrnet_forward(lr_batch, cfg.network, weights)
        loss = l1_loss(sr, hr_batch)

        value = loss.item()
        if not isfinite(value):
            raise NumericError(
                f'Non-finite loss {value} at step {step}, '
                f'last good checkpoint: {last_good or "none"}'
            )

        backward(loss)
        unreached = fill_unreached_grads(weights)
        if unreached and not warned_unreached:
            color_print(
                f'{len(unreached)} parameters do not reach the loss',
                color=Color.YELLOW,
            )
            warned_unreached = True

        adam_step(weights, optimizer)
        losses.append((step, value))

        if cfg.log_interval and step % cfg.log_interval == 0:
            color_print(f'step {step} loss {value:.6f}', color=Color.GREEN)

        if checkpoint_every and step % checkpoint_every == 0:
            save_checkpoint(cfg.checkpoint, snapshot(step))
            write_loss_csv(cfg.loss_log, losses)
            last_good = cfg.checkpoint
            color_print(
                f'Wrote checkpoint {cfg.checkpoint} at step {step}',
                color=Color.GREEN,
            )

    final = snapshot(max(start, total_steps))
    save_checkpoint(cfg.checkpoint, final)
    write_loss_csv(cfg.loss_log, losses)
    color_print(f'Wrote checkpoint {cfg.checkpoint}', color=Color.GREEN)

    return TrainResult(final, losses)
