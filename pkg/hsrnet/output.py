# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

from pathlib import Path
from typing import List, TextIO, Tuple

import numpy as np
from PIL import Image as PILImage

from hqs import HqsRecord
from metrics import EvalReport, format_psnr, format_score
from utils import DataError, atomic_output

LOSS_HEADER = 'step,loss'
HISTORY_HEADER = 'step,beta,objective,penalized,half'


def _write_eval(o: TextIO, report: EvalReport):
    header = 'name,psnr,ssim,lss'
    if report.with_source_lss:
        header += ',lss_lr,lss_hr'
    if report.with_baseline:
        header += ',bicubic_psnr'
    o.write(header + '\n')

    for row in report.rows:
        line = (
            f'{row.name},{format_psnr(row.psnr)},{row.ssim:.6f},'
            f'{format_score(row.lss)}'
        )
        if report.with_source_lss:
            line += f',{format_score(row.lss_lr)},{format_score(row.lss_hr)}'
        if report.with_baseline:
            line += f',{format_psnr(row.bicubic_psnr)}'
        o.write(line + '\n')


def write_eval_csv(path: str | Path, report: EvalReport):
    with atomic_output(path) as tmp_path:
        with open(tmp_path, 'w', encoding='utf-8') as o:
            _write_eval(o, report)


def write_history_csv(path: str | Path, history: List[HqsRecord]):
    with atomic_output(path) as tmp_path:
        with open(tmp_path, 'w', encoding='utf-8') as o:
            o.write(HISTORY_HEADER + '\n')
            for record in history:
                o.write(
                    f'{record.step},{record.beta!r},{record.objective!r},'
                    f'{record.penalized!r},{record.half}\n'
                )


def write_loss_csv(path: str | Path, losses: List[Tuple[int, float]]):
    with atomic_output(path) as tmp_path:
        with open(tmp_path, 'w', encoding='utf-8') as o:
            o.write(LOSS_HEADER + '\n')
            for step, loss in losses:
                o.write(f'{step},{loss!r}\n')


def read_loss_csv(path: str | Path) -> List[Tuple[int, float]]:
    losses: List[Tuple[int, float]] = []
    with open(path, 'r', encoding='utf-8') as file:
        lines = file.read().splitlines()

    if not lines or lines[0] != LOSS_HEADER:
        raise DataError(f'{path} is not a loss log')

    for line in lines[1:]:
        if not line:
            continue
        step, loss = line.split(',')
        losses.append((int(step), float(loss)))

    return losses


def save_feature_map(path: str | Path, data: np.ndarray):
    # data is a [0, 1] map, written as 8-bit grayscale
    pixels = np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)
    image = PILImage.fromarray(pixels)
    with atomic_output(path) as tmp_path:
        image.save(tmp_path, format='PNG')
