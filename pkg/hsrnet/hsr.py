#!/usr/bin/env python3
# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

import sys
from argparse import ArgumentParser, Namespace
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, NoReturn, Optional

from checkpoint import Checkpoint, load_checkpoint
from config import (
    SCALES,
    default_hqs_config,
    load_network_config,
    load_train_config,
)
from features import STAGE_TAGS, HqsNetState, dump_features
from gradcheck import TOLERANCE, run_gradcheck
from hqs import DegradationOperator, HqsConfig, hqs_run, initial_estimate
from imaging import Image, load, save
from metrics import (
    LSS_SOURCES,
    EvalReport,
    EvalRow,
    LssParams,
    format_psnr,
    format_score,
    lss_image,
    psnr,
    ssim,
)
from network import param_count, super_resolve, super_resolve_iterations
from output import save_feature_map, write_eval_csv, write_history_csv
from trainer import TrainPair, build_pairs, crop_to_multiple, degrade, train
from utils import Color, DataError, NumericError, color_print

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageArgumentParser(ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def cmd_train(args: Namespace) -> int:
    cfg = load_train_config(args.config)
    color_print(str(cfg), color=Color.GREEN)

    result = train(cfg, resume=args.resume)
    if result.losses:
        step, loss = result.losses[-1]
        print(f'step {step} loss {loss:.6f}')
    return EXIT_OK


def iteration_path(out: Path, k: int) -> Path:
    return out.with_name(f'{out.stem}_k{k}{out.suffix}')


def cmd_infer(args: Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    lr = load(args.input)
    out = Path(args.output)

    sr = super_resolve(lr.pixels, ckpt.config, ckpt.weights)
    save(Image(sr), out)

    if args.all_iterations:
        outputs = super_resolve_iterations(
            lr.pixels, ckpt.config, ckpt.weights
        )
        for k, pixels in enumerate(outputs):
            save(Image(pixels), iteration_path(out, k))

    color_print(
        f'Wrote {out} ({sr.shape[0]}x{sr.shape[1]})', color=Color.GREEN
    )
    return EXIT_OK


def cmd_degrade(args: Namespace) -> int:
    hr = load(args.input)
    if hr.height % args.scale or hr.width % args.scale:
        hr = crop_to_multiple(hr, args.scale)
        color_print(
            f'Cropped input to {hr.height}x{hr.width}', color=Color.YELLOW
        )

    lr = degrade(hr, args.scale)
    save(lr, args.output)
    return EXIT_OK


def _optional_lss(img: Image, label: str) -> Optional[float]:
    region = LssParams().region
    if min(img.height, img.width) < region:
        color_print(
            f'Skipping LSS of {label}: {img.height}x{img.width} is smaller '
            f'than {region}x{region}',
            color=Color.YELLOW,
        )
        return None

    return lss_image(img)


def _eval_pair(
    pair: TrainPair,
    args: Namespace,
    ckpt: Checkpoint,
) -> EvalRow:
    sr = Image(super_resolve(pair.lr.pixels, ckpt.config, ckpt.weights))
    crop = args.scale if args.crop is None else args.crop

    bicubic_psnr: Optional[float] = None
    if args.baseline:
        bicubic = Image(initial_estimate(pair.lr.pixels, args.scale))
        bicubic_psnr = psnr(bicubic, pair.hr, crop, args.y_only)

    lss_lr: Optional[float] = None
    lss_hr: Optional[float] = None
    if args.correlate:
        lss_lr = _optional_lss(pair.lr, f'{pair.name} (LR)')
        lss_hr = _optional_lss(pair.hr, f'{pair.name} (HR)')

    return EvalRow(
        name=pair.name,
        psnr=psnr(sr, pair.hr, crop, args.y_only),
        ssim=ssim(sr, pair.hr, args.y_only, crop),
        lss=_optional_lss(sr, pair.name),
        lss_lr=lss_lr,
        lss_hr=lss_hr,
        bicubic_psnr=bicubic_psnr,
    )


def cmd_eval(args: Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    if ckpt.config.scale != args.scale:
        raise DataError(
            f'Checkpoint is trained for x{ckpt.config.scale}, '
            f'not x{args.scale}'
        )

    pairs = build_pairs(args.hr_dir, args.scale)

    def evaluate(pair: TrainPair) -> EvalRow:
        return _eval_pair(pair, args, ckpt)

    with ThreadPoolExecutor(max_workers=args.jobs) as executor:
        rows = list(executor.map(evaluate, pairs))

    report = EvalReport(
        rows,
        with_baseline=args.baseline,
        with_source_lss=args.correlate,
    )
    if args.csv is not None:
        write_eval_csv(args.csv, report)
    else:
        for row in report.rows:
            print(
                f'{row.name},{format_psnr(row.psnr)},'
                f'{row.ssim:.6f},{format_score(row.lss)}'
            )

    color_print(
        f'mean psnr {format_psnr(report.mean_psnr())} '
        f'ssim {report.mean_ssim():.6f} '
        f'lss {format_score(report.mean_lss()) or "n/a"}',
        color=Color.GREEN,
    )
    if args.baseline:
        color_print(
            f'mean bicubic psnr {format_psnr(report.mean_bicubic_psnr())}',
            color=Color.GREEN,
        )

    if args.correlate:
        for source in LSS_SOURCES:
            correlation = report.correlation(source)
            if correlation is None:
                color_print(
                    f'Too few {source} LSS values to correlate',
                    color=Color.YELLOW,
                )
                continue

            plcc_value, srcc_value = correlation
            print(f'{source} plcc {plcc_value:.6f} srcc {srcc_value:.6f}')

    return EXIT_OK


def cmd_lss(args: Namespace) -> int:
    print(f'{lss_image(load(args.input)):.6f}')
    return EXIT_OK


def cmd_params(args: Namespace) -> int:
    cfg = load_network_config(args.config)
    if args.scale is not None:
        cfg = cfg.replace(scale=args.scale)

    total, breakdown = param_count(cfg)
    for key, count in breakdown.items():
        color_print(f'{key}: {count}', color=Color.GREEN)
    print(total)
    return EXIT_OK


def cmd_gradcheck(args: Namespace) -> int:
    worst = run_gradcheck(cases=args.cases, seed=args.seed)

    failed = False
    for name, error in worst.items():
        passed = error < TOLERANCE
        failed |= not passed
        color_print(
            f'{name}: max relative error {error:.2e}',
            color=Color.GREEN if passed else Color.RED,
        )

    if failed:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_hqs_demo(args: Namespace) -> int:
    hr = load(args.input)
    if hr.height % args.scale or hr.width % args.scale:
        hr = crop_to_multiple(hr, args.scale)

    op = DegradationOperator.gaussian(args.sigma, scale=args.scale)
    cfg = HqsConfig(
        iterations=args.iters,
        prior_weight=args.prior_weight,
        inner_iters=args.inner_iters,
    )

    i_lr = op.apply(hr.pixels)
    x, history = hqs_run(i_lr, op, cfg)

    for record in history:
        color_print(
            f'{record.step} {record.half} beta {record.beta:g} '
            f'objective {record.objective:.6g}',
            color=Color.GREEN,
        )

    if args.history is not None:
        write_history_csv(args.history, history)
    if args.output is not None:
        save(Image(x), args.output)

    bicubic = Image(initial_estimate(i_lr, args.scale))
    restored = Image(x)
    print(f'bicubic {format_psnr(psnr(bicubic, hr, 0, False))} dB')
    print(f'hqs {format_psnr(psnr(restored, hr, 0, False))} dB')
    return EXIT_OK


def cmd_features(args: Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    lr = load(args.input)

    state = HqsNetState()
    super_resolve(lr.pixels, ckpt.config, ckpt.weights, state)

    out_dir = Path(args.out_dir)
    stages = args.stage or STAGE_TAGS
    count = 0
    for stage in stages:
        for name, data in dump_features(state, stage):
            save_feature_map(out_dir / f'{name}.png', data)
            count += 1

    color_print(f'Wrote {count} feature maps to {out_dir}', color=Color.GREEN)
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = UsageArgumentParser(
        prog='hsr',
        description='Iterative super-resolution toolkit',
    )
    subparsers = parser.add_subparsers(
        dest='command',
        required=True,
        parser_class=UsageArgumentParser,
    )

    p = subparsers.add_parser('train', help='Train a network')
    p.add_argument('--config', required=True, help='Train config JSON')
    p.add_argument('--resume', help='Checkpoint to resume from')
    p.set_defaults(fn=cmd_train)

    p = subparsers.add_parser('infer', help='Super-resolve one image')
    p.add_argument('--ckpt', required=True, help='Checkpoint')
    p.add_argument('--in', dest='input', required=True, help='LR image')
    p.add_argument('--out', dest='output', required=True, help='SR image')
    p.add_argument(
        '--all-iterations',
        action='store_true',
        help='Also write <stem>_k<k> for every iteration',
    )
    p.set_defaults(fn=cmd_infer)

    p = subparsers.add_parser('degrade', help='Bicubic downscale an image')
    p.add_argument('--in', dest='input', required=True, help='HR image')
    p.add_argument('--out', dest='output', required=True, help='LR image')
    p.add_argument('--scale', type=int, required=True, choices=SCALES)
    p.set_defaults(fn=cmd_degrade)

    p = subparsers.add_parser('eval', help='Evaluate on a directory')
    p.add_argument('--ckpt', required=True, help='Checkpoint')
    p.add_argument('--hr-dir', required=True, help='Directory of HR images')
    p.add_argument('--scale', type=int, required=True, choices=SCALES)
    p.add_argument(
        '--y-only',
        dest='y_only',
        action='store_true',
        default=True,
        help='Compare the luma channel (default)',
    )
    p.add_argument(
        '--rgb',
        dest='y_only',
        action='store_false',
        help='Compare all RGB channels',
    )
    p.add_argument(
        '--crop', type=int, help='Border to ignore (default: the scale)'
    )
    p.add_argument('--csv', help='Write the per-image table here')
    p.add_argument(
        '--correlate',
        action='store_true',
        help='Print PLCC/SRCC between PSNR and LSS',
    )
    p.add_argument(
        '--baseline',
        action='store_true',
        help='Add a bicubic_psnr column',
    )
    p.add_argument('--jobs', type=int, default=1, help='Parallel images')
    p.set_defaults(fn=cmd_eval)

    p = subparsers.add_parser('lss', help='Image local self-similarity')
    p.add_argument('--in', dest='input', required=True, help='Image')
    p.set_defaults(fn=cmd_lss)

    p = subparsers.add_parser('params', help='Count network parameters')
    p.add_argument('--config', required=True, help='Network or train config')
    p.add_argument('--scale', type=int, choices=SCALES, help='Override scale')
    p.set_defaults(fn=cmd_params)

    p = subparsers.add_parser('gradcheck', help='Finite-difference checks')
    p.add_argument('--cases', type=int, default=20, help='Cases per op')
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    p = subparsers.add_parser('hqs-demo', help='Classical HQS restoration')
    p.add_argument('--in', dest='input', required=True, help='HR image')
    p.add_argument('--scale', type=int, required=True)
    p.add_argument(
        '--iters', type=int, default=default_hqs_config['iterations']
    )
    p.add_argument('--sigma', type=float, default=1.0, help='Blur sigma')
    p.add_argument(
        '--prior-weight',
        type=float,
        default=default_hqs_config['prior_weight'],
    )
    p.add_argument(
        '--inner-iters',
        type=int,
        default=default_hqs_config['inner_iters'],
    )
    p.add_argument('--history', help='Write step,beta,objective CSV here')
    p.add_argument('--out', dest='output', help='Write the restored image')
    p.set_defaults(fn=cmd_hqs_demo)

    p = subparsers.add_parser('features', help='Dump feature maps')
    p.add_argument('--ckpt', required=True, help='Checkpoint')
    p.add_argument('--in', dest='input', required=True, help='LR image')
    p.add_argument('--out-dir', required=True, help='Output directory')
    p.add_argument(
        '--stage',
        action='append',
        choices=STAGE_TAGS,
        help='Stage to dump, repeatable (default: all)',
    )
    p.set_defaults(fn=cmd_features)

    return parser


def run(argv: List[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code is None else int(e.code)

    try:
        return args.fn(args)
    except NumericError as e:
        color_print(f'error: {e}', color=Color.RED)
        return EXIT_NUMERIC
    except (OSError, ValueError) as e:
        color_print(f'error: {e}', color=Color.RED)
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(run(sys.argv[1:]))
