# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

import os
import sys
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Generator


class ShapeError(ValueError):
    pass


class DataError(ValueError):
    pass


class CheckpointError(DataError):
    pass


class NumericError(ArithmeticError):
    pass


class Color(str, Enum):
    RED = '\033[0;31m'
    GREEN = '\033[0;32m'
    YELLOW = '\033[1;33m'
    END = '\033[0m'


def color_print(*args: object, color: Color, **kwargs):
    file = kwargs.pop('file', sys.stderr)
    args_str = ' '.join(str(arg) for arg in args)
    if file.isatty():
        args_str = color.value + args_str + Color.END.value
    print(args_str, file=file, **kwargs)


def shape_str(shape: tuple[int, ...]):
    return '(' + ', '.join(str(d) for d in shape) + ')'


@contextmanager
def atomic_output(output_path: str | Path) -> Generator[Path, None, None]:
    # Yields a sibling temporary path, renamed over output_path on success
    output_path = Path(output_path)
    if output_path.parent != Path(''):
        output_path.parent.mkdir(parents=True, exist_ok=True)

    tmp_path = output_path.with_name(f'.{output_path.name}.tmp')

    try:
        yield tmp_path
        os.replace(tmp_path, output_path)
    finally:
        if tmp_path.exists():
            tmp_path.unlink()
