# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

"""HSRW checkpoint files.

    magic 'HSRW', u32 version
    sections: 4-byte tag, u64 payload length, payload

CONF holds the network config as JSON, PARM the parameter table in float32,
ADAM the optimizer state together with a float64 copy of every parameter.
Unknown sections are skipped. All integers are little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Tuple

import numpy as np

from config import HsrConfig, network_config_from_dict
from network import parameter_shapes
from optim import AdamState
from tensor import Tensor
from utils import (
    CheckpointError,
    Color,
    DataError,
    atomic_output,
    color_print,
    shape_str,
)
from weights import NetworkWeights, Parameter

MAGIC = b'HSRW'
VERSION = 1

TAG_CONF = b'CONF'
TAG_PARM = b'PARM'
TAG_ADAM = b'ADAM'

PARAM_DTYPE = np.dtype('<f4')
STATE_DTYPE = np.dtype('<f8')


class Checkpoint:
    def __init__(
        self,
        *,
        config: HsrConfig,
        weights: NetworkWeights,
        optimizer: Optional[AdamState] = None,
        step: int = 0,
    ):
        self.config = config
        self.weights = weights
        self.optimizer = optimizer
        self.step = step


def _write_section(o: BinaryIO, tag: bytes, payload: bytes):
    assert len(tag) == 4, tag
    o.write(tag)
    o.write(struct.pack('<Q', len(payload)))
    o.write(payload)


def _json_bytes(data: Dict) -> bytes:
    return json.dumps(data, sort_keys=True).encode('utf-8')


def _parm_payload(weights: NetworkWeights) -> bytes:
    chunks = [struct.pack('<I', len(weights))]
    for param in weights.walk():
        name = param.name.encode('utf-8')
        shape = param.shape
        chunks.append(struct.pack('<H', len(name)))
        chunks.append(name)
        chunks.append(struct.pack('<B', len(shape)))
        chunks.append(struct.pack(f'<{len(shape)}I', *shape))
        chunks.append(param.value.data.astype(PARAM_DTYPE).tobytes())
    return b''.join(chunks)


def _adam_payload(
    weights: NetworkWeights,
    optimizer: AdamState,
    step: int,
) -> bytes:
    header = optimizer.hyperparameters()
    header['step'] = step
    header_bytes = _json_bytes(header)

    chunks = [struct.pack('<I', len(header_bytes)), header_bytes]
    for param in weights.walk():
        zeros = np.zeros(param.shape)
        m = optimizer.m.get(param.name, zeros)
        v = optimizer.v.get(param.name, zeros)
        for array in [m, v, param.value.data]:
            chunks.append(array.astype(STATE_DTYPE).tobytes())
    return b''.join(chunks)


def _write_checkpoint(o: BinaryIO, checkpoint: Checkpoint):
    o.write(MAGIC)
    o.write(struct.pack('<I', VERSION))

    _write_section(o, TAG_CONF, _json_bytes(checkpoint.config.to_dict()))
    _write_section(o, TAG_PARM, _parm_payload(checkpoint.weights))
    if checkpoint.optimizer is not None:
        _write_section(
            o,
            TAG_ADAM,
            _adam_payload(
                checkpoint.weights, checkpoint.optimizer, checkpoint.step
            ),
        )


def save_checkpoint(path: str | Path, checkpoint: Checkpoint):
    with atomic_output(path) as tmp_path:
        with open(tmp_path, 'wb') as o:
            _write_checkpoint(o, checkpoint)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def remaining(self):
        return len(self.data) - self.offset

    def read(self, n: int) -> bytes:
        if n > self.remaining():
            raise CheckpointError('truncated checkpoint')
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))

    def array(self, dtype: np.dtype, shape: Tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        raw = self.read(count * dtype.itemsize)
        return np.frombuffer(raw, dtype=dtype).reshape(shape)


def _read_sections(data: bytes) -> Dict[bytes, bytes]:
    reader = _Reader(data)
    if reader.remaining() < len(MAGIC) + 4:
        raise CheckpointError('truncated checkpoint')

    if reader.read(len(MAGIC)) != MAGIC:
        raise CheckpointError('bad magic')

    (version,) = reader.unpack('<I')
    if version != VERSION:
        raise CheckpointError(
            f'unsupported checkpoint version {version}, expected {VERSION}'
        )

    sections: Dict[bytes, bytes] = {}
    while reader.remaining():
        tag = reader.read(4)
        (length,) = reader.unpack('<Q')
        payload = reader.read(length)

        if tag not in [TAG_CONF, TAG_PARM, TAG_ADAM]:
            color_print(
                f'Skipping unknown checkpoint section {tag!r}',
                color=Color.YELLOW,
            )
            continue

        if tag in sections:
            raise CheckpointError(f'duplicate checkpoint section {tag!r}')
        sections[tag] = payload

    for tag in [TAG_CONF, TAG_PARM]:
        if tag not in sections:
            raise CheckpointError(f'missing checkpoint section {tag!r}')

    return sections


def _parse_json(payload: bytes, what: str) -> Dict:
    try:
        data = json.loads(payload.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f'corrupt {what}: {e}') from e

    if not isinstance(data, dict):
        raise CheckpointError(f'corrupt {what}: not a JSON object')
    return data


def _parse_parm(payload: bytes) -> List[Tuple[str, np.ndarray]]:
    reader = _Reader(payload)
    (count,) = reader.unpack('<I')

    table: List[Tuple[str, np.ndarray]] = []
    for _ in range(count):
        (name_len,) = reader.unpack('<H')
        name = reader.read(name_len).decode('utf-8')
        (ndim,) = reader.unpack('<B')
        shape = reader.unpack(f'<{ndim}I')
        table.append((name, reader.array(PARAM_DTYPE, shape)))

    if reader.remaining():
        raise CheckpointError('trailing bytes in PARM section')

    return table


def _check_table(cfg: HsrConfig, table: List[Tuple[str, np.ndarray]]):
    expected = dict(parameter_shapes(cfg))
    stored = {name: data.shape for name, data in table}

    for name, shape in expected.items():
        if stored.get(name) != shape:
            found = stored.get(name)
            found_str = 'missing' if found is None else shape_str(found)
            raise CheckpointError(
                f'parameter {name} disagrees with config: '
                f'expected {shape_str(shape)}, found {found_str}'
            )

    for name in stored:
        if name not in expected:
            raise CheckpointError(
                f'parameter {name} disagrees with config: not expected'
            )


def _parse_adam(
    payload: bytes,
    table: List[Tuple[str, np.ndarray]],
) -> Tuple[AdamState, int, Dict[str, np.ndarray]]:
    reader = _Reader(payload)
    (header_len,) = reader.unpack('<I')
    header = _parse_json(reader.read(header_len), 'ADAM header')

    try:
        optimizer = AdamState(
            lr=header['lr'],
            beta1=header['beta1'],
            beta2=header['beta2'],
            eps=header['eps'],
        )
        optimizer.t = int(header['t'])
        step = int(header['step'])
    except KeyError as e:
        raise CheckpointError(f'corrupt ADAM header: missing {e}') from e

    values: Dict[str, np.ndarray] = {}
    for name, data in table:
        optimizer.m[name] = reader.array(STATE_DTYPE, data.shape).copy()
        optimizer.v[name] = reader.array(STATE_DTYPE, data.shape).copy()
        values[name] = reader.array(STATE_DTYPE, data.shape).copy()

    if reader.remaining():
        raise CheckpointError('trailing bytes in ADAM section')

    return optimizer, step, values


def load_checkpoint(
    path: str | Path,
    expected_config: Optional[HsrConfig] = None,
) -> Checkpoint:
    data = Path(path).read_bytes()
    sections = _read_sections(data)

    conf = _parse_json(sections[TAG_CONF], 'CONF section')
    try:
        cfg = network_config_from_dict(conf)
    except DataError as e:
        raise CheckpointError(f'invalid CONF section: {e}') from e

    if expected_config is not None and cfg != expected_config:
        raise CheckpointError('checkpoint config disagrees with the given one')

    table = _parse_parm(sections[TAG_PARM])
    _check_table(cfg, table)

    optimizer: Optional[AdamState] = None
    step = 0
    values = {name: array.astype(np.float64) for name, array in table}
    if TAG_ADAM in sections:
        optimizer, step, values = _parse_adam(sections[TAG_ADAM], table)

    # Registry order follows the config, not the file
    weights = NetworkWeights()
    for name, _ in parameter_shapes(cfg):
        weights.add(Parameter(name, Tensor(values[name])))

    color_print(
        f'Loaded {len(weights)} parameters ({weights.count()} values) '
        f'from {path}',
        color=Color.GREEN,
    )

    return Checkpoint(
        config=cfg, weights=weights, optimizer=optimizer, step=step
    )
