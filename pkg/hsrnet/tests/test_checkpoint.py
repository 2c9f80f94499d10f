# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

import struct
from typing import List

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from checkpoint import (
    MAGIC,
    Checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from network import hsrnet_forward, init_weights, parameter_shapes
from optim import AdamState
from tensor import Tensor
from utils import CheckpointError, DataError
from weights import NetworkWeights


@pytest.fixture
def trained(tiny_config):
    weights = init_weights(tiny_config, seed=4)
    optimizer = AdamState(lr=3e-4)
    optimizer.t = 7
    rng = np.random.default_rng(9)
    for param in weights.walk():
        optimizer.m[param.name] = rng.standard_normal(param.shape)
        optimizer.v[param.name] = rng.uniform(size=param.shape)
    return Checkpoint(
        config=tiny_config, weights=weights, optimizer=optimizer, step=14
    )


def section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack('<Q', len(payload)) + payload


def names(weights: NetworkWeights) -> List[str]:
    return [param.name for param in weights.walk()]


class TestRoundTrip:
    def test_with_optimizer(self, tmp_path, trained):
        path = tmp_path / 'model.ckpt'
        save_checkpoint(path, trained)
        loaded = load_checkpoint(path)

        assert loaded.config == trained.config
        assert loaded.step == 14
        assert names(loaded.weights) == names(trained.weights)
        for param in trained.weights.walk():
            assert_array_equal(
                loaded.weights.value(param.name).data, param.value.data
            )

        optimizer = loaded.optimizer
        assert optimizer is not None
        expected = trained.optimizer.hyperparameters()
        assert optimizer.hyperparameters() == expected
        for name in names(trained.weights):
            assert_array_equal(optimizer.m[name], trained.optimizer.m[name])
            assert_array_equal(optimizer.v[name], trained.optimizer.v[name])

    def test_float32_parameters(self, tmp_path, tiny_config):
        weights = init_weights(tiny_config, seed=4)
        path = tmp_path / 'model.ckpt'
        save_checkpoint(path, Checkpoint(config=tiny_config, weights=weights))
        loaded = load_checkpoint(path)

        assert loaded.optimizer is None
        assert loaded.step == 0
        for param in weights.walk():
            stored = loaded.weights.value(param.name).data
            assert stored.dtype == np.float64
            assert_array_equal(
                stored, param.value.data.astype(np.float32).astype(np.float64)
            )

    def test_float32_forward_drift(self, tmp_path, tiny_config, rng):
        weights = init_weights(tiny_config, seed=4)
        path = tmp_path / 'model.ckpt'
        save_checkpoint(path, Checkpoint(config=tiny_config, weights=weights))
        loaded = load_checkpoint(path)

        lr = Tensor(rng.uniform(size=(1, 3, 12, 12)))
        before = hsrnet_forward(lr, tiny_config, weights).data
        after = hsrnet_forward(lr, tiny_config, loaded.weights).data
        drift = np.abs(after - before).max() / np.abs(before).max()
        assert drift < 1e-5

    def test_registry_order(self, tmp_path, trained):
        path = tmp_path / 'model.ckpt'
        save_checkpoint(path, trained)
        loaded = load_checkpoint(path)
        expected = [name for name, _ in parameter_shapes(trained.config)]
        assert names(loaded.weights) == expected

    def test_loaded_weights_train(self, tmp_path, trained):
        path = tmp_path / 'model.ckpt'
        save_checkpoint(path, trained)
        loaded = load_checkpoint(path)
        assert all(p.value.requires_grad for p in loaded.weights.walk())

    def test_expected_config(self, tmp_path, trained):
        path = tmp_path / 'model.ckpt'
        save_checkpoint(path, trained)

        load_checkpoint(path, trained.config)
        with pytest.raises(CheckpointError, match='disagrees'):
            load_checkpoint(path, trained.config.replace(scale=4))


class TestCorruption:
    def _bytes(self, tmp_path, ckpt) -> bytes:
        path = tmp_path / 'model.ckpt'
        save_checkpoint(path, ckpt)
        return path.read_bytes()

    def _load(self, tmp_path, data: bytes):
        path = tmp_path / 'broken.ckpt'
        path.write_bytes(data)
        return load_checkpoint(path)

    def test_bad_magic(self, tmp_path, trained):
        data = self._bytes(tmp_path, trained)
        with pytest.raises(CheckpointError, match='bad magic'):
            self._load(tmp_path, b'HSRX' + data[4:])

    @pytest.mark.parametrize('keep', [0, 6, 40, -1])
    def test_truncated(self, tmp_path, trained, keep):
        data = self._bytes(tmp_path, trained)
        with pytest.raises(CheckpointError, match='truncated'):
            self._load(tmp_path, data[:keep])

    def test_version(self, tmp_path, trained):
        data = self._bytes(tmp_path, trained)
        patched = MAGIC + struct.pack('<I', 2) + data[8:]
        with pytest.raises(CheckpointError, match='version 2'):
            self._load(tmp_path, patched)

    def test_parameter_table_disagrees(self, tmp_path, tiny_config):
        other = tiny_config.replace(n_blocks=3)
        ckpt = Checkpoint(config=tiny_config, weights=init_weights(other, 0))
        data = self._bytes(tmp_path, ckpt)
        with pytest.raises(CheckpointError, match='disagrees with config'):
            self._load(tmp_path, data)

    def test_unknown_section_skipped(self, tmp_path, trained):
        data = self._bytes(tmp_path, trained)
        loaded = self._load(tmp_path, data + section(b'XTRA', b'\x01\x02'))
        assert loaded.step == trained.step

    def test_duplicate_section(self, tmp_path, trained):
        data = self._bytes(tmp_path, trained)
        duplicate = section(b'CONF', b'{}')
        with pytest.raises(CheckpointError, match='duplicate'):
            self._load(tmp_path, data + duplicate)

    def test_missing_parameters(self, tmp_path, trained):
        header = MAGIC + struct.pack('<I', 1)
        conf = section(b'CONF', b'{"channels": 16}')
        with pytest.raises(CheckpointError, match='missing'):
            self._load(tmp_path, header + conf)

    def test_bad_config(self, tmp_path):
        header = MAGIC + struct.pack('<I', 1)
        conf = section(b'CONF', b'{"channels": 15}')
        parm = section(b'PARM', struct.pack('<I', 0))
        with pytest.raises(CheckpointError, match='CONF'):
            self._load(tmp_path, header + conf + parm)

    def test_is_data_error(self):
        assert issubclass(CheckpointError, DataError)
