# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Dict

from utils import Color, DataError, color_print

SEED_ENV_VARIABLE = 'HSR_SEED'

SCALES = [2, 3, 4]
MSA_MODES = ['gate', 'additive']

default_network_config: Dict[str, Any] = {
    # Filters of Transposition and Solver LS
    'channels': 64,
    # Denoiser blocks
    'n_blocks': 10,
    # HQS iterations
    'iterations': 3,
    'scale': 4,
    'leaky_slope': 0.1,
    # Ablation switches
    'msa_enabled': True,
    'msa_mode': 'gate',
    'share_iter_weights': True,
    # Kernel of the HEB fusion conv
    'heb_fuse_kernel': 3,
    'heb_branches': 4,
    'msa_levels': 3,
}

default_train_config: Dict[str, Any] = {
    'lr': 1e-4,
    'epochs': 1000,
    'batch_size': 4,
    # LR patch side
    'patch_size': 48,
    'seed': 0,
    'data_dir': 'data/DIV2K_train_HR',
    'checkpoint': 'hsrnet.ckpt',
    # Epochs, 0 writes only the final checkpoint
    'checkpoint_interval': 0,
    'log_interval': 10,
    'loss_log': '',
    'augment': False,
}

default_hqs_config: Dict[str, Any] = {
    'beta0': 0.01,
    'beta_growth': 4.0,
    'iterations': 8,
    # λ of the quadratic smoothness prior
    'prior_weight': 0.005,
    'cg_tol': 1e-8,
    'cg_maxiter': 2000,
    # LS/prox alternations per β
    'inner_iters': 1,
}


class HsrConfig:
    def __init__(
        self,
        *,
        channels: int = default_network_config['channels'],
        n_blocks: int = default_network_config['n_blocks'],
        iterations: int = default_network_config['iterations'],
        scale: int = default_network_config['scale'],
        leaky_slope: float = default_network_config['leaky_slope'],
        msa_enabled: bool = default_network_config['msa_enabled'],
        msa_mode: str = default_network_config['msa_mode'],
        share_iter_weights: bool = default_network_config[
            'share_iter_weights'
        ],
        heb_fuse_kernel: int = default_network_config['heb_fuse_kernel'],
        heb_branches: int = default_network_config['heb_branches'],
        msa_levels: int = default_network_config['msa_levels'],
    ):
        if heb_branches != 4:
            raise DataError(f'heb_branches is fixed to 4, got {heb_branches}')
        if msa_levels != 3:
            raise DataError(f'msa_levels is fixed to 3, got {msa_levels}')
        if channels < 16 or channels % 16:
            raise DataError(
                f'channels must be a positive multiple of 16, got {channels}'
            )
        if n_blocks < 1:
            raise DataError(f'n_blocks must be >= 1, got {n_blocks}')
        if iterations < 1:
            raise DataError(f'iterations must be >= 1, got {iterations}')
        if scale not in SCALES:
            raise DataError(f'scale must be one of {SCALES}, got {scale}')
        if not 0 < leaky_slope < 1:
            raise DataError(f'leaky_slope must be in (0, 1), got {leaky_slope}')
        if msa_mode not in MSA_MODES:
            raise DataError(f'msa_mode must be one of {MSA_MODES}')
        if heb_fuse_kernel not in [1, 3]:
            raise DataError(
                f'heb_fuse_kernel must be 1 or 3, got {heb_fuse_kernel}'
            )
        for key, value in [
            ('msa_enabled', msa_enabled),
            ('share_iter_weights', share_iter_weights),
        ]:
            if not isinstance(value, bool):
                raise DataError(f'{key} must be true or false, got {value!r}')

        self.channels = channels
        self.n_blocks = n_blocks
        self.iterations = iterations
        self.scale = scale
        self.leaky_slope = leaky_slope
        self.msa_enabled = msa_enabled
        self.msa_mode = msa_mode
        self.share_iter_weights = share_iter_weights
        self.heb_fuse_kernel = heb_fuse_kernel
        self.heb_branches = heb_branches
        self.msa_levels = msa_levels

    def to_dict(self) -> Dict[str, Any]:
        return {key: getattr(self, key) for key in default_network_config}

    def replace(self, **changes: Any) -> HsrConfig:
        data = self.to_dict()
        data.update(changes)
        return HsrConfig(**data)

    def __eq__(self, other: object):
        if not isinstance(other, HsrConfig):
            return False
        return self.to_dict() == other.to_dict()

    def __str__(self):
        s = f'{self.__class__.__name__}:\n'
        for key, value in self.to_dict().items():
            s += f'\t{key}: {value}\n'
        return s


class TrainConfig:
    def __init__(
        self,
        *,
        network: HsrConfig,
        lr: float = default_train_config['lr'],
        epochs: int = default_train_config['epochs'],
        batch_size: int = default_train_config['batch_size'],
        patch_size: int = default_train_config['patch_size'],
        seed: int = default_train_config['seed'],
        data_dir: str = default_train_config['data_dir'],
        checkpoint: str = default_train_config['checkpoint'],
        checkpoint_interval: int = default_train_config['checkpoint_interval'],
        log_interval: int = default_train_config['log_interval'],
        loss_log: str = default_train_config['loss_log'],
        augment: bool = default_train_config['augment'],
    ):
        if lr < 0:
            raise DataError(f'lr must be >= 0, got {lr}')
        if epochs < 0 or batch_size < 1:
            raise DataError(
                f'invalid epochs={epochs} batch_size={batch_size}'
            )
        if patch_size < 8 or patch_size % 4:
            raise DataError(
                f'patch_size must be a multiple of 4 and >= 8, got {patch_size}'
            )
        if not isinstance(augment, bool):
            raise DataError(f'augment must be true or false, got {augment!r}')

        self.network = network
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.patch_size = patch_size
        self.seed = seed
        self.data_dir = data_dir
        self.checkpoint = checkpoint
        self.checkpoint_interval = checkpoint_interval
        self.log_interval = log_interval
        self.loss_log = loss_log or str(
            Path(checkpoint).with_suffix('.loss.csv')
        )
        self.augment = augment

    @property
    def scale(self):
        return self.network.scale

    def to_dict(self) -> Dict[str, Any]:
        data = {key: getattr(self, key) for key in default_train_config}
        data['network'] = self.network.to_dict()
        return data

    def __str__(self):
        s = f'{self.__class__.__name__}:\n'
        for key in default_train_config:
            s += f'\t{key}: {getattr(self, key)}\n'
        s += str(self.network)
        return s


def read_config_document(config_path: str) -> Dict[str, Any]:
    try:
        data = json.loads(Path(config_path).read_text())
    except json.JSONDecodeError as e:
        raise DataError(f'Invalid JSON in {config_path}: {e}') from e

    if not isinstance(data, dict):
        raise DataError(f'{config_path} must contain a JSON object')

    return data


def network_config_from_dict(data: Dict[str, Any]) -> HsrConfig:
    variables = default_network_config.copy()
    for key, value in data.items():
        if key not in variables:
            raise DataError(f'Unknown network config key {key}')
        variables[key] = value

    return HsrConfig(**variables)


def train_config_from_dict(data: Dict[str, Any]) -> TrainConfig:
    data = dict(data)
    network = network_config_from_dict(data.pop('network', {}))

    variables = default_train_config.copy()
    for key, value in data.items():
        if key not in variables:
            raise DataError(f'Unknown train config key {key}')
        variables[key] = value

    seed_override = os.environ.get(SEED_ENV_VARIABLE)
    if seed_override is not None:
        try:
            variables['seed'] = int(seed_override)
        except ValueError as e:
            raise DataError(
                f'{SEED_ENV_VARIABLE} must be an integer, got {seed_override}'
            ) from e

        color_print(
            f'Found variable {SEED_ENV_VARIABLE}={variables["seed"]}',
            color=Color.GREEN,
        )

    return TrainConfig(network=network, **variables)


def load_train_config(config_path: str) -> TrainConfig:
    return train_config_from_dict(read_config_document(config_path))


def load_network_config(config_path: str) -> HsrConfig:
    # Accepts a train config document or a bare network config
    data = read_config_document(config_path)
    if 'network' in data:
        return network_config_from_dict(data['network'])

    return network_config_from_dict(data)
