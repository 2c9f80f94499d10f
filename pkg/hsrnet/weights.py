# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

import itertools
from typing import (
    Dict,
    Generator,
    List,
    Optional,
    Sequence,
    Set,
    Tuple,
)

from tensor import Tensor
from utils import shape_str

NAME_SEPARATOR = '.'


def name_parts(name: str) -> Tuple[str, ...]:
    return tuple(name.split(NAME_SEPARATOR))


def parts_with_wildcards(
    parts: Sequence[str],
) -> Generator[Tuple[Optional[str], ...], None, None]:
    choices = [(part, None) for part in parts]
    yield from itertools.product(*choices)


class Parameter:
    def __init__(self, name: str, value: Tensor, trainable: bool = True):
        self.name = name
        self.value = value
        self.trainable = trainable
        value.requires_grad = trainable

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f'Parameter({self.name}, {shape_str(self.shape)})'


class NetworkWeights:
    """Ordered, uniquely named parameter collection.

    Parameters are also indexed by every wildcard pattern of their dotted
    name: match(('denoiser', None, 'fuse', 'weight')) returns the HEB and
    MSA fusion weights of every denoiser block.
    """

    def __init__(self):
        self.__params: Dict[str, Parameter] = {}
        self.__patterns: Dict[
            int, Dict[Tuple[Optional[str], ...], Set[str]]
        ] = {}

    def __len__(self):
        return len(self.__params)

    def __contains__(self, name: str):
        return name in self.__params

    def __getitem__(self, name: str) -> Parameter:
        if name not in self.__params:
            raise KeyError(f'Unknown parameter {name}')
        return self.__params[name]

    def value(self, name: str) -> Tensor:
        return self[name].value

    def walk(self) -> Generator[Parameter, None, None]:
        yield from self.__params.values()

    def add(self, param: Parameter):
        assert param.name not in self.__params, (
            f'Parameter {param.name} already exists'
        )

        self.__params[param.name] = param

        parts = name_parts(param.name)
        levels_data = self.__patterns.setdefault(len(parts), {})
        for pattern in parts_with_wildcards(parts):
            levels_data.setdefault(pattern, set()).add(param.name)

    def match(
        self,
        keys: Sequence[Optional[str]],
    ) -> List[Parameter]:
        keys_tuple = tuple(keys)

        levels_data = self.__patterns.get(len(keys_tuple))
        if levels_data is None:
            return []

        names = levels_data.get(keys_tuple, set())
        # Registration order, not set order
        return [p for p in self.walk() if p.name in names]

    def count(self) -> int:
        return sum(p.value.size for p in self.walk())

    def zero_grad(self):
        for param in self.walk():
            param.value.zero_grad()
