# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

from __future__ import annotations

from typing import Dict

import numpy as np

from weights import NetworkWeights


class AdamState:
    def __init__(
        self,
        *,
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def hyperparameters(self):
        return {
            'lr': self.lr,
            'beta1': self.beta1,
            'beta2': self.beta2,
            'eps': self.eps,
            't': self.t,
        }


def adam_step(params: NetworkWeights, state: AdamState):
    trainable = [p for p in params.walk() if p.trainable]

    # Validate everything before touching any parameter
    for param in trainable:
        if param.value.grad is None:
            raise ValueError(f'Parameter {param.name} has no gradient')

    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t

    for param in trainable:
        grad = param.value.grad
        assert grad is not None

        m = state.m.setdefault(param.name, np.zeros_like(grad))
        v = state.v.setdefault(param.name, np.zeros_like(grad))
        assert m.shape == param.shape and v.shape == param.shape

        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad

        m_hat = m / correction1
        v_hat = v / correction2
        param.value.data = param.value.data - state.lr * m_hat / (
            np.sqrt(v_hat) + state.eps
        )
