# SPDX-FileCopyrightText: 2025 The hsrnet Authors
# SPDX-License-Identifier: Apache-2.0

"""Define-by-run reverse-mode tensors.

Every forward op builds a new Tensor holding its parents and a closure that
maps the output gradient to one gradient per parent (None for parents that
do not need one). backward() walks the recorded graph in reverse topological
order.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils import ShapeError, shape_str

GradFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    def __init__(
        self,
        data: np.ndarray | float | Sequence,
        requires_grad: bool = False,
        parents: Tuple[Tensor, ...] = (),
        grad_fn: Optional[GradFn] = None,
        op: str = '',
    ):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 4:
            raise ShapeError(
                f'Tensor rank {self.data.ndim} exceeds 4: '
                f'{shape_str(self.data.shape)}'
            )

        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.op = op
        self._parents = parents
        self._grad_fn = grad_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(
                f'item() needs a single element, got {shape_str(self.shape)}'
            )
        return float(self.data.reshape(()))

    def __repr__(self):
        op = f', op={self.op}' if self.op else ''
        return f'Tensor(shape={shape_str(self.shape)}{op})'


def make_result(
    data: np.ndarray,
    parents: Tuple[Tensor, ...],
    grad_fn: GradFn,
    op: str,
) -> Tensor:
    requires_grad = any(p.requires_grad for p in parents)
    if not requires_grad:
        return Tensor(data, op=op)

    return Tensor(
        data,
        requires_grad=True,
        parents=parents,
        grad_fn=grad_fn,
        op=op,
    )


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited: set[int] = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]

    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue

        if id(node) in visited:
            continue
        visited.add(id(node))

        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    return order


def backward(loss: Tensor):
    if loss.size != 1:
        raise ShapeError(
            f'backward() needs a scalar loss, got {shape_str(loss.shape)}'
        )

    if not loss.requires_grad:
        return

    # Gradients of this pass only, added to .grad once complete
    pass_grads: Dict[int, np.ndarray] = {
        id(loss): np.ones_like(loss.data),
    }

    for node in reversed(_topological_order(loss)):
        grad = pass_grads.pop(id(node), None)
        if grad is None:
            continue

        if node.grad is None:
            node.grad = grad.copy()
        else:
            node.grad += grad

        if node._grad_fn is None:
            continue

        parent_grads = node._grad_fn(grad)
        assert len(parent_grads) == len(node._parents), node.op

        for parent, parent_grad in zip(node._parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue

            assert parent_grad.shape == parent.shape, (
                f'{node.op}: gradient {shape_str(parent_grad.shape)} for '
                f'input {shape_str(parent.shape)}'
            )

            key = id(parent)
            if key in pass_grads:
                pass_grads[key] = pass_grads[key] + parent_grad
            else:
                pass_grads[key] = parent_grad
