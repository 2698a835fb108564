"""A dense binary64 tensor that records just enough to run reverse mode."""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NonFiniteError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def check_finite(data: np.ndarray, what: str = "tensor") -> None:
    if not np.isfinite(data).all():
        bad = int(np.size(data) - np.count_nonzero(np.isfinite(data)))
        raise NonFiniteError(f"{what}: {bad} non-finite value(s)")


class Tensor:
    """Values plus (optionally) the recipe for pushing gradients to parents.

    ``Tensor`` is not a general autodiff engine: the only nodes that ever get
    created are the outputs of the functions in :mod:`sanas.numcore.ops`.
    Each op hands the constructor its parents and a closure mapping the
    output gradient to one gradient per parent.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple[Tensor, ...] = (),
        _backward: BackwardFn | None = None,
    ):
        arr = np.asarray(data, dtype=np.float64)
        check_finite(arr, name or "tensor")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | float | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that needs it.

        Nodes are visited in reverse topological order of construction, so the
        sequence of floating-point additions is fixed for a given graph.
        """
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        seed = np.asarray(grad, dtype=np.float64)
        order = _topological(self)
        pending: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                prev = pending.get(key)
                pending[key] = pg if prev is None else prev + pg


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def make(data: np.ndarray, parents: Iterable[Tensor], backward: BackwardFn, name: str | None = None) -> Tensor:
    """Build an op output; the tape entry is dropped when no parent needs grad."""
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, name=name, _parents=parents, _backward=backward)
    return Tensor(data, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
