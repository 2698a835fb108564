"""Named parameters, gradient accumulators and the ADAM update."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from ..errors import ConfigurationError
from .tensor import Tensor, check_finite


class Gradients(dict):
    """Parameter name -> accumulated gradient array.

    Merging is done with :meth:`merge`, which adds in the order the inputs
    are given; callers pass batch members in index order so that results do
    not depend on how the work was scheduled.
    """

    def accumulate(self, name: str, g: np.ndarray) -> None:
        prev = self.get(name)
        self[name] = np.array(g, dtype=np.float64) if prev is None else prev + g

    def scaled(self, c: float) -> Gradients:
        return Gradients({k: v * c for k, v in self.items()})

    @classmethod
    def merge(cls, parts: Iterable[Mapping[str, np.ndarray]]) -> Gradients:
        out = cls()
        for part in parts:
            for name, g in part.items():
                out.accumulate(name, g)
        return out

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.values())))


@dataclass
class ParamStore:
    """θ plus one gradient accumulator and two ADAM moments per parameter."""

    params: dict[str, np.ndarray] = field(default_factory=dict)
    grads: dict[str, np.ndarray] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=np.float64)
        check_finite(arr, name)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def num_values(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def tensors(self, requires_grad: bool = True) -> dict[str, Tensor]:
        """Leaf tensors viewing the current values (no copy)."""
        return {n: Tensor(p, requires_grad=requires_grad, name=n) for n, p in self.params.items()}

    def accumulate(self, grads: Mapping[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if name not in self.params:
                raise ConfigurationError(f"gradient for unknown parameter {name!r}")
            self.grads[name] = self.grads[name] + g

    def clear_grads(self) -> None:
        for name in self.grads:
            self.grads[name] = np.zeros_like(self.params[name])

    def copy(self) -> ParamStore:
        return ParamStore(
            params={k: v.copy() for k, v in self.params.items()},
            grads={k: v.copy() for k, v in self.grads.items()},
            m={k: v.copy() for k, v in self.m.items()},
            v={k: v.copy() for k, v in self.v.items()},
            step=self.step,
        )


def collect_grads(leaves: Mapping[str, Tensor]) -> Gradients:
    return Gradients({n: t.grad for n, t in leaves.items() if t.grad is not None})


def adam_step(store: ParamStore, grads: Mapping[str, np.ndarray] | None = None, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> ParamStore:
    """Bias-corrected ADAM applied in place to every parameter in ``store``.

    ``grads`` is added to the store's accumulators first; a parameter with no
    gradient anywhere is updated with a zero gradient, which leaves it
    unchanged only while its moments are still zero. Accumulators are cleared
    afterwards and ``store.step`` is incremented (t starts at 1).
    """
    if grads is not None:
        store.accumulate(grads)
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in store.params.items():
        g = store.grads[name]
        m = beta1 * store.m[name] + (1.0 - beta1) * g
        v = beta2 * store.v[name] + (1.0 - beta2) * g * g
        store.m[name], store.v[name] = m, v
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    store.clear_grads()
    return store
