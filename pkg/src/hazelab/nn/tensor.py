"""Tensor and parameter containers for the differentiable core.

A ``Tensor`` wraps a numpy array together with an optional gradient slot.
Operations from :mod:`hazelab.nn.ops` link tensors into a backward chain;
calling :meth:`Tensor.backward` on a scalar result fills ``grad`` on every
tensor that requires it.  This is deliberately minimal: only the operations
the dehazing networks need exist, there is no broadcasting machinery and no
graph retention beyond one forward/backward cycle.

Activations use N x C x H x W layout; convolution kernels use
Cout x Cin x Kh x Kw.
"""

from __future__ import annotations

from typing import Callable, Iterator, Optional, Sequence

import numpy as np


class Tensor:
    """N-dimensional real array with an optional same-shape gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Optional[Callable[[np.ndarray], None]] = None,
    ):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data)

    def detach(self) -> "Tensor":
        """A view of the same data with no history and no gradient demand."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar: fills .grad on every tensor requiring it."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class ParamStore:
    """Named learnable tensors plus their optimizer state.

    Names are unique; every iteration order is lexicographic so that
    optimizer sweeps and serialization are deterministic.  Each parameter
    carries two moment accumulators and a step counter, created lazily as
    zeros on first use.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t: dict[str, int] = {}

    def add(self, name: str, data: np.ndarray, requires_grad: bool = True) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data), requires_grad=requires_grad)
        self._params[name] = t
        return t

    def names(self) -> list[str]:
        return sorted(self._params)

    def tensors(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._params[name]

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def total_size(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Collected gradients for every parameter that has one."""
        out = {}
        for name in self.names():
            g = self._params[name].grad
            if g is not None:
                out[name] = g
        return out

    def moment_state(self, name: str) -> tuple[np.ndarray, np.ndarray, int]:
        if name not in self._params:
            raise KeyError(name)
        if name not in self._m:
            p = self._params[name]
            self._m[name] = np.zeros_like(p.data)
            self._v[name] = np.zeros_like(p.data)
            self._t[name] = 0
        return self._m[name], self._v[name], self._t[name]

    def set_moment_state(self, name: str, m: np.ndarray, v: np.ndarray, t: int) -> None:
        p = self._params[name]
        if m.shape != p.data.shape or v.shape != p.data.shape:
            raise ValueError(
                f"optimizer state shape {m.shape}/{v.shape} does not match parameter "
                f"{name!r} of shape {p.data.shape}"
            )
        self._m[name] = m
        self._v[name] = v
        self._t[name] = int(t)

    def bump_step(self, name: str) -> int:
        self._t[name] = self._t.get(name, 0) + 1
        return self._t[name]

    def astype(self, dtype) -> "ParamStore":
        """Copy of the store with parameter data cast and fresh optimizer state."""
        out = ParamStore()
        for name, t in self.tensors():
            out.add(name, t.data.astype(dtype), requires_grad=t.requires_grad)
        return out

    def clip_values(self, limit: float) -> None:
        """Clamp every parameter to [-limit, limit] in place."""
        for t in self._params.values():
            np.clip(t.data, -limit, limit, out=t.data)
