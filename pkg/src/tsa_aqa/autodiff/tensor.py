"""Reverse-mode autodiff tape over numpy arrays.

A Tensor is a node in an implicit acyclic graph: leaves hold inputs or
parameters, interior nodes record the op kind, their parent nodes, and a
closure that maps the incoming gradient to per-parent gradients. Calling
backward() walks the graph once in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional

import numpy as np


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible with the op's contract."""


class NonFiniteValueError(ValueError):
    """NaN or Inf entered the graph at a boundary."""


class NotEvaluatedError(RuntimeError):
    """backward() called on a node with no recorded forward pass."""


_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True


def set_default_dtype(dtype) -> None:
    """Set the dtype leaves are stored in (float32 or float64)."""
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError("dtype must be numpy float32 or float64")
    _DEFAULT_DTYPE = dtype


def default_dtype():
    return _DEFAULT_DTYPE


class no_grad:
    """Context manager that disables tape recording (evaluation fast path)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


BackwardFn = Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]


class Tensor:
    """Value node: numpy payload plus optional tape bookkeeping."""

    __slots__ = ("data", "grad", "op", "parents", "backward_fn", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        # leaves own their buffer so later in-place edits cannot alias callers
        arr = np.array(data, dtype=_DEFAULT_DTYPE, copy=True)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValueError("non-finite values rejected at graph boundary")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Optional[BackwardFn] = None
        self.requires_grad = requires_grad

    @classmethod
    def _node(cls, data: np.ndarray, op: str, parents: tuple["Tensor", ...],
              backward_fn: BackwardFn) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.op = op
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            t.parents = parents
            t.backward_fn = backward_fn
            t.requires_grad = True
        else:
            t.parents = ()
            t.backward_fn = None
            t.requires_grad = False
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def grad_value(self) -> np.ndarray:
        """Gradient, with zeros for tensors backward() never reached."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"


def topo_order(output: Tensor) -> list[Tensor]:
    """Parents-first topological order of the subgraph below output."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor, seed=None) -> None:
    """Accumulate gradients of output into every reachable requires_grad node.

    seed defaults to ones (for a scalar output this is d(output)/d(output)).
    Gradients add onto existing .grad so batched losses can accumulate;
    call zero_grad between independent passes.
    """
    if output.backward_fn is None and not output.parents:
        if not output.requires_grad:
            raise NotEvaluatedError("output is not attached to a recorded graph")
    if seed is None:
        seed = np.ones_like(output.data)
    else:
        seed = np.asarray(seed, dtype=output.data.dtype)
        if seed.shape != output.data.shape:
            raise ShapeMismatchError(
                f"seed shape {seed.shape} != output shape {output.data.shape}"
            )
    order = topo_order(output)
    local: dict[int, np.ndarray] = {id(output): seed}
    for node in reversed(order):
        g = local.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and node.backward_fn is None:
            # leaf: park the gradient on the tensor
            node.grad = g if node.grad is None else node.grad + g
            continue
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if parent.backward_fn is None and not parent.parents:
                parent.grad = pg if parent.grad is None else parent.grad + pg
            elif key in local:
                local[key] = local[key] + pg
            else:
                local[key] = pg


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


def as_tensor(x, requires_grad: bool = False) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=requires_grad)
