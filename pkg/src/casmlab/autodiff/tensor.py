"""Tensor values and the tape that records operations on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ContractError


class Tensor:
    """A float64 array with an optional gradient slot.

    ``track`` marks tensors that participate in differentiation.  Outputs of
    recorded operations are tracked whenever any input is tracked.
    """

    __slots__ = ("data", "grad", "track", "name")

    def __init__(self, data, track: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.grad: Optional[np.ndarray] = None
        self.track = track
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Return an untracked tensor sharing this tensor's storage."""
        return Tensor(self.data, track=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, track={self.track}{label})"


@dataclass
class Node:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Tape:
    """Ordered record of operations executed while the tape is active.

    Use as a context manager; operations performed inside the ``with`` block
    on tracked tensors append a :class:`Node`.
    """

    nodes: list = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)


_ACTIVE: list = []


def active_tape() -> Optional[Tape]:
    return _ACTIVE[-1] if _ACTIVE else None


def make_output(op: str, inputs: tuple, data: np.ndarray, backward) -> Tensor:
    """Wrap ``data`` as an op output and record it on the active tape."""
    tape = active_tape()
    track = tape is not None and any(t.track for t in inputs)
    out = Tensor(data, track=track)
    if track:
        tape.record(Node(op, inputs, out, backward))
    return out


def backward(loss: Tensor, tape: Tape, wrt: Sequence[Tensor] = ()) -> None:
    """Propagate d(loss)/d(tensor) into ``grad`` of every tracked tensor.

    Gradients are assigned, not accumulated.  Tracked tensors on the tape
    that do not influence ``loss``, and anything listed in ``wrt``, receive a
    zero gradient.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    touched = {}
    for node in tape.nodes:
        touched[id(node.output)] = node.output
        for t in node.inputs:
            if t.track:
                touched[id(t)] = t
    for t in wrt:
        touched[id(t)] = t
    for t in touched.values():
        t.grad = None

    grads = {id(loss): np.ones_like(loss.data)}
    owners = {id(loss): loss}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        node.output.grad = g
        for t, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not t.track:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                owners[key] = t
    for key, g in grads.items():
        owners[key].grad = g
    for t in touched.values():
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
