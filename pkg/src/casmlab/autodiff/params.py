"""Named parameter collections."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterable, Iterator, Tuple

import numpy as np

from .tensor import Tensor


class ParamSet:
    """Ordered ``name -> Tensor`` mapping for one network.

    Two ParamSets may hold the same Tensor object under some name; that is
    how encoder weights are shared between the classifier and the mapper.
    """

    def __init__(self, items: Iterable[Tuple[str, Tensor]] = ()):
        self._items: "OrderedDict[str, Tensor]" = OrderedDict(items)

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __setitem__(self, name: str, tensor: Tensor) -> None:
        self._items[name] = tensor

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def items(self):
        return self._items.items()

    def names(self):
        return list(self._items)

    def tensors(self):
        return list(self._items.values())

    def copy(self) -> "ParamSet":
        """Deep copy: new storage, untouched by later updates to ``self``."""
        return ParamSet((k, Tensor(v.data.copy(), track=v.track, name=v.name)) for k, v in self._items.items())

    def subset(self, prefix: str) -> "ParamSet":
        return ParamSet((k, v) for k, v in self._items.items() if k.startswith(prefix))

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data) for k, v in self._items.items())

    def load_arrays(self, arrays) -> None:
        """Overwrite values in place (keeps aliasing intact)."""
        for k, v in arrays.items():
            self._items[k].data[...] = v

    def equal(self, other: "ParamSet") -> bool:
        """Bit-level equality of names, shapes and values."""
        if self.names() != other.names():
            return False
        return all(np.array_equal(a.data, other[k].data) for k, a in self._items.items())
