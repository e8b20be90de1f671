"""The pool of classifier snapshots sampled by the mapper, and its thinning."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..autodiff import ParamSet
from ..errors import ConfigError, ContractError


@dataclass(frozen=True)
class Thinning:
    """Thinning strategy: ``F``, ``L``, ``FL`` or periodic ``L<p>`` with a cap."""

    kind: str
    period: int = 0
    cap: int = 30

    def __post_init__(self):
        if self.kind not in ("F", "L", "FL", "periodic"):
            raise ConfigError(f"unknown thinning strategy {self.kind!r}")
        if self.kind == "periodic" and (self.period < 1 or self.cap < 1):
            raise ConfigError("periodic thinning needs period >= 1 and cap >= 1")

    @classmethod
    def parse(cls, text: str, cap: int = 30) -> "Thinning":
        """Accepts ``F``, ``L``, ``FL``, ``L100`` and ``Lp:100``."""
        text = text.strip()
        if text in ("F", "L", "FL"):
            return cls(text, cap=cap)
        match = re.fullmatch(r"L(?:p:)?(\d+)", text)
        if match:
            return cls("periodic", period=int(match.group(1)), cap=cap)
        raise ConfigError(f"cannot parse thinning strategy {text!r}")

    def __str__(self) -> str:
        return f"Lp:{self.period}" if self.kind == "periodic" else self.kind


@dataclass
class ClassifierPool:
    """Snapshots ``(k, params)`` in insertion order."""

    strategy: Thinning
    snapshots: List[Tuple[int, ParamSet]] = field(default_factory=list)

    @classmethod
    def start(cls, strategy: Thinning, f0: ParamSet) -> "ClassifierPool":
        return cls(strategy, [(0, f0.copy())])

    def indices(self) -> List[int]:
        return [k for k, _ in self.snapshots]

    def __len__(self) -> int:
        return len(self.snapshots)

    def insert(self, k: int, params: ParamSet) -> None:
        self.snapshots.append((k, params.copy()))

    def sample(self, current_k: int, rng: np.random.Generator) -> ParamSet:
        """Pick the snapshot ``current_k`` with probability 1/2, else uniformly among the others.

        If ``current_k`` is absent or alone, the draw is uniform over the pool.
        """
        if not self.snapshots:
            raise ContractError("cannot sample from an empty classifier pool")
        if len(self.snapshots) == 1:
            return self.snapshots[0][1]
        current = [i for i, (k, _) in enumerate(self.snapshots) if k == current_k]
        if not current:
            return self.snapshots[int(rng.integers(len(self.snapshots)))][1]
        cur = current[-1]
        if rng.random() < 0.5:
            return self.snapshots[cur][1]
        others = [i for i in range(len(self.snapshots)) if i != cur]
        return self.snapshots[others[int(rng.integers(len(others)))]][1]

    def thin(self, k: int, rng: np.random.Generator) -> None:
        s = self.strategy
        if s.kind == "F":
            self.snapshots = [snap for snap in self.snapshots if snap[0] == 0][:1]
        elif s.kind == "L":
            self.snapshots = [snap for snap in self.snapshots if snap[0] == k][-1:] or self.snapshots[-1:]
        elif s.kind == "FL":
            first = [snap for snap in self.snapshots if snap[0] == 0][:1]
            last = [snap for snap in self.snapshots if snap[0] == k and k != 0][-1:]
            self.snapshots = first + last
        else:
            if k % s.period:
                self.snapshots = [snap for snap in self.snapshots if snap[0] != k]
            while len(self.snapshots) > s.cap:
                candidates = [i for i, snap in enumerate(self.snapshots) if snap[0] != k]
                victim = candidates[int(rng.integers(len(candidates)))]
                del self.snapshots[victim]
