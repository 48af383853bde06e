"""Sensitivity constraints on the hidden biases of the matched sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import check_bias


@dataclass(frozen=True)
class VectorBound:
    """Per-set bounds: the bias of set ``i`` is at most ``gamma[i]`` (inf allowed)."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array([check_bias(v) for v in np.ravel(self.gamma)], dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @classmethod
    def uniform(cls, gamma0: float, n_sets: int) -> VectorBound:
        return cls(np.full(n_sets, float(gamma0)))


@dataclass(frozen=True)
class QuantileBound:
    """The ``k``-th smallest hidden bias is at most ``gamma0``."""

    k: int
    gamma0: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "gamma0", check_bias(self.gamma0))

    @property
    def vacuous(self) -> bool:
        return math.isinf(self.gamma0)


class KOutOfRangeError(ValueError):
    pass


def check_k(k: int, n_sets: int) -> int:
    if not 1 <= k <= n_sets:
        raise KOutOfRangeError(f"k={k} outside [1, {n_sets}]")
    return int(k)
