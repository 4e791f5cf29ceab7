"""Finite weighted laws: the random variables of the library are all of this form."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Generic, Sequence, TypeVar

import numpy as np

X = TypeVar("X")
Y = TypeVar("Y")

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class RandomEnsemble(Generic[X]):
    """A finitely supported law ``sum_i w_i delta_{x_i}``."""

    weights: tuple[float, ...]
    values: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        vals = tuple(self.values)
        if len(w) != len(vals) or not w:
            raise ValueError("need the same positive number of weights and values")
        if min(w) <= 0:
            raise ValueError("weights must be positive")
        if abs(sum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {sum(w)!r}, expected 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, values: Sequence[X]) -> "RandomEnsemble[X]":
        n = len(values)
        return cls((1.0 / n,) * n, tuple(values))

    @classmethod
    def single(cls, value: X) -> "RandomEnsemble[X]":
        return cls((1.0,), (value,))

    @classmethod
    def from_pairs(cls, pairs) -> "RandomEnsemble[X]":
        w, v = zip(*pairs)
        return cls(w, v)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(zip(self.weights, self.values))

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)

    def map(self, func: Callable[[X], Y]) -> "RandomEnsemble[Y]":
        return RandomEnsemble(self.weights, tuple(func(v) for v in self.values))

    def zip_map(self, other: "RandomEnsemble", func) -> "RandomEnsemble":
        """Atom-wise combination of two variables defined on the same atoms."""
        if len(other) != len(self) or not np.allclose(other.w, self.w, rtol=0, atol=1e-15):
            raise ValueError("ensembles must share atoms and weights")
        return RandomEnsemble(self.weights, tuple(func(a, b) for a, b in zip(self.values, other.values)))

    def expect(self, func: Callable[[X], float] | None = None):
        """Weighted mean of ``func(x)``; values may be scalars or arrays."""
        vals = self.values if func is None else [func(v) for v in self.values]
        acc = 0
        for w, v in zip(self.weights, vals):
            acc = acc + w * v
        return acc

    def lp_norm(self, func: Callable[[X], float], p: float = 2.0) -> float:
        vals = np.array([abs(func(v)) for v in self.values], dtype=float)
        return float(np.dot(self.w, vals ** p) ** (1.0 / p))

    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.w)
        c[-1] = 1.0
        return c

    def sample_indices(self, rng: np.random.Generator, size) -> np.ndarray:
        """Atom indices by inverse CDF on the weights."""
        return np.searchsorted(self.cdf(), rng.random(size), side="right")

    def product(self, other: "RandomEnsemble") -> "RandomEnsemble":
        """Law of an independent pair ``(x, y)``."""
        return RandomEnsemble(
            tuple(a * b for a in self.weights for b in other.weights),
            tuple((x, y) for x in self.values for y in other.values),
        )
