"""Dyadic cube arithmetic on the arm space [0,1]^d with the sup-norm metric.

Cubes are identified by an integer depth and integer per-axis indices, never by
floating-point corners, so arbitrarily long partition chains stay exact.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class ScheduleMismatchError(ValueError):
    """A partition factor that is not an integer power of two (>= 2)."""


def factor_exponent(factor: int) -> int:
    """Return j such that factor == 2**j, j >= 1."""
    if isinstance(factor, bool) or int(factor) != factor:
        raise ScheduleMismatchError(f"partition factor must be an integer, got {factor!r}")
    factor = int(factor)
    if factor < 2 or factor & (factor - 1):
        raise ScheduleMismatchError(
            f"partition factor must be a power of two >= 2, got {factor}"
        )
    return factor.bit_length() - 1


@dataclass(frozen=True, order=True)
class StandardCube:
    """Closed cube prod_j [k_j 2^-depth, (k_j + 1) 2^-depth]."""

    depth: int
    index: tuple[int, ...]

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        object.__setattr__(self, "index", tuple(int(k) for k in self.index))
        if not self.index:
            raise ValueError("cube needs at least one axis")
        side = 1 << self.depth
        for k in self.index:
            if not 0 <= k < side:
                raise ValueError(f"index {self.index} out of range for depth {self.depth}")

    @classmethod
    def unit(cls, d: int) -> "StandardCube":
        return cls(0, (0,) * d)

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def edge(self) -> float:
        return math.ldexp(1.0, -self.depth)

    @property
    def lower(self) -> np.ndarray:
        return np.ldexp(np.asarray(self.index, dtype=float), -self.depth)

    @property
    def upper(self) -> np.ndarray:
        return np.ldexp(np.asarray(self.index, dtype=float) + 1.0, -self.depth)

    @property
    def measure(self) -> float:
        return math.ldexp(1.0, -self.depth * self.d)


@dataclass(frozen=True)
class CubeSet:
    """Cubes sharing one depth, stored as an (n, d) integer index array."""

    depth: int
    indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64, copy=True)
        if idx.ndim != 2:
            raise ValueError("indices must be a 2-d array of shape (n, d)")
        if idx.size and (idx.min() < 0 or idx.max() >= (1 << self.depth)):
            raise ValueError("cube index out of range for depth")
        if len(np.unique(idx, axis=0)) != len(idx):
            raise ValueError("duplicate cube indices in CubeSet")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_cubes(cls, cubes: Sequence[StandardCube]) -> "CubeSet":
        if not cubes:
            raise ValueError("cannot infer depth and dimension from an empty list")
        depths = {c.depth for c in cubes}
        if len(depths) != 1:
            raise ValueError("all cubes in a CubeSet must share one depth")
        return cls(depths.pop(), np.array([c.index for c in cubes], dtype=np.int64))

    @classmethod
    def full_grid(cls, depth: int, d: int) -> "CubeSet":
        """All (2^depth)^d standard cubes of the given depth, lexicographic order."""
        side = 1 << depth
        axes = np.meshgrid(*([np.arange(side)] * d), indexing="ij")
        return cls(depth, np.stack([a.ravel() for a in axes], axis=1))

    @property
    def d(self) -> int:
        return self.indices.shape[1]

    @property
    def edge(self) -> float:
        return math.ldexp(1.0, -self.depth)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[StandardCube]:
        for row in self.indices:
            yield StandardCube(self.depth, tuple(int(k) for k in row))

    def __getitem__(self, i: int) -> StandardCube:
        return StandardCube(self.depth, tuple(int(k) for k in self.indices[i]))

    def subset(self, mask: np.ndarray) -> "CubeSet":
        return CubeSet(self.depth, self.indices[np.asarray(mask)])

    def centers(self) -> np.ndarray:
        return np.ldexp(self.indices.astype(float) + 0.5, -self.depth)

    def lowers(self) -> np.ndarray:
        return np.ldexp(self.indices.astype(float), -self.depth)

    def partition(self, factor: int) -> "CubeSet":
        """Partition every member by ``factor`` per axis (children grouped by parent)."""
        j = factor_exponent(factor)
        offsets = np.array(list(itertools.product(range(factor), repeat=self.d)), dtype=np.int64)
        children = (self.indices[:, None, :] << j) + offsets[None, :, :]
        return CubeSet(self.depth + j, children.reshape(-1, self.d))

    def parent_rows(self, parent: "CubeSet") -> np.ndarray:
        """For each cube here, the row of ``parent`` whose cube contains it."""
        shift = self.depth - parent.depth
        if shift < 0:
            raise ValueError("parent set must be coarser")
        anc = self.indices >> shift
        lookup = {tuple(row): i for i, row in enumerate(parent.indices.tolist())}
        return np.array([lookup[tuple(row)] for row in anc.tolist()], dtype=np.int64)


def partition(cube: StandardCube, factor: int) -> CubeSet:
    """Split ``cube`` into factor^d children of edge cube.edge / factor."""
    return CubeSet(cube.depth, np.array([cube.index], dtype=np.int64)).partition(factor)


def center(cube: StandardCube) -> np.ndarray:
    return np.ldexp(np.asarray(cube.index, dtype=float) + 0.5, -cube.depth)


def contains(cube: StandardCube, x) -> bool:
    """Closed-cube membership; boundary points belong to every touching cube."""
    x = np.asarray(x, dtype=float)
    return bool(np.all(cube.lower <= x) and np.all(x <= cube.upper))


def sample_uniform(cube: StandardCube, rng: np.random.Generator) -> np.ndarray:
    return cube.lower + cube.edge * rng.random(cube.d)


def sup_distance(x, y) -> np.ndarray:
    """Sup-norm distance, broadcasting over leading axes."""
    return np.max(np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)), axis=-1)


def depth_of_edge(r: float) -> int:
    """Depth i with r == 2^-i exactly; raises ScheduleMismatchError otherwise."""
    mant, exp = math.frexp(r)
    if mant != 0.5 or exp > 1:
        raise ScheduleMismatchError(f"edge length {r!r} is not 2^-i for integer i >= 0")
    return 1 - exp
