import math
from typing import Dict, Hashable, Iterable, Tuple

import numpy as np


class UnionFind:
    """Disjoint sets with path compression, keyed by any hashable."""

    def __init__(self, items: Iterable[Hashable] = ()):
        self.forest: Dict[Hashable, Hashable] = {}
        for item in items:
            self.add(item)

    def add(self, k):
        if k not in self.forest:
            self.forest[k] = k
        return k

    def find(self, k):
        if k not in self.forest:
            self.forest[k] = k

        root = k
        while root != self.forest[root]:
            root = self.forest[root]

        # Path compression.
        node = k
        while node != self.forest[node]:
            self.forest[node], node = root, self.forest[node]

        return root

    def union(self, a, b) -> bool:
        """Merge the sets of a and b; False when they already shared a set."""
        root_a = self.find(a)
        root_b = self.find(b)
        if root_a == root_b:
            return False
        self.forest[root_b] = root_a
        return True

    def connected(self, a, b) -> bool:
        return self.find(a) == self.find(b)

    def component_count(self) -> int:
        return len({self.find(k) for k in self.forest})


def is_forest(edges: Iterable[Tuple[int, int]]) -> bool:
    """True when the undirected edge list contains no cycle."""
    uf = UnionFind()
    for u, v in edges:
        if not uf.union(u, v):
            return False
    return True


def value_key(value: float, element_id: int) -> Tuple[float, int]:
    """Total order on equal values: the smaller id counts as the larger element."""
    return (value, -element_id)


def phase_boundary(count: int, divisor: float) -> int:
    """floor(count / divisor), guarded against float noise such as 100 / (100/3)."""
    raw = count / divisor
    nearest = round(raw)
    if abs(raw - nearest) < 1e-9:
        return int(nearest)
    return int(math.floor(raw))


def fraction_boundary(count: int, fraction: float) -> int:
    """floor(fraction * count) with the same guard as phase_boundary."""
    raw = fraction * count
    nearest = round(raw)
    if abs(raw - nearest) < 1e-9:
        return int(nearest)
    return int(math.floor(raw))


def trial_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent stream for (master seed, cell index, trial index, ...)."""
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(sequence)


def is_integral(value: float) -> bool:
    return float(value).is_integer()


class DerivedCache(dict):
    """
    Memo of arrays derived from an immutable model.

    Lives in a private attribute; it never takes part in model equality,
    so two equal instances compare equal whatever they have cached.
    """

    def __eq__(self, other):
        return isinstance(other, DerivedCache)

    def __ne__(self, other):
        return not self.__eq__(other)

    __hash__ = None
