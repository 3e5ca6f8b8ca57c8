"""
Exact offline optima.

These are used inside the online algorithms (the per-step optimal
matchings) and as the denominator of every competitive ratio. Matchings
are solved exactly with scipy's assignment solver; absent edges count as
weight 0 and zero-weight pairs are left out of plain optimal matchings.
"""
import logging
import math
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import linear_sum_assignment

from selection_lab.errors import InstanceValidationError
from selection_lab.instances import BipartiteInstance, GraphInstance, SecretaryInstance
from selection_lab.utils import UnionFind, is_forest

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-9

Edge = Tuple[int, int, float]


class Matching(BaseModel):
    """A set of (left, right, weight) pairs with no node used twice."""

    model_config = ConfigDict(frozen=True)

    edges: Tuple[Edge, ...] = ()
    total_weight: float = 0.0

    @model_validator(mode='after')
    def check_matching(self):
        lefts = [l for l, _, _ in self.edges]
        rights = [r for _, r, _ in self.edges]
        if len(set(lefts)) != len(lefts):
            raise ValueError('a left node appears twice in the matching')
        if len(set(rights)) != len(rights):
            raise ValueError('a right node appears twice in the matching')
        expected = math.fsum(w for _, _, w in self.edges)
        if abs(expected - self.total_weight) > WEIGHT_TOLERANCE * max(1.0, abs(expected)):
            raise ValueError(f'total_weight {self.total_weight} differs from edge sum {expected}')
        return self

    @classmethod
    def from_edges(cls, edges: Iterable[Edge]) -> 'Matching':
        ordered = tuple(sorted((int(l), int(r), float(w)) for l, r, w in edges))
        return cls(edges=ordered, total_weight=math.fsum(w for _, _, w in ordered))

    @property
    def size(self) -> int:
        return len(self.edges)

    def pairs(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((l, r) for l, r, _ in self.edges)

    def partner_of_left(self, l: int) -> Optional[int]:
        for left, r, _ in self.edges:
            if left == l:
                return r
        return None

    def matched_right(self) -> frozenset:
        return frozenset(r for _, r, _ in self.edges)

    def matched_left(self) -> frozenset:
        return frozenset(l for l, _, _ in self.edges)


class ForestSelection(BaseModel):
    """Selected graph edges as (edge id, u, v, weight); never contains a cycle."""

    model_config = ConfigDict(frozen=True)

    edges: Tuple[Tuple[int, int, int, float], ...] = ()
    total_weight: float = 0.0

    @model_validator(mode='after')
    def check_forest(self):
        if not is_forest((u, v) for _, u, v, _ in self.edges):
            raise ValueError('selected edges contain a cycle')
        expected = math.fsum(w for _, _, _, w in self.edges)
        if abs(expected - self.total_weight) > WEIGHT_TOLERANCE * max(1.0, abs(expected)):
            raise ValueError(f'total_weight {self.total_weight} differs from edge sum {expected}')
        return self

    @property
    def edge_ids(self) -> Tuple[int, ...]:
        return tuple(e for e, _, _, _ in self.edges)


class CriticalValue(BaseModel):
    """
    Smallest integer report at which an agent is matched.

    tau is None when the agent is unmatched at every report (no incident
    edge in the considered sub-instance).
    """

    model_config = ConfigDict(frozen=True)

    agent: int = Field(..., ge=1)
    tau: Optional[int] = Field(None, ge=0)
    matched_item: Optional[int] = None

    @model_validator(mode='after')
    def check_consistency(self):
        if (self.tau is None) != (self.matched_item is None):
            raise ValueError('tau and matched_item must both be set or both be None')
        return self


def max_weight_assignment(matrix: np.ndarray) -> List[Tuple[int, int]]:
    """
    Row/column index pairs of a maximum-weight assignment with positive weight.

    Absent edges must be encoded as 0. All-zero columns are dropped before
    solving; they cannot carry a positive pair.
    """
    if matrix.size == 0:
        return []
    live = np.flatnonzero(matrix.max(axis=0) > 0)
    if live.size == 0:
        return []
    sub = matrix[:, live]
    rows, cols = linear_sum_assignment(sub, maximize=True)
    return [
        (int(i), int(live[j]))
        for i, j in zip(rows, cols)
        if sub[i, j] > 0
    ]


def assigned_column(matrix: np.ndarray, arrived: Sequence[int], target: int) -> Optional[int]:
    """
    Column given to row `target` in the optimal assignment over the `arrived` rows.

    Rows are 1-based ids into `matrix` and are solved in ascending id order,
    so the result matches max_weight_matching on the same subset. None when
    the target has no positive assignment.
    """
    rows = np.sort(np.asarray(arrived, dtype=np.int64))
    position = int(np.searchsorted(rows, target))
    for i, j in max_weight_assignment(matrix[rows - 1]):
        if i == position:
            return j
    return None


def max_weight_matching(instance: BipartiteInstance, subset: Optional[Iterable[int]] = None) -> Matching:
    """Maximum-weight matching on G[subset ∪ R]; the whole left side when subset is None."""
    if subset is None:
        rows = list(range(1, instance.left_count + 1))
    else:
        rows = sorted(set(subset))
        for l in rows:
            if not 1 <= l <= instance.left_count:
                raise InstanceValidationError(f'left node {l} outside 1..{instance.left_count}')
    if not rows:
        return Matching()

    matrix = instance.weight_matrix()[np.asarray(rows) - 1]
    edges = []
    for i, j in max_weight_assignment(matrix):
        l, r = rows[i], j + 1
        edges.append((l, r, instance.weights[(l, r)]))
    return Matching.from_edges(edges)


def _edges_of(instance: BipartiteInstance, subset: Optional[Iterable[int]]) -> Tuple[Edge, ...]:
    """Edges of G[subset ∪ R] in the fixed order: ascending (left, right), first is greatest."""
    allowed = None if subset is None else set(subset)
    return tuple(sorted(
        (l, r, float(w))
        for (l, r), w in instance.weights.items()
        if allowed is None or l in allowed
    ))


@lru_cache(maxsize=1 << 16)
def _optimum_value(edges: Tuple[Edge, ...]) -> float:
    if not edges:
        return 0.0
    lefts = sorted({l for l, _, _ in edges})
    rights = sorted({r for _, r, _ in edges})
    left_index = {l: i for i, l in enumerate(lefts)}
    right_index = {r: j for j, r in enumerate(rights)}
    matrix = np.zeros((len(lefts), len(rights)))
    for l, r, w in edges:
        matrix[left_index[l], right_index[r]] = w
    return math.fsum(float(matrix[i, j]) for i, j in max_weight_assignment(matrix))


def _same_weight(a: float, b: float) -> bool:
    return abs(a - b) <= WEIGHT_TOLERANCE * max(1.0, abs(a), abs(b))


@lru_cache(maxsize=1 << 14)
def _lex_max(edges: Tuple[Edge, ...]) -> Tuple[Edge, ...]:
    target = _optimum_value(edges)
    fixed: List[Edge] = []
    fixed_weight = 0.0
    remaining: Sequence[Edge] = edges

    # Consider the greatest remaining edge: keep it if an optimal matching
    # still extends fixed + edge, otherwise drop it for good.
    while remaining:
        l, r, w = remaining[0]
        rest = tuple(e for e in remaining[1:] if e[0] != l and e[1] != r)
        if _same_weight(fixed_weight + w + _optimum_value(rest), target):
            fixed.append((l, r, w))
            fixed_weight += w
            remaining = rest
        else:
            remaining = remaining[1:]
    return tuple(fixed)


def lex_max_matching(instance: BipartiteInstance, subset: Optional[Iterable[int]] = None) -> Matching:
    """
    Lexicographically greatest maximum-weight matching on G[subset ∪ R].

    The total order on edges is ascending (left id, right id), the first
    edge being the greatest. Zero-weight edges take part, so on an all-zero
    instance the result is the greatest perfect-as-possible matching.
    """
    return Matching.from_edges(_lex_max(_edges_of(instance, subset)))


def with_report(instance: BipartiteInstance, agent: int, report: float) -> BipartiteInstance:
    """The instance with every edge of `agent` re-weighted to `report`."""
    weights = {
        (l, r): (float(report) if l == agent else w)
        for (l, r), w in instance.weights.items()
    }
    return BipartiteInstance(
        left_count=instance.left_count,
        right_count=instance.right_count,
        weights=weights,
        augmented=instance.augmented,
        base_right_count=instance.base_right_count,
    )


def critical_value(instance: BipartiteInstance, agent: int,
                   subset: Optional[Iterable[int]] = None) -> CriticalValue:
    """
    Binary search over integer reports in [0, W] for the agent's critical value.

    The agent's report replaces the weight of each of its edges; all other
    weights stay fixed and must be integers. W is the sum of the other
    edge weights plus one, enough to force the agent into every optimum.
    """
    allowed = None if subset is None else set(subset) | {agent}
    edges = _edges_of(instance, allowed)
    own = [(l, r) for l, r, _ in edges if l == agent]
    if not own:
        return CriticalValue(agent=agent)

    others = [(l, r, w) for l, r, w in edges if l != agent]
    for _, _, w in others:
        if not float(w).is_integer():
            raise InstanceValidationError(f'critical values need integer weights, got {w}')
    upper = int(sum(w for _, _, w in others)) + 1

    def partner(report: int) -> Optional[int]:
        reported = tuple(sorted(others + [(l, r, float(report)) for l, r in own]))
        for l, r, _ in _lex_max(reported):
            if l == agent:
                return r
        return None

    if partner(0) is not None:
        return CriticalValue(agent=agent, tau=0, matched_item=partner(0))
    if partner(upper) is None:
        raise InstanceValidationError(f'agent {agent} is unmatched even at report {upper}')

    lo, hi = 0, upper
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if partner(mid) is None:
            lo = mid
        else:
            hi = mid
    return CriticalValue(agent=agent, tau=hi, matched_item=partner(hi))


def max_weight_forest(instance: GraphInstance) -> ForestSelection:
    """Kruskal: heaviest edges first, equal weights by smaller edge id."""
    uf = UnionFind(range(1, instance.vertex_count + 1))
    order = sorted(range(1, instance.edge_count + 1), key=lambda e: (-instance.weight(e), e))
    selected = []
    for e in order:
        u, v = instance.endpoints(e)
        if uf.union(u, v):
            selected.append((e, u, v, instance.weight(e)))
    selected.sort()
    return ForestSelection(edges=tuple(selected), total_weight=math.fsum(w for *_, w in selected))


def secretary_opt(instance: SecretaryInstance) -> Tuple[float, int]:
    """(max value, its id); the smallest id wins a tie."""
    best_id = 1
    for i, value in enumerate(instance.values, start=1):
        if value > instance.value_of(best_id):
            best_id = i
    return instance.value_of(best_id), best_id


def covers_subset(instance: BipartiteInstance, subset: Iterable[int]) -> bool:
    """True when G[S ∪ N(S)] has a matching saturating every node of S."""
    left = sorted(set(subset))
    if not left:
        return True
    graph = nx.Graph()
    graph.add_nodes_from((('L', l) for l in left), bipartite=0)
    for l in left:
        for r in instance.neighbors(l):
            graph.add_edge(('L', l), ('R', r))
    matching = nx.bipartite.maximum_matching(graph, top_nodes=[('L', l) for l in left])
    saturated = sum(1 for node in matching if node[0] == 'L')
    return saturated == len(left)
