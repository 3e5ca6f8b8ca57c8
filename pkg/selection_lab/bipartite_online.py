"""
Online bipartite matching with left nodes arriving in random order.

All algorithms expect a perfect (augmented) instance so every arriving
node has an assignment in the per-step optimal matching; see
instances.augment_perfect.
"""
import itertools
import logging
import math
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from selection_lab.errors import DomainError, InfeasibleParametersError, InvariantViolation, OracleSizeError
from selection_lab.instances import ArrivalOrder, BipartiteInstance, PredictionVector, sample_arrival_order
from selection_lab.offline_oracles import Matching, assigned_column
from selection_lab.utils import phase_boundary

logger = logging.getLogger(__name__)

EXACT_ORACLE_LIMIT = 8


class BipartiteParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float
    d: float = Field(..., ge=1.0)
    lam: float = Field(..., ge=0.0)
    predictions: PredictionVector

    @model_validator(mode='after')
    def check_parameters(self):
        if not self.c > self.d:
            raise ValueError(f'need c > d, got c={self.c}, d={self.d}')
        if self.predictions.values and self.lam > self.predictions.min_value():
            raise ValueError(f'lambda {self.lam} exceeds the smallest prediction {self.predictions.min_value()}')
        return self

    def thresholds(self) -> Dict[int, float]:
        return {r: p - self.lam for r, p in self.predictions.values.items()}


class EmpiricalProbability(BaseModel):
    model_config = ConfigDict(frozen=True)

    frequency: float = Field(..., ge=0.0, le=1.0)
    stderr: float = Field(..., ge=0.0)
    trials: int = Field(..., ge=1)

    @classmethod
    def from_hits(cls, hits: int, trials: int) -> 'EmpiricalProbability':
        p = hits / trials
        return cls(frequency=p, stderr=math.sqrt(p * (1.0 - p) / trials), trials=trials)


class OnlineMatchState:
    """Committed matching of an online run; grows monotonically and is checked on every commit."""

    def __init__(self):
        self.edges: List[Tuple[int, int, float]] = []
        self.phase_of: Dict[Tuple[int, int], str] = {}
        self.arrived: List[int] = []
        self._left: Set[int] = set()
        self._right: Set[int] = set()

    def arrive(self, l: int):
        self.arrived.append(l)

    def is_right_free(self, r: int) -> bool:
        return r not in self._right

    def can_add(self, l: int, r: int) -> bool:
        return l not in self._left and r not in self._right

    def commit(self, l: int, r: int, w: float, phase: str):
        if not self.can_add(l, r):
            raise InvariantViolation(f'committing ({l}, {r}) would break the matching')
        self.edges.append((l, r, w))
        self.phase_of[(l, r)] = phase
        self._left.add(l)
        self._right.add(r)

    def matching(self) -> Matching:
        return Matching.from_edges(self.edges)


def _require_augmented(instance: BipartiteInstance):
    if not instance.augmented:
        raise InfeasibleParametersError('online bipartite algorithms need an augmented instance')


def newcomer_assignment(instance: BipartiteInstance, arrived: Sequence[int], newcomer: int) -> int:
    """
    Right node assigned to `newcomer` in the optimal matching on G[arrived ∪ R].

    Same result as max_weight_matching(instance, arrived) looked up at the
    newcomer; without a positive assignment the newcomer takes its dummy.
    """
    column = assigned_column(instance.weight_matrix(), arrived, newcomer)
    if column is None:
        return instance.dummy_of(newcomer)
    return column + 1


def _kesselheim_phase(instance: BipartiteInstance, order: ArrivalOrder, state: OnlineMatchState,
                      start: int, stop: int, phase: str):
    """Positions [start, stop): commit the newcomer's optimal edge when its right node is free."""
    for position in range(start, stop):
        newcomer = order.ids[position]
        state.arrive(newcomer)
        r = newcomer_assignment(instance, order.ids[:position + 1], newcomer)
        if state.can_add(newcomer, r):
            state.commit(newcomer, r, instance.weights[(newcomer, r)], phase)


def kesselheim_baseline(instance: BipartiteInstance, order: ArrivalOrder, c: float, d: float = 1.0) -> Matching:
    """Observe the first floor(n/c) arrivals, then commit per-step optimal edges up to floor(n/d)."""
    _require_augmented(instance)
    if not c >= d >= 1.0:
        raise InfeasibleParametersError(f'need c >= d >= 1, got c={c}, d={d}')
    n = instance.left_count
    lo, hi = phase_boundary(n, c), phase_boundary(n, d)
    state = OnlineMatchState()
    for l in order.ids[:lo]:
        state.arrive(l)
    _kesselheim_phase(instance, order, state, lo, hi, 'II')
    return state.matching()


def threshold_greedy(instance: BipartiteInstance, arrivals: Iterable[int], thresholds: Mapping[int, float],
                     state: Optional[OnlineMatchState] = None, phase: str = 'III') -> Matching:
    """
    Match each arrival to its heaviest free right node r with w >= t_r.

    Only right nodes that carry a threshold are eligible; equal weights go
    to the smaller right id. Nodes already matched in `state` stay taken.
    """
    for r, t in thresholds.items():
        if t < 0:
            raise InfeasibleParametersError(f'threshold for right node {r} is negative: {t}')
    state = state if state is not None else OnlineMatchState()

    for l in arrivals:
        state.arrive(l)
        best: Optional[Tuple[float, int]] = None
        for r, w in instance.neighbors(l).items():
            t = thresholds.get(r)
            if t is None or w < t or not state.is_right_free(r):
                continue
            if best is None or (w, -r) > (best[0], -best[1]):
                best = (w, r)
        if best is not None:
            state.commit(l, best[1], best[0], phase)
    return state.matching()


def algorithm3_trace(instance: BipartiteInstance, order: ArrivalOrder, params: BipartiteParams) -> OnlineMatchState:
    _require_augmented(instance)
    n = instance.left_count
    lo, hi = phase_boundary(n, params.c), phase_boundary(n, params.d)
    state = OnlineMatchState()
    for l in order.ids[:lo]:
        state.arrive(l)
    _kesselheim_phase(instance, order, state, lo, hi, 'II')
    threshold_greedy(instance, order.ids[hi:], params.thresholds(), state, 'III')
    return state


def algorithm3(instance: BipartiteInstance, order: ArrivalOrder, params: BipartiteParams) -> Matching:
    """
    Three phases over n arrivals: observe up to floor(n/c), commit per-step
    optimal edges up to floor(n/d), then threshold greedy with
    t_r = p*_r - lambda on the rest.
    """
    return algorithm3_trace(instance, order, params).matching()


def g_bipartite(eta: float, c: float, d: float, lam: float, opt: float, psi_cardinality: int) -> float:
    if not c > d >= 1.0:
        raise DomainError(f'need c > d >= 1, got c={c}, d={d}')
    if eta < 0:
        raise DomainError(f'eta must be non-negative, got {eta}')
    worst = math.log(c / d) / c
    if eta >= lam:
        return worst
    if opt <= 0:
        raise DomainError(f'OPT must be positive, got {opt}')
    good = (d - 1.0) / (2.0 * c) * max(1.0 - (lam + eta) * psi_cardinality / opt, 0.0)
    return max(worst, good)


def kesselheim_bound(c: float, d: float, n: int) -> float:
    """(1/c - 1/n) ln(c/d) for the baseline without predictions."""
    if not c >= d >= 1.0:
        raise DomainError(f'need c >= d >= 1, got c={c}, d={d}')
    if n < 1:
        raise DomainError(f'n must be positive, got {n}')
    return (1.0 / c - 1.0 / n) * math.log(c / d)


PlugIn = Callable[[Sequence[int], Mapping[int, Sequence[int]], Mapping[int, float]], List[Tuple[int, int]]]


def greedy_vertex_weighted(arrivals: Sequence[int], adjacency: Mapping[int, Sequence[int]],
                           vertex_weights: Mapping[int, float]) -> List[Tuple[int, int]]:
    """Match each arrival to its free neighbour of largest vertex weight, smaller id on ties."""
    taken: Set[int] = set()
    pairs = []
    for l in arrivals:
        free = [r for r in adjacency.get(l, ()) if r not in taken]
        if free:
            r = min(free, key=lambda r: (-vertex_weights[r], r))
            taken.add(r)
            pairs.append((l, r))
    return pairs


def in_band(w: float, p: float, lam: float) -> bool:
    return p - lam <= w <= p + lam


def reduce_to_vertex_weighted(instance: BipartiteInstance, order: ArrivalOrder, predictions: PredictionVector,
                              lam: float, plug_in: PlugIn = greedy_vertex_weighted) -> Matching:
    """
    Keep only edges with w(l, r) in [p*_r - lambda, p*_r + lambda] and run a
    vertex-weighted algorithm that sees weight p*_r on every edge into r.
    The returned matching carries the true edge weights.
    """
    if lam < 0:
        raise InfeasibleParametersError(f'lambda must be non-negative, got {lam}')
    adjacency: Dict[int, List[int]] = {}
    for l in range(1, instance.left_count + 1):
        adjacency[l] = sorted(
            r for r, w in instance.neighbors(l).items()
            if r in predictions.values and in_band(w, predictions.values[r], lam)
        )

    pairs = plug_in(order.ids, adjacency, predictions.values)
    seen_left, seen_right = set(), set()
    edges = []
    for l, r in pairs:
        if r not in adjacency.get(l, ()):
            raise InvariantViolation(f'plug-in used out-of-band edge ({l}, {r})')
        if l in seen_left or r in seen_right:
            raise InvariantViolation(f'plug-in returned overlapping pair ({l}, {r})')
        seen_left.add(l)
        seen_right.add(r)
        edges.append((l, r, instance.weights[(l, r)]))
    return Matching.from_edges(edges)


def assumed_weight(matching: Matching, predictions: PredictionVector) -> float:
    """Weight the vertex-weighted plug-in believes it collected: sum of p*_r over matched r."""
    return math.fsum(predictions.values[r] for _, r, _ in matching.edges)


def phase2_unmatched_probability(instance: BipartiteInstance, r: int, c: float, d: float,
                                 trials: int, rng: np.random.Generator) -> EmpiricalProbability:
    """Monte-Carlo frequency of right node r staying free through the commit phase."""
    if trials < 1:
        raise InfeasibleParametersError('trials must be positive')
    hits = 0
    for _ in range(trials):
        order = sample_arrival_order(instance.left_count, rng)
        if r not in kesselheim_baseline(instance, order, c, d).matched_right():
            hits += 1
    return EmpiricalProbability.from_hits(hits, trials)


def exact_phase2_unmatched_probability(instance: BipartiteInstance, r: int, c: float, d: float) -> float:
    n = instance.left_count
    if n > EXACT_ORACLE_LIMIT:
        raise OracleSizeError(f'exact enumeration supports n <= {EXACT_ORACLE_LIMIT}, got {n}')
    hits = 0
    count = 0
    for permutation in itertools.permutations(range(1, n + 1)):
        matching = kesselheim_baseline(instance, ArrivalOrder(ids=permutation), c, d)
        hits += r not in matching.matched_right()
        count += 1
    return hits / count
