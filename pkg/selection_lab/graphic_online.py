"""
Graphic matroid secretary through the element-vertex bipartite graph B_G.

Each graph edge e = {u, v} is an element linked to both endpoints with
weight w_e. Assigning e to vertex x orients it towards x, so x is the
head of a directed edge in D_M. A vertex can be the head of at most one
element, which keeps the selected elements a forest.
"""
import itertools
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from selection_lab.bipartite_online import EmpiricalProbability
from selection_lab.errors import DomainError, InfeasibleParametersError, InvariantViolation, OracleSizeError
from selection_lab.instances import ArrivalOrder, GraphInstance, PredictionVector, sample_arrival_order
from selection_lab.offline_oracles import ForestSelection, assigned_column
from selection_lab.utils import UnionFind, is_forest, phase_boundary

logger = logging.getLogger(__name__)

EXACT_ORACLE_LIMIT = 8

# (element id, tail vertex, head vertex, weight, phase)
OrientedPair = Tuple[int, int, int, float, str]


class ElementVertexGraph(BaseModel):
    model_config = ConfigDict(frozen=True)

    element_count: int = Field(..., ge=0)
    vertex_count: int = Field(..., ge=1)
    links: Tuple[Tuple[int, int, float], ...]

    @model_validator(mode='after')
    def check_links(self):
        per_element: Dict[int, List[Tuple[int, float]]] = {}
        for e, x, w in self.links:
            per_element.setdefault(e, []).append((x, w))
        if sorted(per_element) != list(range(1, self.element_count + 1)):
            raise ValueError('every element needs links')
        for e, ends in per_element.items():
            if len(ends) != 2 or ends[0][0] == ends[1][0]:
                raise ValueError(f'element {e} must link to exactly two vertices')
            if ends[0][1] != ends[1][1]:
                raise ValueError(f'element {e} links carry different weights')
        return self

    def link_count(self) -> int:
        return len(self.links)

    def vertices_of(self, element: int) -> Tuple[int, int]:
        u, v = (x for e, x, _ in self.links[2 * (element - 1):2 * element])
        return u, v


def build_element_vertex_graph(instance: GraphInstance) -> ElementVertexGraph:
    links = []
    for e, (u, v, w) in enumerate(instance.edges, start=1):
        links.append((e, u, w))
        links.append((e, v, w))
    return ElementVertexGraph(element_count=instance.edge_count, vertex_count=instance.vertex_count,
                              links=tuple(links))


class OrientedSelection(BaseModel):
    """Committed (element, vertex) pairs of B_G with the induced orientation."""

    model_config = ConfigDict(frozen=True)

    pairs: Tuple[OrientedPair, ...] = ()

    @model_validator(mode='after')
    def check_selection(self):
        elements = [e for e, _, _, _, _ in self.pairs]
        heads = [h for _, _, h, _, _ in self.pairs]
        if len(set(elements)) != len(elements):
            raise ValueError('an element is committed twice')
        if len(set(heads)) != len(heads):
            raise ValueError('a vertex has in-degree above one')
        if not is_forest((t, h) for _, t, h, _, _ in self.pairs):
            raise ValueError('committed elements contain a cycle')
        return self

    @property
    def total_weight(self) -> float:
        return math.fsum(w for _, _, _, w, _ in self.pairs)

    def elements(self) -> Tuple[int, ...]:
        return tuple(e for e, _, _, _, _ in self.pairs)

    def heads(self) -> frozenset:
        return frozenset(h for _, _, h, _, _ in self.pairs)

    def directed_edges(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((t, h) for _, t, h, _, _ in self.pairs)

    def in_degrees(self) -> Dict[int, int]:
        degrees: Dict[int, int] = {}
        for _, _, h, _, _ in self.pairs:
            degrees[h] = degrees.get(h, 0) + 1
        return degrees

    def phase_weight(self, phase: str) -> float:
        return math.fsum(w for _, _, _, w, p in self.pairs if p == phase)

    def to_forest(self) -> ForestSelection:
        edges = sorted((e, t, h, w) for e, t, h, w, _ in self.pairs)
        return ForestSelection(edges=tuple(edges), total_weight=math.fsum(w for *_, w in edges))


class ThresholdState(BaseModel):
    """t_v: heaviest edge at v among the Phase-I arrivals, 0 if none."""

    model_config = ConfigDict(frozen=True)

    values: Dict[int, float]

    def of(self, vertex: int) -> float:
        return self.values.get(vertex, 0.0)


class GraphicParams(BaseModel):
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

    def floor_of(self, vertex: int) -> float:
        return self.predictions.values.get(vertex, 0.0) - self.lam


class _Selection:
    """Mutable bookkeeping for one run; the union-find mirrors E[M]."""

    def __init__(self, instance: GraphInstance):
        self.instance = instance
        self.pairs: List[OrientedPair] = []
        self.heads: set = set()
        self.forest = UnionFind(range(1, instance.vertex_count + 1))

    def is_free(self, x: int) -> bool:
        return x not in self.heads

    def creates_cycle(self, element: int) -> bool:
        u, v = self.instance.endpoints(element)
        return self.forest.connected(u, v)

    def commit(self, element: int, head: int, phase: str):
        u, v = self.instance.endpoints(element)
        if head in self.heads:
            raise InvariantViolation(f'vertex {head} already has an incoming element')
        if not self.forest.union(u, v):
            raise InvariantViolation(f'element {element} closes a cycle')
        tail = v if head == u else u
        self.heads.add(head)
        self.pairs.append((element, tail, head, self.instance.weight(element), phase))

    def selection(self) -> OrientedSelection:
        return OrientedSelection(pairs=tuple(self.pairs))


def _observe(instance: GraphInstance, arrivals) -> ThresholdState:
    thresholds = {v: 0.0 for v in range(1, instance.vertex_count + 1)}
    for e in arrivals:
        u, v = instance.endpoints(e)
        w = instance.weight(e)
        thresholds[u] = max(thresholds[u], w)
        thresholds[v] = max(thresholds[v], w)
    return ThresholdState(values=thresholds)


def _matched_vertex_phase(instance: GraphInstance, order: ArrivalOrder, state: _Selection,
                          start: int, stop: int, phase: str):
    """
    For each arrival, solve the optimal B_G matching on all arrived elements
    and commit the newcomer's pair when both of its endpoints are still free.
    """
    matrix = instance.incidence_matrix()
    for position in range(start, stop):
        element = order.ids[position]
        column = assigned_column(matrix, order.ids[:position + 1], element)
        if column is None:
            continue
        u, v = instance.endpoints(element)
        if state.is_free(u) and state.is_free(v):
            state.commit(element, column + 1, phase)


def algorithm4(instance: GraphInstance, order: ArrivalOrder, c: float) -> OrientedSelection:
    """Deterministic: observe floor(m/c) elements, then the both-endpoints-free rule."""
    if not c > 1.0:
        raise InfeasibleParametersError(f'need c > 1, got {c}')
    m = instance.edge_count
    if m < 2:
        raise InfeasibleParametersError(f'need at least 2 edges, got {m}')
    state = _Selection(instance)
    _matched_vertex_phase(instance, order, state, phase_boundary(m, c), m, 'III')
    return state.selection()


class Algorithm5Trace(BaseModel):
    model_config = ConfigDict(frozen=True)

    selection: OrientedSelection
    thresholds: ThresholdState
    phase_two_start: int
    phase_three_start: int


def algorithm5_trace(instance: GraphInstance, order: ArrivalOrder, params: GraphicParams) -> Algorithm5Trace:
    m = instance.edge_count
    lo, hi = phase_boundary(m, params.c), phase_boundary(m, params.d)
    thresholds = _observe(instance, order.ids[:lo])
    state = _Selection(instance)

    for element in order.ids[lo:hi]:
        w = instance.weight(element)
        candidates = [
            x for x in instance.endpoints(element)
            if state.is_free(x) and w >= max(thresholds.of(x), params.floor_of(x))
        ]
        if not candidates:
            continue
        y = min(candidates, key=lambda x: (-params.floor_of(x), x))
        if not state.creates_cycle(element):
            state.commit(element, y, 'II')

    _matched_vertex_phase(instance, order, state, hi, m, 'III')
    return Algorithm5Trace(selection=state.selection(), thresholds=thresholds,
                           phase_two_start=lo, phase_three_start=hi)


def algorithm5(instance: GraphInstance, order: ArrivalOrder, params: GraphicParams) -> OrientedSelection:
    """
    Phase I records t_v; Phase II commits e to the free endpoint y maximising
    p*_y - lambda among those with w_e >= max(t_y, p*_y - lambda), when e
    closes no cycle; Phase III follows algorithm4's rule.
    """
    return algorithm5_trace(instance, order, params).selection


def g_graphic(eta: float, c: float, d: float, lam: float, opt: float, vertex_count: int) -> float:
    if not c > d >= 1.0:
        raise DomainError(f'need c > d >= 1, got c={c}, d={d}')
    if eta < 0:
        raise DomainError(f'eta must be non-negative, got {eta}')
    worst = (d - 1.0) / (c * c)
    if eta >= lam:
        return worst
    if opt <= 0:
        raise DomainError(f'OPT must be positive, got {opt}')
    good = 0.5 * (1.0 / d - 1.0 / c) * max(1.0 - 2.0 * (lam + eta) * vertex_count / opt, 0.0)
    return max(worst, good)


class ProxyBound(BaseModel):
    model_config = ConfigDict(frozen=True)

    phase_two_weight: float
    proxy: float
    vertices: Tuple[int, ...]


def heaviest_incident_element(instance: GraphInstance) -> Dict[int, int]:
    """Per vertex, the id of its heaviest edge; the smaller id wins a tie."""
    best: Dict[int, int] = {}
    for e in range(1, instance.edge_count + 1):
        w = instance.weight(e)
        for x in instance.endpoints(e):
            if x not in best or w > instance.weight(best[x]):
                best[x] = e
    return best


def phase_two_proxy_bound(instance: GraphInstance, order: ArrivalOrder, params: GraphicParams) -> ProxyBound:
    """
    (Phase-II committed weight, 1/2 sum over Q of p*_v - (lambda + eta)),
    Q being the vertices whose heaviest edge arrives in Phase II.
    """
    trace = algorithm5_trace(instance, order, params)
    phase_two = set(order.ids[trace.phase_two_start:trace.phase_three_start])
    eta = params.predictions.declared_eta
    q = tuple(sorted(x for x, e in heaviest_incident_element(instance).items() if e in phase_two))
    proxy = 0.5 * math.fsum(params.predictions.values.get(x, 0.0) - (params.lam + eta) for x in q)
    return ProxyBound(phase_two_weight=trace.selection.phase_weight('II'), proxy=proxy, vertices=q)


def _zero_params(instance: GraphInstance, c: float, d: float) -> GraphicParams:
    zeros = PredictionVector(kind='graphic', values={v: 0.0 for v in range(1, instance.vertex_count + 1)},
                             declared_eta=0.0)
    return GraphicParams(c=c, d=d, lam=0.0, predictions=zeros)


def _pair_unmatched(instance: GraphInstance, order: ArrivalOrder, u: int, v: int, params: GraphicParams) -> bool:
    heads = {h for _, _, h, _, phase in algorithm5(instance, order, params).pairs if phase == 'II'}
    return u not in heads and v not in heads


def pair_unmatched_probability(instance: GraphInstance, u: int, v: int, c: float, d: float, trials: int,
                               rng: np.random.Generator,
                               params: Optional[GraphicParams] = None) -> EmpiricalProbability:
    """Frequency of neither u nor v receiving an element in Phase II of algorithm5."""
    if u == v:
        raise InfeasibleParametersError('need two distinct vertices')
    if trials < 1:
        raise InfeasibleParametersError('trials must be positive')
    if c == d:
        return EmpiricalProbability.from_hits(trials, trials)
    params = params if params is not None else _zero_params(instance, c, d)
    hits = 0
    for _ in range(trials):
        order = sample_arrival_order(instance.edge_count, rng)
        hits += _pair_unmatched(instance, order, u, v, params)
    return EmpiricalProbability.from_hits(hits, trials)


def exact_pair_unmatched_probability(instance: GraphInstance, u: int, v: int, c: float, d: float,
                                     params: Optional[GraphicParams] = None) -> float:
    m = instance.edge_count
    if m > EXACT_ORACLE_LIMIT:
        raise OracleSizeError(f'exact enumeration supports m <= {EXACT_ORACLE_LIMIT}, got {m}')
    if u == v:
        raise InfeasibleParametersError('need two distinct vertices')
    if c == d:
        return 1.0
    params = params if params is not None else _zero_params(instance, c, d)
    outcomes = [
        _pair_unmatched(instance, ArrivalOrder(ids=permutation), u, v, params)
        for permutation in itertools.permutations(range(1, m + 1))
    ]
    return sum(outcomes) / len(outcomes)
