"""
Input structures for the three online selection problems.

Every instance is an immutable pydantic model; derived arrays (ranks,
weight matrices) are memoised per instance. Elements are identified by
1-based ids and equal values are ordered by id, the smaller id counting
as the larger element.
"""
import io
import logging
import math
from typing import TYPE_CHECKING, Dict, List, Literal, Optional, TextIO, Tuple, Union

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, field_validator, model_validator

from selection_lab.errors import InstanceParseError, InstanceValidationError
from selection_lab.utils import DerivedCache, UnionFind

if TYPE_CHECKING:
    from selection_lab.offline_oracles import Matching

logger = logging.getLogger(__name__)

InstanceKind = Literal['secretary', 'bipartite', 'graph']


def _check_weight(w: float) -> float:
    if math.isnan(w) or math.isinf(w):
        raise ValueError(f'weight must be finite, got {w}')
    if w < 0:
        raise ValueError(f'weight must be non-negative, got {w}')
    return w


class SecretaryInstance(BaseModel):
    model_config = ConfigDict(frozen=True)

    values: Tuple[float, ...]

    _derived: DerivedCache = PrivateAttr(default_factory=DerivedCache)

    @field_validator('values')
    @classmethod
    def values_must_be_valid(cls, v):
        if len(v) < 1:
            raise ValueError('a secretary instance needs at least one value')
        for value in v:
            _check_weight(value)
        return v

    @property
    def n(self) -> int:
        return len(self.values)

    def value_of(self, element_id: int) -> float:
        return self.values[element_id - 1]

    def value_array(self) -> np.ndarray:
        if 'values' not in self._derived:
            self._derived['values'] = np.asarray(self.values, dtype=float)
        return self._derived['values']

    def rank_array(self) -> np.ndarray:
        """Position of each element (by index) in the global total order, 0 = smallest."""
        if 'ranks' not in self._derived:
            ids = np.arange(1, self.n + 1)
            ascending = np.lexsort((-ids, self.value_array()))
            ranks = np.empty(self.n, dtype=np.int64)
            ranks[ascending] = np.arange(self.n)
            self._derived['ranks'] = ranks
        return self._derived['ranks']


class BipartiteInstance(BaseModel):
    """
    Weighted bipartite graph with online side L = 1..left_count.

    After augmentation the right side holds the original nodes
    1..base_right_count followed by one private zero-weight dummy per
    left node: dummy(l) = base_right_count + l.
    """

    model_config = ConfigDict(frozen=True)

    left_count: int = Field(..., ge=1)
    right_count: int = Field(..., ge=0)
    weights: Dict[Tuple[int, int], float]
    augmented: bool = False
    base_right_count: Optional[int] = None

    _derived: DerivedCache = PrivateAttr(default_factory=DerivedCache)

    @field_validator('weights')
    @classmethod
    def weights_must_be_valid(cls, v):
        for edge, w in v.items():
            try:
                _check_weight(w)
            except ValueError as e:
                raise ValueError(f'edge {edge}: {e}')
        return v

    @model_validator(mode='after')
    def check_structure(self):
        for (l, r) in self.weights:
            if not 1 <= l <= self.left_count:
                raise ValueError(f'left node {l} outside 1..{self.left_count}')
            if not 1 <= r <= self.right_count:
                raise ValueError(f'right node {r} outside 1..{self.right_count}')
        if self.base_right_count is not None and not self.augmented:
            raise ValueError('base_right_count is only meaningful for augmented instances')
        if self.augmented:
            base = self.real_right_count
            if self.right_count != base + self.left_count:
                raise ValueError('augmented instance needs one dummy right node per left node')
            for l in range(1, self.left_count + 1):
                if self.weights.get((l, base + l)) != 0:
                    raise ValueError(f'left node {l} lacks its zero-weight dummy')
        return self

    @property
    def real_right_count(self) -> int:
        return self.right_count if self.base_right_count is None else self.base_right_count

    def is_dummy(self, r: int) -> bool:
        return self.augmented and r > self.real_right_count

    def dummy_of(self, l: int) -> int:
        if not self.augmented:
            raise InstanceValidationError('instance is not augmented')
        return self.real_right_count + l

    def weight(self, l: int, r: int) -> Optional[float]:
        return self.weights.get((l, r))

    def neighbors(self, l: int) -> Dict[int, float]:
        if 'adjacency' not in self._derived:
            adjacency: Dict[int, Dict[int, float]] = {i: {} for i in range(1, self.left_count + 1)}
            for (i, r), w in self.weights.items():
                adjacency[i][r] = w
            self._derived['adjacency'] = adjacency
        return self._derived['adjacency'][l]

    def weight_matrix(self) -> np.ndarray:
        """Dense (left_count x right_count) weights, absent edges as 0."""
        if 'matrix' not in self._derived:
            matrix = np.zeros((self.left_count, self.right_count), dtype=float)
            for (l, r), w in self.weights.items():
                matrix[l - 1, r - 1] = w
            self._derived['matrix'] = matrix
        return self._derived['matrix']


class GraphInstance(BaseModel):
    """Undirected weighted graph whose edges (ids 1..m in list order) arrive online."""

    model_config = ConfigDict(frozen=True)

    vertex_count: int = Field(..., ge=1)
    edges: Tuple[Tuple[int, int, float], ...]
    connected: bool = False

    _derived: DerivedCache = PrivateAttr(default_factory=DerivedCache)

    @model_validator(mode='after')
    def check_structure(self):
        for idx, (u, v, w) in enumerate(self.edges, start=1):
            if u == v:
                raise ValueError(f'edge {idx} is a self-loop on vertex {u}')
            for x in (u, v):
                if not 1 <= x <= self.vertex_count:
                    raise ValueError(f'edge {idx} endpoint {x} outside 1..{self.vertex_count}')
            try:
                _check_weight(w)
            except ValueError as e:
                raise ValueError(f'edge {idx}: {e}')
        if self.connected and not graph_is_connected(self.vertex_count, self.edges):
            raise ValueError('instance is flagged connected but is not')
        return self

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def endpoints(self, edge_id: int) -> Tuple[int, int]:
        u, v, _ = self.edges[edge_id - 1]
        return u, v

    def weight(self, edge_id: int) -> float:
        return self.edges[edge_id - 1][2]

    def max_incident_weights(self) -> Dict[int, float]:
        """w_max(v) for every vertex, 0 for isolated vertices."""
        if 'w_max' not in self._derived:
            w_max = {v: 0.0 for v in range(1, self.vertex_count + 1)}
            for u, v, w in self.edges:
                w_max[u] = max(w_max[u], w)
                w_max[v] = max(w_max[v], w)
            self._derived['w_max'] = w_max
        return self._derived['w_max']

    def incidence_matrix(self) -> np.ndarray:
        """(edge_count x vertex_count) matrix with w_e on both endpoint columns."""
        if 'incidence' not in self._derived:
            matrix = np.zeros((self.edge_count, self.vertex_count), dtype=float)
            for idx, (u, v, w) in enumerate(self.edges):
                matrix[idx, u - 1] = w
                matrix[idx, v - 1] = w
            self._derived['incidence'] = matrix
        return self._derived['incidence']


def graph_is_connected(vertex_count: int, edges) -> bool:
    uf = UnionFind(range(1, vertex_count + 1))
    for u, v, _ in edges:
        uf.union(u, v)
    return uf.component_count() == 1


class ArrivalOrder(BaseModel):
    """A permutation of element ids 1..count; position 0 arrives first."""

    model_config = ConfigDict(frozen=True)

    ids: Tuple[int, ...]

    @field_validator('ids')
    @classmethod
    def must_be_permutation(cls, v):
        if sorted(v) != list(range(1, len(v) + 1)):
            raise ValueError('arrival order must be a permutation of 1..count')
        return v

    @property
    def count(self) -> int:
        return len(self.ids)

    def as_indices(self) -> np.ndarray:
        """Zero-based element indices in arrival order."""
        return np.asarray(self.ids, dtype=np.int64) - 1


class PredictionVector(BaseModel):
    """
    Predicted values p* per target.

    secretary: a single value under key 0; bipartite: one per original right
    node; graphic: one per vertex. declared_eta is the error of this vector
    against the instance it was generated for.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal['secretary', 'bipartite', 'graphic']
    values: Dict[int, float]
    declared_eta: float = Field(..., ge=0)
    eta_is_upper_bound: bool = False

    @field_validator('values')
    @classmethod
    def values_must_be_valid(cls, v):
        for key, p in v.items():
            try:
                _check_weight(p)
            except ValueError as e:
                raise ValueError(f'prediction {key}: {e}')
        return v

    @property
    def scalar(self) -> float:
        return self.values[0]

    def min_value(self) -> float:
        return min(self.values.values()) if self.values else 0.0


class ErrorModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal['exact', 'constant_shift', 'uniform_noise', 'adversarial_sign'] = 'exact'
    magnitude: float = Field(0.0, ge=0)
    seed: int = 0
    integer: bool = False

    @model_validator(mode='after')
    def check_integral(self):
        if self.integer and not float(self.magnitude).is_integer():
            raise ValueError('integer error models need an integral magnitude')
        return self

    def perturb(self, targets: Dict[int, float]) -> Dict[int, float]:
        rng = np.random.default_rng(self.seed)
        eta = self.magnitude
        predicted = {}
        for key in sorted(targets):
            t = targets[key]
            if self.kind == 'exact':
                p = t
            elif self.kind == 'constant_shift':
                p = t + eta
            elif self.kind == 'uniform_noise':
                if self.integer:
                    p = t + int(rng.integers(-int(eta), int(eta) + 1))
                else:
                    p = t + float(rng.uniform(-eta, eta))
            else:
                sign = 1.0 if rng.random() < 0.5 else -1.0
                # a shift that would go negative is flipped, keeping |p - t| = eta
                if t - eta < 0:
                    sign = 1.0
                p = t + sign * eta
            predicted[key] = p
        return predicted


class WeightDistribution(BaseModel):
    """
    Weight law for generated instances.

    uniform: U(low, high); power_law: low + (high - low) * Lomax(exponent);
    integer: uniform integers in [low, high].
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal['uniform', 'power_law', 'integer'] = 'uniform'
    low: float = Field(0.0, ge=0)
    high: float = 1.0
    exponent: float = Field(2.5, gt=0)

    @model_validator(mode='after')
    def check_range(self):
        if self.high < self.low:
            raise ValueError('high must be >= low')
        if self.kind == 'integer' and not (float(self.low).is_integer() and float(self.high).is_integer()):
            raise ValueError('integer weights need integral bounds')
        return self

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == 'uniform':
            return rng.uniform(self.low, self.high, size)
        elif self.kind == 'power_law':
            return self.low + (self.high - self.low) * rng.pareto(self.exponent, size)
        return rng.integers(int(self.low), int(self.high) + 1, size).astype(float)


def augment_perfect(instance: BipartiteInstance) -> BipartiteInstance:
    """Add one private zero-weight right node per left node; OPT is unchanged."""
    if instance.augmented:
        return instance
    base = instance.right_count
    weights = dict(instance.weights)
    for l in range(1, instance.left_count + 1):
        weights[(l, base + l)] = 0.0
    return BipartiteInstance(
        left_count=instance.left_count,
        right_count=base + instance.left_count,
        weights=weights,
        augmented=True,
        base_right_count=base,
    )


def prediction_targets(instance, oracle_result=None) -> Dict[int, float]:
    """The true values a perfect prediction vector would hold."""
    if isinstance(instance, SecretaryInstance):
        opt = oracle_result[0] if oracle_result is not None else max(instance.values)
        return {0: float(opt)}
    elif isinstance(instance, BipartiteInstance):
        if oracle_result is None:
            raise InstanceValidationError('bipartite predictions need an optimal matching')
        targets = {r: 0.0 for r in range(1, instance.real_right_count + 1)}
        for _, r, w in oracle_result.edges:
            if r in targets:
                targets[r] = w
        return targets
    elif isinstance(instance, GraphInstance):
        return dict(instance.max_incident_weights())
    raise InstanceValidationError(f'no predictions defined for {type(instance).__name__}')


def make_predictions(instance, model: ErrorModel, oracle_result=None) -> PredictionVector:
    """
    Predictions for an instance with error generated by `model`.

    oracle_result is (value, id) for secretary instances and the optimal
    Matching for bipartite ones; graphic targets come from the instance.
    """
    targets = prediction_targets(instance, oracle_result)
    predicted = model.perturb(targets)

    clamped = [key for key, p in predicted.items() if p < 0]
    if clamped:
        logger.warning(f"Clamping {len(clamped)} negative prediction(s) to 0")
        for key in clamped:
            predicted[key] = 0.0

    declared_eta = max((abs(predicted[k] - targets[k]) for k in targets), default=0.0)
    if isinstance(instance, SecretaryInstance):
        kind = 'secretary'
    elif isinstance(instance, BipartiteInstance):
        kind = 'bipartite'
    else:
        kind = 'graphic'

    return PredictionVector(
        kind=kind,
        values=predicted,
        declared_eta=declared_eta,
        eta_is_upper_bound=(kind == 'bipartite'),
    )


def sample_arrival_order(count: int, rng: np.random.Generator) -> ArrivalOrder:
    if count < 1:
        raise InstanceValidationError(f'arrival order needs count >= 1, got {count}')
    permutation = rng.permutation(count) + 1
    # a permutation by construction, skip re-validation
    return ArrivalOrder.model_construct(ids=tuple(permutation.tolist()))


def random_secretary_instance(n: int, rng: np.random.Generator,
                              weights: WeightDistribution = WeightDistribution()) -> SecretaryInstance:
    return SecretaryInstance(values=tuple(weights.sample(rng, n).tolist()))


def random_bipartite_instance(n: int, m: int, rng: np.random.Generator,
                              weights: WeightDistribution = WeightDistribution(),
                              density: float = 1.0) -> BipartiteInstance:
    """Random bipartite instance; density 1.0 gives the complete graph."""
    draws = weights.sample(rng, n * m).reshape(n, m)
    present = rng.random((n, m)) < density if density < 1.0 else np.ones((n, m), dtype=bool)
    edge_weights = {
        (l + 1, r + 1): float(draws[l, r])
        for l in range(n) for r in range(m) if present[l, r]
    }
    return BipartiteInstance(left_count=n, right_count=m, weights=edge_weights)


def random_graph_instance(vertex_count: int, edge_probability: float, rng: np.random.Generator,
                          weights: WeightDistribution = WeightDistribution(),
                          max_attempts: int = 1000) -> GraphInstance:
    """Erdős–Rényi graph, resampled until connected."""
    if vertex_count < 2:
        raise InstanceValidationError('a connected graph instance needs at least 2 vertices')
    for attempt in range(max_attempts):
        graph = nx.gnp_random_graph(vertex_count, edge_probability, seed=int(rng.integers(2**32)))
        if nx.is_connected(graph):
            pairs = sorted((min(u, v) + 1, max(u, v) + 1) for u, v in graph.edges())
            draws = weights.sample(rng, len(pairs))
            edges = tuple((u, v, float(w)) for (u, v), w in zip(pairs, draws))
            logger.debug(f"Connected graph after {attempt + 1} attempt(s)")
            return GraphInstance(vertex_count=vertex_count, edges=edges, connected=True)
    raise InstanceValidationError(
        f'no connected G({vertex_count}, {edge_probability}) after {max_attempts} attempts'
    )


def random_tree_instance(vertex_count: int, rng: np.random.Generator,
                         weights: WeightDistribution = WeightDistribution()) -> GraphInstance:
    """Random recursive tree: vertex v attaches to a uniform earlier vertex."""
    if vertex_count < 2:
        raise InstanceValidationError('a tree instance needs at least 2 vertices')
    draws = weights.sample(rng, vertex_count - 1)
    edges = []
    for v in range(2, vertex_count + 1):
        parent = int(rng.integers(1, v))
        edges.append((parent, v, float(draws[v - 2])))
    return GraphInstance(vertex_count=vertex_count, edges=tuple(edges), connected=True)


def _content_lines(stream: TextIO):
    for line_number, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        yield line_number, line.split()


def _parse_number(token: str, cast, line_number: int):
    try:
        return cast(token)
    except ValueError:
        raise InstanceParseError(f'cannot read {token!r} as {cast.__name__}', line_number)


def _parse_weight(token: str, line_number: int) -> float:
    w = _parse_number(token, float, line_number)
    if w < 0:
        raise InstanceValidationError(f'line {line_number}: negative weight {w}')
    return w


def parse_instance(text: Union[str, TextIO], kind: InstanceKind):
    """
    Read an instance from the plain-text formats.

    graph: "|V| [connected]" then "u v w" lines; bipartite: "n m [base]"
    then "l r w" lines, where a base right count marks an augmented
    instance; secretary: one value per line. '#' lines are comments.
    Without the connected flag it is computed from the edges.
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    lines = list(_content_lines(stream))

    try:
        if kind == 'secretary':
            values = []
            for line_number, tokens in lines:
                if len(tokens) != 1:
                    raise InstanceParseError('expected a single value', line_number)
                values.append(_parse_weight(tokens[0], line_number))
            return SecretaryInstance(values=tuple(values))

        if not lines:
            raise InstanceParseError('missing header line', 1)
        header_line, header = lines[0]

        if kind == 'graph':
            if len(header) not in (1, 2):
                raise InstanceParseError('expected "|V| [connected]"', header_line)
            vertex_count = _parse_number(header[0], int, header_line)
            flag = None
            if len(header) == 2:
                flag = _parse_number(header[1], int, header_line)
                if flag not in (0, 1):
                    raise InstanceParseError(f'connected flag must be 0 or 1, got {flag}', header_line)
            edges = []
            for line_number, tokens in lines[1:]:
                if len(tokens) != 3:
                    raise InstanceParseError('expected "u v w"', line_number)
                u = _parse_number(tokens[0], int, line_number)
                v = _parse_number(tokens[1], int, line_number)
                edges.append((u, v, _parse_weight(tokens[2], line_number)))
            if flag is None:
                connected = vertex_count >= 1 and graph_is_connected(vertex_count, edges)
            else:
                connected = bool(flag)
            return GraphInstance(vertex_count=vertex_count, edges=tuple(edges), connected=connected)

        if kind == 'bipartite':
            if len(header) not in (2, 3):
                raise InstanceParseError('expected "n m [base]"', header_line)
            n = _parse_number(header[0], int, header_line)
            m = _parse_number(header[1], int, header_line)
            base = _parse_number(header[2], int, header_line) if len(header) == 3 else None
            weights = {}
            for line_number, tokens in lines[1:]:
                if len(tokens) != 3:
                    raise InstanceParseError('expected "l r w"', line_number)
                l = _parse_number(tokens[0], int, line_number)
                r = _parse_number(tokens[1], int, line_number)
                if (l, r) in weights:
                    raise InstanceParseError(f'duplicate edge ({l}, {r})', line_number)
                weights[(l, r)] = _parse_weight(tokens[2], line_number)
            return BipartiteInstance(left_count=n, right_count=m, weights=weights,
                                     augmented=base is not None, base_right_count=base)

    except ValidationError as e:
        raise InstanceValidationError(f'invalid {kind} instance: {e}') from e

    raise InstanceParseError(f'unknown instance kind {kind!r}')


def write_instance(instance) -> str:
    """
    Serialize to the format read by parse_instance.

    Augmented bipartite instances carry their base right count in the
    header; the dummy edges are written as ordinary zero-weight edges.
    """
    out: List[str] = []
    if isinstance(instance, SecretaryInstance):
        out.extend(repr(float(v)) for v in instance.values)
    elif isinstance(instance, GraphInstance):
        out.append(f"{instance.vertex_count} {int(instance.connected)}")
        out.extend(f"{u} {v} {float(w)!r}" for u, v, w in instance.edges)
    elif isinstance(instance, BipartiteInstance):
        header = f"{instance.left_count} {instance.right_count}"
        if instance.augmented:
            header += f" {instance.real_right_count}"
        out.append(header)
        out.extend(f"{l} {r} {float(w)!r}" for (l, r), w in sorted(instance.weights.items()))
    else:
        raise InstanceValidationError(f'cannot write {type(instance).__name__}')
    return "\n".join(out) + "\n"
