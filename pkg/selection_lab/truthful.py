"""
Truthful online mechanism for single-value unit-demand agents.

Agents arrive in random order and report one integer value for any item
in their preferred set. Phase I allocates nothing, Phase II follows the
lexicographically maximal optimal matching and charges critical values,
Phase III posts prices p*_r - lambda.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from selection_lab.errors import InstanceValidationError, InvariantViolation
from selection_lab.instances import ArrivalOrder, BipartiteInstance, PredictionVector
from selection_lab.offline_oracles import critical_value, lex_max_matching, max_weight_matching
from selection_lab.utils import is_integral, phase_boundary

logger = logging.getLogger(__name__)


class UnitDemandInstance(BaseModel):
    model_config = ConfigDict(frozen=True)

    item_count: int = Field(..., ge=0)
    values: Tuple[int, ...]
    preferred: Tuple[Tuple[int, ...], ...]

    @field_validator('values')
    @classmethod
    def values_must_be_valid(cls, v):
        for value in v:
            if value < 0:
                raise ValueError(f'values must be non-negative, got {value}')
        return v

    @model_validator(mode='after')
    def check_structure(self):
        if len(self.values) != len(self.preferred):
            raise ValueError('one preferred set per agent is required')
        for agent, items in enumerate(self.preferred, start=1):
            if len(set(items)) != len(items):
                raise ValueError(f'agent {agent} lists an item twice')
            for r in items:
                if not 1 <= r <= self.item_count:
                    raise ValueError(f'agent {agent} prefers item {r} outside 1..{self.item_count}')
        return self

    @property
    def agent_count(self) -> int:
        return len(self.values)

    def value_of(self, agent: int) -> int:
        return self.values[agent - 1]

    def prefers(self, agent: int, item: int) -> bool:
        return item in self.preferred[agent - 1]

    def to_bipartite(self, reports: Sequence[int]) -> BipartiteInstance:
        """Agent i gets an edge of weight report_i to every preferred item."""
        weights = {
            (agent, r): float(reports[agent - 1])
            for agent, items in enumerate(self.preferred, start=1)
            for r in items
        }
        return BipartiteInstance(left_count=self.agent_count, right_count=self.item_count, weights=weights)

    @classmethod
    def from_bipartite(cls, instance: BipartiteInstance) -> 'UnitDemandInstance':
        """Read an instance whose every left node has one integer weight on all its edges."""
        values, preferred = [], []
        for l in range(1, instance.left_count + 1):
            neighbours = instance.neighbors(l)
            weights = set(neighbours.values())
            if len(weights) > 1:
                raise InstanceValidationError(f'agent {l} has more than one value')
            value = weights.pop() if weights else 0.0
            if not is_integral(value):
                raise InstanceValidationError(f'agent {l} has a non-integer value {value}')
            values.append(int(value))
            preferred.append(tuple(sorted(neighbours)))
        return cls(item_count=instance.right_count, values=tuple(values), preferred=tuple(preferred))


class MechanismParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float
    d: float = Field(..., ge=1.0)
    lam: int = Field(..., ge=0)
    predictions: PredictionVector

    @model_validator(mode='after')
    def check_parameters(self):
        if not self.c > self.d:
            raise ValueError(f'need c > d, got c={self.c}, d={self.d}')
        for r, p in self.predictions.values.items():
            price = p - self.lam
            if price < 0 or not is_integral(price):
                raise ValueError(f'posted price of item {r} must be a non-negative integer, got {price}')
        return self

    def posted_price(self, item: int) -> Optional[int]:
        p = self.predictions.values.get(item)
        return None if p is None else int(p - self.lam)


class MechanismOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    allocation: Dict[int, Optional[int]]
    prices: Dict[int, int]
    phases: Dict[int, str] = Field(default_factory=dict)

    @model_validator(mode='after')
    def check_outcome(self):
        items = [r for r in self.allocation.values() if r is not None]
        if len(set(items)) != len(items):
            raise ValueError('an item is allocated twice')
        for agent, price in self.prices.items():
            if price < 0:
                raise ValueError(f'agent {agent} has a negative price')
            if self.allocation.get(agent) is None and price != 0:
                raise ValueError(f'unallocated agent {agent} is charged {price}')
        return self

    def item_of(self, agent: int) -> Optional[int]:
        return self.allocation.get(agent)


def _check_reports(instance: UnitDemandInstance, reports: Sequence) -> Tuple[int, ...]:
    if len(reports) != instance.agent_count:
        raise InstanceValidationError(f'expected {instance.agent_count} reports, got {len(reports)}')
    checked = []
    for agent, report in enumerate(reports, start=1):
        if isinstance(report, bool) or not is_integral(report) or report < 0:
            raise InstanceValidationError(f'agent {agent} report must be a non-negative integer, got {report}')
        checked.append(int(report))
    return tuple(checked)


def run_mechanism(instance: UnitDemandInstance, reports: Sequence[int], order: ArrivalOrder,
                  params: MechanismParams) -> MechanismOutcome:
    reports = _check_reports(instance, reports)
    graph = instance.to_bipartite(reports)
    n = instance.agent_count
    lo, hi = phase_boundary(n, params.c), phase_boundary(n, params.d)

    allocation: Dict[int, Optional[int]] = {agent: None for agent in range(1, n + 1)}
    prices: Dict[int, int] = {agent: 0 for agent in range(1, n + 1)}
    phases: Dict[int, str] = {}
    taken = set()

    for agent in order.ids[:lo]:
        phases[agent] = 'I'

    for position in range(lo, hi):
        agent = order.ids[position]
        phases[agent] = 'II'
        arrived = order.ids[:position + 1]
        r = lex_max_matching(graph, arrived).partner_of_left(agent)
        if r is None or r in taken:
            continue
        critical = critical_value(graph, agent, arrived)
        if critical.tau is None or critical.tau > reports[agent - 1]:
            raise InvariantViolation(f'agent {agent} matched below its critical value {critical.tau}')
        allocation[agent] = r
        prices[agent] = critical.tau
        taken.add(r)

    for agent in order.ids[hi:]:
        phases[agent] = 'III'
        report = reports[agent - 1]
        affordable = [
            (params.posted_price(r), r) for r in instance.preferred[agent - 1]
            if r not in taken and params.posted_price(r) is not None and report >= params.posted_price(r)
        ]
        if affordable:
            price, r = min(affordable)
            allocation[agent] = r
            prices[agent] = price
            taken.add(r)

    return MechanismOutcome(allocation=allocation, prices=prices, phases=phases)


def utility(instance: UnitDemandInstance, agent: int, outcome: MechanismOutcome) -> int:
    """v_i if agent holds a preferred item, minus the price charged."""
    item = outcome.item_of(agent)
    gain = instance.value_of(agent) if item is not None and instance.prefers(agent, item) else 0
    return gain - outcome.prices.get(agent, 0)


def social_welfare(instance: UnitDemandInstance, outcome: MechanismOutcome) -> int:
    return sum(
        instance.value_of(agent)
        for agent, item in outcome.allocation.items()
        if item is not None and instance.prefers(agent, item)
    )


def optimal_welfare(instance: UnitDemandInstance) -> float:
    return max_weight_matching(instance.to_bipartite(instance.values)).total_weight


class Deviation(BaseModel):
    model_config = ConfigDict(frozen=True)

    agent: int
    report: int
    truthful_utility: int
    deviating_utility: int


class TruthfulnessAudit(BaseModel):
    model_config = ConfigDict(frozen=True)

    violations: List[Deviation] = Field(default_factory=list)
    runs: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations


def audit_truthfulness(instance: UnitDemandInstance, order: ArrivalOrder, params: MechanismParams,
                       margin: int = 2, max_report: Optional[int] = None) -> TruthfulnessAudit:
    """
    Compare every agent's truthful utility with each unilateral deviation
    in 0..max_report (default: largest value + margin), others truthful.
    """
    top = max_report if max_report is not None else max(instance.values, default=0) + margin
    truthful = run_mechanism(instance, instance.values, order, params)
    violations = []
    runs = 1
    for agent in range(1, instance.agent_count + 1):
        honest = utility(instance, agent, truthful)
        for report in range(0, top + 1):
            if report == instance.value_of(agent):
                continue
            reports = list(instance.values)
            reports[agent - 1] = report
            deviating = utility(instance, agent, run_mechanism(instance, reports, order, params))
            runs += 1
            if deviating > honest:
                violations.append(Deviation(agent=agent, report=report,
                                            truthful_utility=honest, deviating_utility=deviating))
    if violations:
        logger.warning(f"Truthfulness audit found {len(violations)} profitable deviation(s)")
    return TruthfulnessAudit(violations=violations, runs=runs)


def allocation_profile(instance: UnitDemandInstance, order: ArrivalOrder, params: MechanismParams,
                       agent: int, max_report: int) -> List[Optional[int]]:
    """Item allocated to `agent` for each report 0..max_report, others truthful."""
    profile = []
    for report in range(0, max_report + 1):
        reports = list(instance.values)
        reports[agent - 1] = report
        profile.append(run_mechanism(instance, reports, order, params).item_of(agent))
    return profile


def is_monotone_profile(profile: Sequence[Optional[int]]) -> bool:
    """Unallocated up to some report, then the same item for every higher report."""
    allocated = [item for item in profile if item is not None]
    if not allocated:
        return True
    first = next(i for i, item in enumerate(profile) if item is not None)
    return all(item == allocated[0] for item in profile[first:])
