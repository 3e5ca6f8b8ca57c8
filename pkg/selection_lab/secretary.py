"""
Single-choice secretary algorithms with and without a predicted maximum.

Arrival scans are vectorised over the order: strict comparisons "v > t"
are made on ranks in the global total order (value, then smaller id),
so equal values never tie.
"""
import itertools
import logging
import math
from functools import lru_cache
from typing import Callable, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats
from scipy.integrate import quad
from scipy.optimize import brentq

from selection_lab.errors import DomainError, InfeasibleParametersError, OracleSizeError
from selection_lab.instances import ArrivalOrder, SecretaryInstance
from selection_lab.numerics import INV_E, f_of_c, phase_fractions
from selection_lab.utils import fraction_boundary

logger = logging.getLogger(__name__)

Phase = Literal['II', 'III', 'none']

EXACT_ORACLE_LIMIT = 8


class SecretaryParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float = Field(..., ge=1.0)
    lam: float = Field(..., ge=0.0)
    p_star: float = Field(..., ge=0.0)

    @model_validator(mode='after')
    def check_lambda(self):
        if self.lam > self.p_star:
            raise ValueError(f'lambda {self.lam} exceeds p* {self.p_star}')
        return self


class SelectionOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    element_id: Optional[int] = None
    value: float = 0.0
    phase: Phase = 'none'

    @model_validator(mode='after')
    def check_empty(self):
        if self.element_id is None and (self.value != 0.0 or self.phase != 'none'):
            raise ValueError('an empty selection has value 0 and phase none')
        if self.element_id is not None and self.phase == 'none':
            raise ValueError('a selection must record its phase')
        return self


NO_SELECTION = SelectionOutcome()


def _select(instance: SecretaryInstance, order: ArrivalOrder, position: int, phase: Phase) -> SelectionOutcome:
    element_id = order.ids[position]
    return SelectionOutcome(element_id=element_id, value=instance.value_of(element_id), phase=phase)


def _first(mask: np.ndarray) -> Optional[int]:
    hits = np.flatnonzero(mask)
    return int(hits[0]) if hits.size else None


@lru_cache(maxsize=1024)
def _boundaries(n: int, c: float) -> Tuple[int, int]:
    fractions = phase_fractions(c)
    return fraction_boundary(n, fractions.low), fraction_boundary(n, fractions.high)


def classical_secretary(instance: SecretaryInstance, order: ArrivalOrder,
                        sample_fraction: float = INV_E) -> SelectionOutcome:
    """Observe floor(fraction * n) arrivals, then take the first one beating all of them."""
    if not 0.0 < sample_fraction < 1.0:
        raise InfeasibleParametersError(f'sample fraction must lie in (0, 1), got {sample_fraction}')
    idx = order.as_indices()
    k = fraction_boundary(instance.n, sample_fraction)

    if k > 0:
        ranks = instance.rank_array()[idx]
        hit = _first(ranks[k:] > ranks[:k].max())
    else:
        hit = _first(instance.value_array()[idx] > 0.0)

    if hit is None:
        return NO_SELECTION
    return _select(instance, order, k + hit, 'III')


def algorithm1(instance: SecretaryInstance, order: ArrivalOrder, params: SecretaryParams) -> SelectionOutcome:
    """
    Three-phase secretary with a predicted maximum p* and confidence lambda.

    Phase I observes, Phase II accepts the first value above
    max(best observed, p* - lambda), compared by rank once the best
    observed value reaches p* - lambda; Phase III falls back to the best value
    seen in Phases I and II.
    """
    n = instance.n
    lo, hi = _boundaries(n, params.c)
    idx = order.as_indices()
    values = instance.value_array()[idx]
    ranks = instance.rank_array()[idx]
    floor_value = params.p_star - params.lam

    if hi > lo:
        window = slice(lo, hi)
        if lo > 0 and values[:lo].max() >= floor_value:
            hit = _first(ranks[window] > ranks[:lo].max())
        else:
            hit = _first(values[window] > max(0.0, floor_value))
        if hit is not None:
            return _select(instance, order, lo + hit, 'II')

    if hi > 0:
        hit = _first(ranks[hi:] > ranks[:hi].max())
    else:
        hit = _first(values > 0.0)
    if hit is None:
        return NO_SELECTION
    return _select(instance, order, hi + hit, 'III')


def g_secretary(eta: float, params: SecretaryParams, opt_value: float) -> float:
    """Guaranteed ratio: max{1/(ce), f(c) max{1 - (lambda+eta)/OPT, 0}} if eta < lambda, else 1/(ce)."""
    if eta < 0:
        raise DomainError(f'eta must be non-negative, got {eta}')
    if opt_value <= 0:
        raise DomainError(f'OPT must be positive, got {opt_value}')
    worst = 1.0 / (params.c * math.e)
    if eta >= params.lam:
        return worst
    good = f_of_c(params.c) * max(1.0 - (params.lam + eta) / opt_value, 0.0)
    return max(worst, good)


class LambdaDistribution(BaseModel):
    """
    Distribution of the confidence parameter, always supported on [0, p*].

    point(value), uniform(low, high), or normal(mean, variance) truncated
    to [0, p*] and renormalised.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal['point', 'uniform', 'normal']
    value: float = 0.0
    low: float = 0.0
    high: float = 0.0
    mean: float = 0.0
    variance: float = 1.0

    @model_validator(mode='after')
    def check_parameters(self):
        if self.kind == 'point' and self.value < 0:
            raise ValueError('point mass must be non-negative')
        if self.kind == 'uniform' and not 0.0 <= self.low < self.high:
            raise ValueError('uniform needs 0 <= low < high')
        if self.kind == 'normal' and self.variance <= 0:
            raise ValueError('normal needs a positive variance')
        return self

    @classmethod
    def point(cls, value: float) -> 'LambdaDistribution':
        return cls(kind='point', value=value)

    @classmethod
    def uniform(cls, low: float, high: float) -> 'LambdaDistribution':
        return cls(kind='uniform', low=low, high=high)

    @classmethod
    def normal(cls, mean: float, variance: float) -> 'LambdaDistribution':
        return cls(kind='normal', mean=mean, variance=variance)

    def check_support(self, p_star: float) -> None:
        if self.kind == 'point' and self.value > p_star:
            raise InfeasibleParametersError(f'point mass {self.value} exceeds p* {p_star}')
        if self.kind == 'uniform' and self.high > p_star:
            raise InfeasibleParametersError(f'uniform support ({self.low}, {self.high}) exceeds p* {p_star}')
        if self.kind == 'normal' and p_star <= 0:
            raise InfeasibleParametersError('a truncated normal needs p* > 0')

    def frozen(self, p_star: float):
        """The scipy distribution, or None for a point mass."""
        self.check_support(p_star)
        if self.kind == 'uniform':
            return stats.uniform(loc=self.low, scale=self.high - self.low)
        elif self.kind == 'normal':
            sd = math.sqrt(self.variance)
            a, b = (0.0 - self.mean) / sd, (p_star - self.mean) / sd
            return stats.truncnorm(a, b, loc=self.mean, scale=sd)
        return None

    def sample(self, rng: np.random.Generator, p_star: float) -> float:
        dist = self.frozen(p_star)
        if dist is None:
            return self.value
        return float(np.clip(dist.rvs(random_state=rng), 0.0, p_star))

    def pdf(self, x: float, p_star: float) -> float:
        dist = self.frozen(p_star)
        if dist is None:
            raise DomainError('a point mass has no density')
        return float(dist.pdf(x))

    def cdf(self, x: float, p_star: float) -> float:
        dist = self.frozen(p_star)
        if dist is None:
            return 1.0 if x >= self.value else 0.0
        return float(dist.cdf(x))

    def breakpoints(self, p_star: float) -> List[float]:
        if self.kind == 'point':
            return [self.value]
        elif self.kind == 'uniform':
            return [self.low, self.high]
        return [min(max(self.mean, 0.0), p_star)]


def algorithm1_random_lambda(instance: SecretaryInstance, order: ArrivalOrder, c: float, p_star: float,
                             distribution: LambdaDistribution, rng: np.random.Generator) -> SelectionOutcome:
    """Draw lambda once from the distribution, then run algorithm1."""
    lam = distribution.sample(rng, p_star)
    return algorithm1(instance, order, SecretaryParams(c=c, lam=lam, p_star=p_star))


Density = Union[LambdaDistribution, Callable[[float], float]]


def expected_ratio_random_lambda(eta: float, c: float, p_star: float, opt: float, density: Density) -> float:
    """
    Pr[lambda <= eta]/(ce) + f(c) * integral_eta^p* h(x)(1 - (x+eta)/OPT) dx.

    The integrand is clamped at 0 where x + eta exceeds OPT. `density`
    is a LambdaDistribution or a plain density function on [0, p*].
    """
    if opt <= 0:
        raise DomainError(f'OPT must be positive, got {opt}')
    if eta < 0:
        raise DomainError(f'eta must be non-negative, got {eta}')
    worst = 1.0 / (c * math.e)
    f = f_of_c(c)
    gain = lambda x: max(1.0 - (x + eta) / opt, 0.0)

    if isinstance(density, LambdaDistribution):
        density.check_support(p_star)
        if density.kind == 'point':
            if density.value <= eta:
                return worst
            return f * gain(density.value)
        h = lambda x: density.pdf(x, p_star)
        points = density.breakpoints(p_star) + [opt - eta]
    else:
        h = density
        total, _ = quad(h, 0.0, p_star, limit=200, epsabs=1e-10, epsrel=1e-9)
        if abs(total - 1.0) > 1e-6:
            raise InfeasibleParametersError(f'density integrates to {total}, not 1')
        points = [opt - eta]

    below = 0.0
    if eta > 0:
        cut = min(eta, p_star)
        inside = [p for p in points if 0.0 < p < cut]
        below, _ = quad(h, 0.0, cut, points=inside or None, limit=200, epsabs=1e-10, epsrel=1e-9)
    if eta >= p_star:
        return below * worst

    interior = [p for p in points if eta < p < p_star]
    above, _ = quad(lambda x: h(x) * gain(x), eta, p_star,
                    points=interior or None, limit=200, epsabs=1e-10, epsrel=1e-9)
    return below * worst + f * above


def naive_randomized(instance: SecretaryInstance, order: ArrivalOrder, gamma: float,
                     p_star: float, lam: float, coin: float) -> SelectionOutcome:
    """
    With probability gamma (coin < gamma) run the classical rule, otherwise
    take the first element whose value reaches p* - lambda.
    """
    if not 0.0 <= gamma <= 1.0:
        raise InfeasibleParametersError(f'gamma must lie in [0, 1], got {gamma}')
    if coin < gamma:
        return classical_secretary(instance, order, INV_E)

    values = instance.value_array()[order.as_indices()]
    hit = _first(values >= p_star - lam)
    if hit is None:
        return NO_SELECTION
    return _select(instance, order, hit, 'II')


def naive_randomized_bound(eta: float, gamma: float, lam: float, opt: float) -> float:
    """gamma/e + (1-gamma) max{1 - (lambda+eta)/OPT, 0}; the greedy half only counts when eta <= lambda."""
    if opt <= 0:
        raise DomainError(f'OPT must be positive, got {opt}')
    classical = gamma * INV_E
    if eta > lam:
        return classical
    return classical + (1.0 - gamma) * max(1.0 - (lam + eta) / opt, 0.0)


def naive_crossover(delta: float) -> float:
    """c where f(c)(1-delta) meets 1/(ce) + (1-1/c)(1-delta), the naive rule at gamma = 1/c."""
    if not 0.0 <= delta < 1.0:
        raise DomainError(f'delta must lie in [0, 1), got {delta}')

    def gap(c):
        return f_of_c(c) * (1.0 - delta) - (1.0 / (c * math.e) + (1.0 - 1.0 / c) * (1.0 - delta))

    lo, hi = 1.0, 1e3
    if gap(hi) <= 0.0:
        raise DomainError(f'no crossover for delta={delta}')
    return brentq(gap, lo, hi, xtol=1e-12)


def exact_expected_value(instance: SecretaryInstance,
                         algorithm: Callable[[SecretaryInstance, ArrivalOrder], SelectionOutcome]) -> float:
    """Average selected value over all n! arrival orders."""
    n = instance.n
    if n > EXACT_ORACLE_LIMIT:
        raise OracleSizeError(f'exact enumeration supports n <= {EXACT_ORACLE_LIMIT}, got {n}')
    total = 0.0
    count = 0
    for permutation in itertools.permutations(range(1, n + 1)):
        total += algorithm(instance, ArrivalOrder(ids=permutation)).value
        count += 1
    return total / count
