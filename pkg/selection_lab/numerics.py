"""
Lambert-W branches and the closed-form quantities built on them.

The two real branches of W on [-1/e, 0) give the phase fractions of the
value-maximization secretary algorithm: the observation window ends at
exp(W_-1(-1/(ce))) and the prediction window at exp(W_0(-1/(ce))).
Everything here is pure and stateless.
"""
import math
from fractions import Fraction

from pydantic import BaseModel, ConfigDict, model_validator
from scipy.optimize import brentq

from selection_lab.errors import DomainError

INV_E = math.exp(-1.0)
BRANCH_POINT = -INV_E
# Inputs this close to -1/e are treated as the branch point itself.
BRANCH_TOLERANCE = 1e-12


class PhaseFractions(BaseModel):
    """The two roots of -x ln x = 1/(ce), low <= 1/e <= high."""

    model_config = ConfigDict(frozen=True)

    low: float
    high: float

    @model_validator(mode='after')
    def check_order(self):
        if not 0.0 < self.low <= INV_E + 1e-12:
            raise ValueError(f'low fraction {self.low} outside (0, 1/e]')
        if not INV_E - 1e-12 <= self.high < 1.0:
            raise ValueError(f'high fraction {self.high} outside [1/e, 1)')
        return self

    @property
    def width(self) -> float:
        return self.high - self.low


def _check_w_domain(x: float) -> None:
    if math.isnan(x) or x < BRANCH_POINT - BRANCH_TOLERANCE or x >= 0.0:
        raise DomainError(f"Lambert W argument {x} outside [-1/e, 0)")


def _bisect(g, lo: float, hi: float) -> float:
    """Bisection on a sign change of g over [lo, hi] down to float resolution."""
    g_lo = g(lo)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        g_mid = g(mid)
        if g_mid == 0.0:
            return mid
        if (g_mid > 0.0) == (g_lo > 0.0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _newton_polish(y: float, x: float, steps: int = 3) -> float:
    """A few guarded Newton steps on y e^y - x; a step is kept only if it helps."""
    residual = abs(y * math.exp(y) - x)
    for _ in range(steps):
        slope = math.exp(y) * (1.0 + y)
        if slope == 0.0:
            break
        candidate = y - (y * math.exp(y) - x) / slope
        candidate_residual = abs(candidate * math.exp(candidate) - x)
        if candidate_residual >= residual:
            break
        y, residual = candidate, candidate_residual
    return y


def lambert_w0(x: float) -> float:
    """Principal branch W_0 on [-1/e, 0); returns y in [-1, 0)."""
    _check_w_domain(x)
    if abs(x - BRANCH_POINT) <= BRANCH_TOLERANCE:
        return -1.0
    y = _bisect(lambda y: y * math.exp(y) - x, -1.0, 0.0)
    y = _newton_polish(y, x)
    return min(max(y, -1.0), -math.ulp(0.0))


def lambert_w_minus1(x: float) -> float:
    """Lower branch W_-1 on [-1/e, 0); returns y <= -1."""
    _check_w_domain(x)
    if abs(x - BRANCH_POINT) <= BRANCH_TOLERANCE:
        return -1.0
    g = lambda y: y * math.exp(y) - x
    lo = -2.0
    # y e^y -> 0- as y -> -inf, so walk left until g(lo) > 0.
    while g(lo) <= 0.0:
        lo *= 2.0
        if lo < -1e4:
            raise DomainError(f"could not bracket W_-1({x})")
    y = _bisect(g, lo, -1.0)
    y = _newton_polish(y, x)
    return min(y, -1.0)


def _check_c(c: float) -> None:
    if math.isnan(c) or c < 1.0:
        raise DomainError(f"c must be >= 1, got {c}")


def phase_fractions(c: float) -> PhaseFractions:
    """
    Solve -x ln x = 1/(ce) on (0, 1/e] and [1/e, 1) by bisection.

    This is equal to (exp(W_-1(-1/(ce))), exp(W_0(-1/(ce)))); the direct
    route avoids composing exp with a root found near the branch point.
    """
    _check_c(c)
    target = 1.0 / (c * math.e)
    if c == 1.0 or abs(target - INV_E) <= BRANCH_TOLERANCE:
        return PhaseFractions(low=INV_E, high=INV_E)

    h = lambda x: -x * math.log(x) - target
    low = _bisect(h, math.ulp(0.0), INV_E)
    high = _bisect(h, INV_E, 1.0)
    return PhaseFractions(low=low, high=high)


def f_of_c(c: float) -> float:
    """Probability that the maximum lands in the prediction window: high - low."""
    return phase_fractions(c).width


def partial_fraction_sum(n: int, k: int) -> Fraction:
    """sum_{l=n}^{n+k} 1/(l(l+1)) = (k+1) / (n(n+k+1))."""
    if n < 1 or k < 0:
        raise DomainError(f"need n >= 1 and k >= 0, got n={n}, k={k}")
    return Fraction(k + 1, n * (n + k + 1))


def graphic_bound_f(c: float, n: int) -> float:
    """
    (1/n) * sum_{l=k}^{n-1} (k-1)k / ((l-1)l) with k = floor(n/c).

    The telescoping sum equals (k/n)(n-k)/(n-1); it tends to (c-1)/c^2,
    which peaks at 1/4 for c = 2.
    """
    if c <= 1.0:
        raise DomainError(f"c must be > 1, got {c}")
    k = int(math.floor(n / c))
    if k < 2 or n < 3:
        raise DomainError(f"need floor(n/c) >= 2, got n={n}, c={c}")
    # sum_{l=k}^{n-1} 1/((l-1)l) = sum_{j=k-1}^{n-2} 1/(j(j+1))
    inner = partial_fraction_sum(k - 1, n - 1 - k)
    return float(Fraction(k * (k - 1), n) * inner)


def graphic_bound_f_printed(c: float, n: int) -> float:
    """The closed form (k/n)[(n-1)/(n-2) - k/(n-2)]; same limit as graphic_bound_f."""
    if c <= 1.0:
        raise DomainError(f"c must be > 1, got {c}")
    k = int(math.floor(n / c))
    if k < 2 or n < 3:
        raise DomainError(f"need floor(n/c) >= 2, got n={n}, c={c}")
    return (k / n) * ((n - 1) / (n - 2) - k / (n - 2))


def improvement_threshold(delta: float) -> float:
    """Smallest c with f(c)(1 - delta) = 1/e, i.e. where predictions start to pay off."""
    if not 0.0 <= delta < 1.0 - INV_E:
        raise DomainError(f"delta must lie in [0, 1 - 1/e), got {delta}")
    return brentq(lambda c: f_of_c(c) * (1.0 - delta) - INV_E, 1.0, 1e4, xtol=1e-12)
