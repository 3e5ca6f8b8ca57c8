"""
Per-problem trial runners.

A runner turns a grid cell into prepared instances (instance, OPT,
predictions, parameters and the theoretical bound) and runs single
trials against them. Preparation and trials draw from separate rng
streams so a cell reproduces independently of scheduling.
"""
import logging
import math
from typing import Any, Dict, Optional, Type

import numpy as np
from pydantic import BaseModel, ConfigDict

from selection_lab.bipartite_online import (
    BipartiteParams, algorithm3, g_bipartite, kesselheim_baseline, kesselheim_bound, reduce_to_vertex_weighted,
)
from selection_lab.errors import InfeasibleParametersError, InvariantViolation
from selection_lab.graphic_online import GraphicParams, algorithm4, algorithm5, g_graphic
from selection_lab.harness.models import RATIO_TOLERANCE, Cell, ExperimentConfig
from selection_lab.instances import (
    ErrorModel, PredictionVector, WeightDistribution, augment_perfect, make_predictions, prediction_targets,
    random_bipartite_instance, random_graph_instance, random_secretary_instance, random_tree_instance,
    sample_arrival_order,
)
from selection_lab.numerics import INV_E, graphic_bound_f
from selection_lab.offline_oracles import max_weight_forest, max_weight_matching, secretary_opt
from selection_lab.secretary import (
    LambdaDistribution, SecretaryParams, algorithm1, algorithm1_random_lambda, classical_secretary,
    expected_ratio_random_lambda, g_secretary, naive_randomized, naive_randomized_bound,
)
from selection_lab.truthful import MechanismParams, UnitDemandInstance, optimal_welfare, run_mechanism, social_welfare

logger = logging.getLogger(__name__)


class PreparedInstance(BaseModel):
    """
    Everything a trial needs; `bound` is the g-value for this instance.

    `relative_lam` and `relative_eta` are lambda and eta in OPT units
    (see relative_to_opt); together with `arrivals` they are what a
    result row reports.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    instance: Any
    opt: float
    lam: float
    eta: float
    arrivals: int
    relative_lam: float
    relative_eta: float
    bound: float
    params: Any = None
    predictions: PredictionVector


def ratio(value: float, opt: float) -> float:
    """ALG / OPT with the vacuous instance (OPT = 0) counted as 1."""
    if opt <= 0:
        return 1.0
    r = value / opt
    if r > 1.0 + RATIO_TOLERANCE:
        raise InvariantViolation(f'online value {value} exceeds the offline optimum {opt}')
    return r


def relative_to_opt(x: float, scale: float, opt: float) -> float:
    """
    x * scale / OPT, zero on a vacuous instance.

    scale is 1 for the secretary, |psi| for matchings and |V| for graphs,
    so the g-evaluators at OPT = 1 reproduce their value on the instance.
    """
    if opt <= 0:
        return 0.0
    return x * scale / opt


def row_bound(problem: str, algorithm: str, n: int, c: float, d: float, lam: float, eta: float) -> Optional[float]:
    """
    Guarantee of a result row from its own columns.

    lam and eta are relative_to_opt values and n the number of arrivals.
    None for the randomised secretary variants, whose bounds also depend
    on p* and the mixing weight.
    """
    if problem == 'secretary':
        if algorithm == 'classical':
            return INV_E
        if algorithm == 'algorithm1':
            return g_secretary(eta, SecretaryParams(c=c, lam=lam, p_star=lam), 1.0)
        return None
    if problem == 'graphic':
        if algorithm == 'algorithm4':
            return graphic_bound_f(c, n) if math.floor(n / c) >= 2 else 0.0
        return g_graphic(eta, c, d, lam, 1.0, 1)
    if algorithm == 'kesselheim':
        return kesselheim_bound(c, d, n)
    if algorithm == 'reduction':
        return 0.0
    return g_bipartite(eta, c, d, lam, 1.0, 1)


def _error_model(config: ExperimentConfig, eta: float, rng: np.random.Generator, integer: bool = False) -> ErrorModel:
    kind = 'exact' if eta == 0 else config.error_kind
    return ErrorModel(kind=kind, magnitude=eta, seed=int(rng.integers(2**63)), integer=integer)


def _clamped_lambda(lam: float, predictions: PredictionVector) -> float:
    ceiling = predictions.min_value()
    if lam > ceiling:
        logger.debug(f"Clamping lambda {lam} to the smallest prediction {ceiling}")
        return ceiling
    return lam


class ProblemRunner:
    problem: str = ''

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.algorithm = config.algorithm
        self.generator = config.generator

    @property
    def size(self) -> int:
        return self.generator.n

    def check_cell(self, cell: Cell):
        """Raise InfeasibleParametersError when the algorithm cannot run on this cell."""

    def prepare(self, cell: Cell, rng: np.random.Generator) -> PreparedInstance:
        raise NotImplementedError

    def run_trial(self, cell: Cell, prepared: PreparedInstance, rng: np.random.Generator) -> float:
        raise NotImplementedError


def _needs_c_above_d(cell: Cell):
    if not cell.c > cell.d:
        raise InfeasibleParametersError(f'needs c > d, got c={cell.c}, d={cell.d}')


class SecretaryRunner(ProblemRunner):
    problem = 'secretary'

    def check_cell(self, cell: Cell):
        if self.size < 2 and self.algorithm != 'naive':
            raise InfeasibleParametersError('secretary algorithms need n >= 2')

    def _distribution(self, lam: float, p_star: float) -> LambdaDistribution:
        spread = self.config.lambda_spread * lam
        if spread == 0:
            return LambdaDistribution.point(lam)
        return LambdaDistribution.uniform(max(lam - spread, 0.0), min(lam + spread, p_star))

    def _gamma(self, cell: Cell) -> float:
        return self.config.gamma if self.config.gamma is not None else 1.0 / cell.c

    def prepare(self, cell, rng):
        instance = random_secretary_instance(self.size, rng, self.generator.weights)
        opt_value, opt_id = secretary_opt(instance)
        eta = cell.eta_scale * opt_value
        predictions = make_predictions(instance, _error_model(self.config, eta, rng), (opt_value, opt_id))
        p_star = predictions.scalar
        lam = min(cell.lambda_scale * opt_value, p_star)
        eta = predictions.declared_eta
        params = SecretaryParams(c=cell.c, lam=lam, p_star=p_star)

        rel_lam, rel_eta = relative_to_opt(lam, 1.0, opt_value), relative_to_opt(eta, 1.0, opt_value)

        if self.algorithm in ('classical', 'algorithm1'):
            bound = row_bound(self.problem, self.algorithm, instance.n, cell.c, cell.d, rel_lam, rel_eta)
        elif opt_value <= 0:
            bound = 0.0
        elif self.algorithm == 'random_lambda':
            bound = expected_ratio_random_lambda(eta, cell.c, p_star, opt_value, self._distribution(lam, p_star))
        else:
            bound = naive_randomized_bound(eta, self._gamma(cell), lam, opt_value)

        return PreparedInstance(instance=instance, opt=opt_value, lam=lam, eta=eta, arrivals=instance.n,
                                relative_lam=rel_lam, relative_eta=rel_eta, bound=bound,
                                params=params, predictions=predictions)

    def run_trial(self, cell, prepared, rng):
        instance = prepared.instance
        order = sample_arrival_order(instance.n, rng)
        params = prepared.params
        if self.algorithm == 'classical':
            outcome = classical_secretary(instance, order)
        elif self.algorithm == 'algorithm1':
            outcome = algorithm1(instance, order, params)
        elif self.algorithm == 'random_lambda':
            distribution = self._distribution(params.lam, params.p_star)
            outcome = algorithm1_random_lambda(instance, order, params.c, params.p_star, distribution, rng)
        else:
            outcome = naive_randomized(instance, order, self._gamma(cell), params.p_star, params.lam, rng.random())
        return ratio(outcome.value, prepared.opt)


class BipartiteRunner(ProblemRunner):
    problem = 'bipartite'

    def check_cell(self, cell: Cell):
        if self.algorithm == 'algorithm3':
            _needs_c_above_d(cell)
        elif self.algorithm == 'kesselheim' and not cell.c >= cell.d:
            raise InfeasibleParametersError(f'needs c >= d, got c={cell.c}, d={cell.d}')

    def prepare(self, cell, rng):
        base = random_bipartite_instance(self.size, self.generator.right_count, rng,
                                         self.generator.weights, self.generator.density)
        optimum = max_weight_matching(base)
        reference = min(prediction_targets(base, optimum).values())
        eta = cell.eta_scale * reference
        predictions = make_predictions(base, _error_model(self.config, eta, rng), optimum)
        lam = _clamped_lambda(cell.lambda_scale * reference, predictions)
        eta = predictions.declared_eta
        opt_value = optimum.total_weight

        rel_lam = relative_to_opt(lam, optimum.size, opt_value)
        rel_eta = relative_to_opt(eta, optimum.size, opt_value)

        params = None
        if self.algorithm == 'algorithm3':
            params = BipartiteParams(c=cell.c, d=cell.d, lam=lam, predictions=predictions)
        bound = row_bound(self.problem, self.algorithm, base.left_count, cell.c, cell.d, rel_lam, rel_eta)

        return PreparedInstance(instance=augment_perfect(base), opt=opt_value, lam=lam, eta=eta,
                                arrivals=base.left_count, relative_lam=rel_lam, relative_eta=rel_eta,
                                bound=bound, params=params, predictions=predictions)

    def run_trial(self, cell, prepared, rng):
        instance = prepared.instance
        order = sample_arrival_order(instance.left_count, rng)
        if self.algorithm == 'kesselheim':
            matching = kesselheim_baseline(instance, order, cell.c, cell.d)
        elif self.algorithm == 'algorithm3':
            matching = algorithm3(instance, order, prepared.params)
        else:
            matching = reduce_to_vertex_weighted(instance, order, prepared.predictions, prepared.lam)
        return ratio(matching.total_weight, prepared.opt)


class GraphicRunner(ProblemRunner):
    problem = 'graphic'

    def check_cell(self, cell: Cell):
        if self.algorithm == 'algorithm5':
            _needs_c_above_d(cell)
        elif not cell.c > 1.0:
            raise InfeasibleParametersError(f'needs c > 1, got c={cell.c}')

    def _graph(self, rng):
        if self.generator.graph == 'tree':
            return random_tree_instance(self.size, rng, self.generator.weights)
        return random_graph_instance(self.size, self.generator.edge_probability, rng, self.generator.weights)

    def prepare(self, cell, rng):
        graph = self._graph(rng)
        opt_value = max_weight_forest(graph).total_weight
        reference = min(prediction_targets(graph).values())
        eta = cell.eta_scale * reference
        predictions = make_predictions(graph, _error_model(self.config, eta, rng))
        lam = _clamped_lambda(cell.lambda_scale * reference, predictions)
        eta = predictions.declared_eta

        rel_lam = relative_to_opt(lam, graph.vertex_count, opt_value)
        rel_eta = relative_to_opt(eta, graph.vertex_count, opt_value)
        m = graph.edge_count

        params = None
        if self.algorithm == 'algorithm4':
            if m < 2:
                raise InfeasibleParametersError('algorithm4 needs at least 2 edges')
        else:
            params = GraphicParams(c=cell.c, d=cell.d, lam=lam, predictions=predictions)
        bound = row_bound(self.problem, self.algorithm, m, cell.c, cell.d, rel_lam, rel_eta)

        return PreparedInstance(instance=graph, opt=opt_value, lam=lam, eta=eta, arrivals=m,
                                relative_lam=rel_lam, relative_eta=rel_eta, bound=bound,
                                params=params, predictions=predictions)

    def run_trial(self, cell, prepared, rng):
        graph = prepared.instance
        order = sample_arrival_order(graph.edge_count, rng)
        if self.algorithm == 'algorithm4':
            selection = algorithm4(graph, order, cell.c)
        else:
            selection = algorithm5(graph, order, prepared.params)
        return ratio(selection.total_weight, prepared.opt)


def random_unit_demand_instance(n: int, m: int, rng: np.random.Generator, weights: WeightDistribution,
                                density: float = 0.5) -> UnitDemandInstance:
    """Integer values from `weights`; each item is preferred with probability `density`."""
    if weights.kind != 'integer':
        weights = WeightDistribution(kind='integer', low=math.ceil(weights.low), high=math.floor(weights.high))
    values = tuple(int(v) for v in weights.sample(rng, n))
    preferred = tuple(
        tuple(int(r) + 1 for r in np.flatnonzero(rng.random(m) < density))
        for _ in range(n)
    )
    return UnitDemandInstance(item_count=m, values=values, preferred=preferred)


class TruthfulRunner(ProblemRunner):
    problem = 'truthful'

    def check_cell(self, cell: Cell):
        _needs_c_above_d(cell)

    def prepare(self, cell, rng):
        weights = self.generator.weights
        if weights.kind != 'integer':
            weights = WeightDistribution(kind='integer', low=1, high=20)
        instance = random_unit_demand_instance(self.size, self.generator.right_count, rng, weights,
                                               self.generator.density)
        graph = instance.to_bipartite(instance.values)
        optimum = max_weight_matching(graph)
        reference = min(prediction_targets(graph, optimum).values(), default=0.0)
        eta = float(round(cell.eta_scale * reference))
        predictions = make_predictions(graph, _error_model(self.config, eta, rng, integer=True), optimum)
        lam = int(_clamped_lambda(float(round(cell.lambda_scale * reference)), predictions))
        eta = predictions.declared_eta
        opt_value = optimal_welfare(instance)

        rel_lam = relative_to_opt(lam, optimum.size, opt_value)
        rel_eta = relative_to_opt(eta, optimum.size, opt_value)

        params = MechanismParams(c=cell.c, d=cell.d, lam=lam, predictions=predictions)
        bound = row_bound(self.problem, self.algorithm, instance.agent_count, cell.c, cell.d, rel_lam, rel_eta)
        return PreparedInstance(instance=instance, opt=opt_value, lam=lam, eta=eta, arrivals=instance.agent_count,
                                relative_lam=rel_lam, relative_eta=rel_eta, bound=bound,
                                params=params, predictions=predictions)

    def run_trial(self, cell, prepared, rng):
        instance = prepared.instance
        order = sample_arrival_order(instance.agent_count, rng)
        outcome = run_mechanism(instance, instance.values, order, prepared.params)
        return ratio(social_welfare(instance, outcome), prepared.opt)


RUNNERS: Dict[str, Type[ProblemRunner]] = {
    'secretary': SecretaryRunner,
    'bipartite': BipartiteRunner,
    'graphic': GraphicRunner,
    'truthful': TruthfulRunner,
}


def runner_for(config: ExperimentConfig) -> ProblemRunner:
    return RUNNERS[config.problem](config)
