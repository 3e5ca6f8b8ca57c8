import itertools
import math

import numpy as np
import pytest
from pydantic import ValidationError

from selection_lab.errors import DomainError, InfeasibleParametersError, OracleSizeError
from selection_lab.graphic_online import (
    GraphicParams,
    OrientedSelection,
    algorithm4,
    algorithm5,
    algorithm5_trace,
    build_element_vertex_graph,
    exact_pair_unmatched_probability,
    g_graphic,
    heaviest_incident_element,
    pair_unmatched_probability,
    phase_two_proxy_bound,
)
from selection_lab.instances import (
    ArrivalOrder,
    ErrorModel,
    GraphInstance,
    make_predictions,
    random_graph_instance,
    random_tree_instance,
    sample_arrival_order,
)
from selection_lab.offline_oracles import assigned_column, max_weight_forest
from selection_lab.utils import is_forest, trial_rng

PATH = GraphInstance(vertex_count=4, edges=((1, 2, 1.0), (2, 3, 2.0), (3, 4, 3.0)), connected=True)


def exact_graphic_params(instance, c, d, lam=0.0):
    predictions = make_predictions(instance, ErrorModel(kind='exact'))
    return GraphicParams(c=c, d=d, lam=lam, predictions=predictions)


def assert_valid(selection: OrientedSelection):
    degrees = selection.in_degrees()
    assert all(k <= 1 for k in degrees.values())
    assert is_forest(selection.directed_edges())
    selection.to_forest()


def test_element_vertex_graph_shapes(triangle):
    single = build_element_vertex_graph(GraphInstance(vertex_count=2, edges=((1, 2, 4.0),)))
    assert single.element_count == 1 and single.link_count() == 2
    b = build_element_vertex_graph(triangle)
    assert b.element_count == 3 and b.link_count() == 6
    for e in range(1, 4):
        assert b.vertices_of(e) == triangle.endpoints(e)


def test_element_vertex_graph_on_random_graph(rng):
    graph = random_graph_instance(10, 0.4, rng)
    b = build_element_vertex_graph(graph)
    assert b.link_count() == 2 * graph.edge_count
    for e, x, w in b.links:
        assert x in graph.endpoints(e) and w == graph.weight(e)


def test_oriented_selection_rejects_double_head():
    with pytest.raises(ValidationError):
        OrientedSelection(pairs=((1, 1, 2, 1.0, 'II'), (2, 3, 2, 1.0, 'II')))


def test_oriented_selection_rejects_cycle():
    with pytest.raises(ValidationError):
        OrientedSelection(pairs=((1, 1, 2, 1.0, 'II'), (2, 2, 3, 1.0, 'II'), (3, 3, 1, 1.0, 'III')))


def test_algorithm4_preconditions(triangle):
    with pytest.raises(InfeasibleParametersError):
        algorithm4(triangle, ArrivalOrder(ids=(1, 2, 3)), c=1.0)
    with pytest.raises(InfeasibleParametersError):
        algorithm4(GraphInstance(vertex_count=2, edges=((1, 2, 1.0),)), ArrivalOrder(ids=(1,)), c=2.0)


def test_algorithm4_triangle_every_order(triangle):
    total = 0.0
    for permutation in itertools.permutations((1, 2, 3)):
        selection = algorithm4(triangle, ArrivalOrder(ids=permutation), c=2.0)
        assert_valid(selection)
        # the observed element is never taken
        assert permutation[0] not in selection.elements()
        assert selection.total_weight <= max_weight_forest(triangle).total_weight
        total += selection.total_weight
    assert 0.0 < total / 6 <= 5.0


def test_algorithm4_on_star():
    star = GraphInstance(vertex_count=5, edges=tuple((1, x, float(x)) for x in range(2, 6)), connected=True)
    rng = np.random.default_rng(5)
    for _ in range(24):
        selection = algorithm4(star, sample_arrival_order(4, rng), c=2.0)
        assert_valid(selection)
        assert all(p == 'III' for *_, p in selection.pairs)


@pytest.mark.parametrize('seed', range(10))
def test_algorithm4_random_graphs_stay_forests(seed):
    rng = trial_rng(600, seed)
    graph = random_graph_instance(9, 0.5, rng)
    for _ in range(5):
        assert_valid(algorithm4(graph, sample_arrival_order(graph.edge_count, rng), c=2.0))


def test_algorithm5_path_trace():
    params = exact_graphic_params(PATH, c=3.0, d=1.0)
    trace = algorithm5_trace(PATH, ArrivalOrder(ids=(1, 2, 3)), params)
    assert trace.phase_two_start == 1 and trace.phase_three_start == 3
    assert trace.thresholds.of(1) == 1.0 and trace.thresholds.of(3) == 0.0
    # e2 goes to vertex 2 (3 is not eligible), e3 ties between 3 and 4 and goes to 3
    assert trace.selection.pairs == ((2, 3, 2, 2.0, 'II'), (3, 4, 3, 3.0, 'II'))


def test_algorithm5_with_zero_predictions_uses_observed_thresholds():
    zeros = make_predictions(PATH, ErrorModel(kind='exact'))
    zeros = zeros.model_copy(update={'values': {v: 0.0 for v in range(1, 5)}})
    params = GraphicParams(c=3.0, d=1.0, lam=0.0, predictions=zeros)
    # observing e3 (w=3) sets t_3 = t_4 = 3, so e2 can only go to vertex 2, which leaves vertex 1 for e1
    selection = algorithm5(PATH, ArrivalOrder(ids=(3, 2, 1)), params)
    assert selection.pairs[0] == (2, 3, 2, 2.0, 'II')
    assert selection.pairs[1] == (1, 2, 1, 1.0, 'II')


@pytest.mark.parametrize('seed', range(8))
def test_phase_two_commits_meet_their_floor(seed):
    rng = trial_rng(700, seed)
    graph = random_graph_instance(8, 0.5, rng)
    params = exact_graphic_params(graph, c=4.0, d=2.0, lam=0.0)
    for _ in range(5):
        trace = algorithm5_trace(graph, sample_arrival_order(graph.edge_count, rng), params)
        assert_valid(trace.selection)
        for _, _, head, w, phase in trace.selection.pairs:
            if phase == 'II':
                assert w >= max(trace.thresholds.of(head), params.floor_of(head))


@pytest.mark.parametrize('seed', range(6))
def test_phase_three_matches_over_every_arrival(seed):
    # phase II elements stay in the matching problem of later arrivals
    rng = trial_rng(750, seed)
    graph = random_graph_instance(8, 0.5, rng)
    params = exact_graphic_params(graph, c=4.0, d=2.0, lam=0.0)
    matrix = graph.incidence_matrix()
    for _ in range(5):
        order = sample_arrival_order(graph.edge_count, rng)
        for element, _, head, _, phase in algorithm5(graph, order, params).pairs:
            if phase == 'III':
                position = order.ids.index(element)
                assert assigned_column(matrix, order.ids[:position + 1], element) + 1 == head


def test_heaviest_incident_element(triangle):
    assert heaviest_incident_element(triangle) == {1: 1, 2: 1, 3: 2}
    tie = GraphInstance(vertex_count=3, edges=((1, 2, 1.0), (2, 3, 1.0)))
    assert heaviest_incident_element(tie)[2] == 1


def test_proxy_bound_on_path_every_order():
    params = exact_graphic_params(PATH, c=3.0, d=1.0)
    for permutation in itertools.permutations((1, 2, 3)):
        bound = phase_two_proxy_bound(PATH, ArrivalOrder(ids=permutation), params)
        assert bound.phase_two_weight >= bound.proxy - 1e-9


@pytest.mark.parametrize('seed', range(6))
def test_proxy_bound_on_small_trees(seed):
    rng = trial_rng(800, seed)
    tree = random_tree_instance(6, rng)
    params = exact_graphic_params(tree, c=5.0, d=1.25, lam=0.0)
    for permutation in itertools.permutations(range(1, tree.edge_count + 1)):
        bound = phase_two_proxy_bound(tree, ArrivalOrder(ids=permutation), params)
        assert bound.phase_two_weight >= bound.proxy - 1e-9


def test_g_graphic_branches():
    assert g_graphic(1.0, 4.0, 2.0, 0.5, 10.0, 5) == pytest.approx(1.0 / 16.0)
    # eta >= lambda falls back to (d - 1) / c^2 even when both are zero
    assert g_graphic(0.0, 2.0, 1.0, 0.0, 10.0, 5) == 0.0
    assert g_graphic(0.0, 2.0, 1.0, 0.01, 10.0, 5) == pytest.approx(0.25 * 0.99)
    assert g_graphic(0.0, 1e6, 1.0, 1e-9, 10.0, 5) == pytest.approx(0.5, abs=1e-5)
    # a large lambda wipes out the prediction term
    assert g_graphic(0.0, 2.0, 1.0, 1.0, 10.0, 5) == 0.0
    with pytest.raises(DomainError):
        g_graphic(0.0, 1.0, 1.0, 0.0, 1.0, 1)


def test_pair_probability_without_phase_two(triangle):
    assert exact_pair_unmatched_probability(triangle, 1, 2, 2.0, 2.0) == 1.0
    estimate = pair_unmatched_probability(triangle, 1, 2, 2.0, 2.0, 10, np.random.default_rng(0))
    assert estimate.frequency == 1.0
    with pytest.raises(InfeasibleParametersError):
        pair_unmatched_probability(triangle, 1, 1, 4.0, 2.0, 10, np.random.default_rng(0))


def test_exact_pair_probability_agrees_with_sampling():
    square = GraphInstance(vertex_count=4, edges=((1, 2, 1.0), (2, 3, 4.0), (3, 4, 2.0), (1, 4, 3.0)),
                           connected=True)
    exact = exact_pair_unmatched_probability(square, 1, 3, 4.0, 1.0)
    rng = np.random.default_rng(12)
    estimate = pair_unmatched_probability(square, 1, 3, 4.0, 1.0, 4000, rng)
    assert abs(estimate.frequency - exact) <= 5 * math.sqrt(max(exact * (1 - exact), 1e-4) / 4000)


def test_exact_pair_probability_size_limit(rng):
    graph = random_graph_instance(8, 0.9, rng)
    with pytest.raises(OracleSizeError):
        exact_pair_unmatched_probability(graph, 1, 2, 4.0, 2.0)


@pytest.mark.slow
def test_algorithm4_ratio_reaches_a_quarter():
    rng = np.random.default_rng(13)
    ratios = []
    for _ in range(200):
        graph = random_graph_instance(20, 0.25, rng)
        opt = max_weight_forest(graph).total_weight
        ratios.append(algorithm4(graph, sample_arrival_order(graph.edge_count, rng), c=2.0).total_weight / opt)
    ratios = np.asarray(ratios)
    stderr = ratios.std(ddof=1) / math.sqrt(ratios.size)
    assert ratios.mean() >= 0.25 - 0.03 - 3 * stderr


@pytest.mark.slow
def test_pair_probability_lower_bound():
    rng = np.random.default_rng(14)
    graph = random_graph_instance(40, 0.25, rng)
    m = graph.edge_count
    estimate = pair_unmatched_probability(graph, 1, 2, 4.0, 2.0, 2000, rng)
    bound = (2 / 4) ** 2 * (1 - 4 / m) / (1 - 2 / m)
    assert estimate.frequency >= bound - 3 * estimate.stderr - 0.02


def algorithm5_ratios(predictions_for, trials, rng, c=4.0, d=2.0):
    ratios, bounds = [], []
    for _ in range(trials):
        graph = random_graph_instance(30, 0.25, rng)
        opt = max_weight_forest(graph).total_weight
        predictions, lam = predictions_for(graph)
        params = GraphicParams(c=c, d=d, lam=lam, predictions=predictions)
        selection = algorithm5(graph, sample_arrival_order(graph.edge_count, rng), params)
        ratios.append(selection.total_weight / opt)
        bounds.append(g_graphic(predictions.declared_eta, c, d, lam, opt, graph.vertex_count))
    ratios = np.asarray(ratios)
    return ratios.mean(), ratios.std(ddof=1) / math.sqrt(ratios.size), float(np.mean(bounds))


@pytest.mark.slow
def test_algorithm5_with_good_predictions():
    def predictions_for(graph):
        predictions = make_predictions(graph, ErrorModel(kind='exact'))
        return predictions, 0.002 * predictions.min_value()

    mean, stderr, bound = algorithm5_ratios(predictions_for, 300, np.random.default_rng(15))
    assert bound > 1.0 / 16.0
    assert mean >= bound - 3 * stderr - 0.03


@pytest.mark.slow
def test_algorithm5_with_wrong_predictions():
    def predictions_for(graph):
        return make_predictions(graph, ErrorModel(kind='adversarial_sign', magnitude=0.5, seed=3)), 0.0

    mean, stderr, bound = algorithm5_ratios(predictions_for, 300, np.random.default_rng(16))
    assert bound == pytest.approx(1.0 / 16.0)
    assert mean >= bound - 3 * stderr - 0.03
