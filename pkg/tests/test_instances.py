import itertools
from collections import Counter

import numpy as np
import pytest
from pydantic import ValidationError

from selection_lab.errors import InstanceParseError, InstanceValidationError
from selection_lab.instances import (
    ArrivalOrder,
    BipartiteInstance,
    ErrorModel,
    GraphInstance,
    SecretaryInstance,
    WeightDistribution,
    augment_perfect,
    make_predictions,
    parse_instance,
    prediction_targets,
    random_bipartite_instance,
    random_graph_instance,
    random_secretary_instance,
    random_tree_instance,
    sample_arrival_order,
    write_instance,
)
from selection_lab.offline_oracles import covers_subset, max_weight_matching, secretary_opt
from selection_lab.utils import trial_rng


def test_secretary_rejects_negative_and_empty():
    with pytest.raises(ValidationError):
        SecretaryInstance(values=(1.0, -2.0))
    with pytest.raises(ValidationError):
        SecretaryInstance(values=())


def test_rank_array_breaks_ties_by_smaller_id():
    instance = SecretaryInstance(values=(5.0, 5.0, 1.0))
    ranks = instance.rank_array()
    # element 1 beats element 2 on the tie
    assert ranks[0] > ranks[1] > ranks[2]


def test_cached_arrays_do_not_affect_equality():
    a = SecretaryInstance(values=(1.0, 2.0))
    b = SecretaryInstance(values=(1.0, 2.0))
    a.rank_array()
    assert a == b


def test_bipartite_structure_checks():
    with pytest.raises(ValidationError):
        BipartiteInstance(left_count=1, right_count=1, weights={(1, 2): 1.0})
    with pytest.raises(ValidationError):
        BipartiteInstance(left_count=1, right_count=1, weights={(1, 1): float('inf')})


def test_graph_rejects_self_loop_and_false_connectivity():
    with pytest.raises(ValidationError):
        GraphInstance(vertex_count=2, edges=((1, 1, 1.0),))
    with pytest.raises(ValidationError):
        GraphInstance(vertex_count=3, edges=((1, 2, 1.0),), connected=True)


def test_arrival_order_must_be_permutation():
    with pytest.raises(ValidationError):
        ArrivalOrder(ids=(1, 1, 3))
    assert ArrivalOrder(ids=(2, 1)).as_indices().tolist() == [1, 0]


def test_augment_empty_instance():
    instance = BipartiteInstance(left_count=2, right_count=0, weights={})
    augmented = augment_perfect(instance)
    assert augmented.right_count == 2
    assert augmented.dummy_of(1) == 1 and augmented.dummy_of(2) == 2
    assert max_weight_matching(augmented).total_weight == 0.0


def test_augment_keeps_opt():
    instance = BipartiteInstance(left_count=1, right_count=1, weights={(1, 1): 5.0})
    augmented = augment_perfect(instance)
    assert augmented.is_dummy(2) and not augmented.is_dummy(1)
    assert max_weight_matching(augmented).total_weight == 5.0
    assert augment_perfect(augmented) is augmented


@pytest.mark.parametrize('n', [2, 4, 6])
def test_augmented_instance_covers_every_subset(n):
    rng = trial_rng(7, n)
    augmented = augment_perfect(random_bipartite_instance(n, n, rng, density=0.3))
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(1, n + 1), size):
            assert covers_subset(augmented, subset)


def test_unaugmented_sparse_instance_can_fail_to_cover():
    instance = BipartiteInstance(left_count=2, right_count=1, weights={(1, 1): 1.0, (2, 1): 1.0})
    assert not covers_subset(instance, (1, 2))


def test_secretary_predictions(small_secretary):
    exact = make_predictions(small_secretary, ErrorModel(kind='exact'), secretary_opt(small_secretary))
    assert exact.scalar == 7.0 and exact.declared_eta == 0.0

    shifted = make_predictions(small_secretary, ErrorModel(kind='constant_shift', magnitude=1.0),
                               secretary_opt(small_secretary))
    assert shifted.scalar == 8.0 and shifted.declared_eta == 1.0


def test_graphic_targets_are_max_incident_weights(triangle):
    assert prediction_targets(triangle) == {1: 3.0, 2: 3.0, 3: 2.0}
    predictions = make_predictions(triangle, ErrorModel(kind='adversarial_sign', magnitude=0.5, seed=3))
    assert predictions.kind == 'graphic'
    assert predictions.declared_eta == pytest.approx(0.5)


def test_bipartite_targets_need_oracle(diagonal_bipartite):
    with pytest.raises(InstanceValidationError):
        prediction_targets(diagonal_bipartite)
    predictions = make_predictions(diagonal_bipartite, ErrorModel(kind='uniform_noise', magnitude=0.5, seed=1),
                                   max_weight_matching(diagonal_bipartite))
    assert predictions.eta_is_upper_bound
    assert predictions.declared_eta <= 0.5
    assert set(predictions.values) == {1, 2}


def test_negative_predictions_are_clamped():
    instance = SecretaryInstance(values=(0.2,))
    predictions = make_predictions(instance, ErrorModel(kind='uniform_noise', magnitude=5.0, seed=11),
                                   secretary_opt(instance))
    assert predictions.scalar >= 0.0
    assert predictions.declared_eta == pytest.approx(abs(predictions.scalar - 0.2))


def test_adversarial_sign_keeps_exact_magnitude():
    instance = random_secretary_instance(20, np.random.default_rng(0))
    for seed in range(20):
        predictions = make_predictions(instance, ErrorModel(kind='adversarial_sign', magnitude=0.3, seed=seed),
                                       secretary_opt(instance))
        assert predictions.declared_eta == pytest.approx(0.3)


def test_integer_error_model_needs_integral_magnitude():
    with pytest.raises(ValidationError):
        ErrorModel(kind='uniform_noise', magnitude=0.5, integer=True)


def test_arrival_order_basics():
    assert sample_arrival_order(1, np.random.default_rng(1)).ids == (1,)
    a = sample_arrival_order(3, np.random.default_rng(5))
    b = sample_arrival_order(3, np.random.default_rng(5))
    assert a == b
    with pytest.raises(InstanceValidationError):
        sample_arrival_order(0, np.random.default_rng(5))


@pytest.mark.slow
def test_arrival_orders_are_uniform():
    rng = np.random.default_rng(99)
    counts = Counter(sample_arrival_order(5, rng).ids for _ in range(60000))
    assert len(counts) == 120
    sigma = np.sqrt(60000 * (1 / 120) * (119 / 120))
    for count in counts.values():
        assert abs(count - 500) <= 5 * sigma


def test_generators_produce_valid_instances(rng):
    power = WeightDistribution(kind='power_law', low=1.0, high=2.0)
    assert random_secretary_instance(50, rng, power).n == 50
    complete = random_bipartite_instance(4, 3, rng)
    assert len(complete.weights) == 12
    graph = random_graph_instance(12, 0.3, rng)
    assert graph.connected
    tree = random_tree_instance(10, rng)
    assert tree.edge_count == 9 and tree.connected
    integers = WeightDistribution(kind='integer', low=0, high=3).sample(rng, 100)
    assert set(integers.tolist()) <= {0.0, 1.0, 2.0, 3.0}


def test_graph_generator_needs_two_vertices(rng):
    with pytest.raises(InstanceValidationError):
        random_graph_instance(1, 0.5, rng)


def test_parse_graph():
    graph = parse_instance("3\n1 2 1.5\n2 3 2.0", 'graph')
    assert graph.vertex_count == 3
    assert graph.edges == ((1, 2, 1.5), (2, 3, 2.0))
    assert graph.connected


def test_parse_skips_comments():
    instance = parse_instance("# values\n3\n\n7\n2\n", 'secretary')
    assert instance.values == (3.0, 7.0, 2.0)


def test_parse_rejects_negative_weight():
    with pytest.raises(InstanceValidationError):
        parse_instance("3\n1 2 -1", 'graph')


def test_parse_reports_line_number():
    with pytest.raises(InstanceParseError) as info:
        parse_instance("2 2\n1 1 3.0\n1 x 2.0\n", 'bipartite')
    assert info.value.line_number == 3
    with pytest.raises(InstanceParseError):
        parse_instance("2 2\n1 1 3.0\n1 1 2.0\n", 'bipartite')


def test_write_then_parse_random_instances(rng):
    graph = random_graph_instance(10, 0.4, rng)
    assert parse_instance(write_instance(graph), 'graph') == graph
    bipartite = random_bipartite_instance(10, 6, rng, density=0.5)
    assert parse_instance(write_instance(bipartite), 'bipartite') == bipartite
    secretary = random_secretary_instance(10, rng)
    assert parse_instance(write_instance(secretary), 'secretary') == secretary


def test_write_then_parse_keeps_flags(rng):
    augmented = augment_perfect(random_bipartite_instance(5, 3, rng, density=0.6))
    text = write_instance(augmented)
    assert text.splitlines()[0] == '5 8 3'
    back = parse_instance(text, 'bipartite')
    assert back == augmented
    assert back.augmented and back.dummy_of(2) == 5

    # connected graph stored without the flag
    path = GraphInstance(vertex_count=3, edges=((1, 2, 1.0), (2, 3, 2.0)), connected=False)
    assert parse_instance(write_instance(path), 'graph') == path
    assert parse_instance(write_instance(path.model_copy(update={'connected': True})), 'graph').connected


def test_parse_header_flags():
    assert not parse_instance("3 0\n1 2 1.5\n2 3 2.0", 'graph').connected
    assert parse_instance("3\n1 2 1.5\n2 3 2.0", 'graph').connected
    with pytest.raises(InstanceParseError):
        parse_instance("3 2\n1 2 1.5", 'graph')
    with pytest.raises(InstanceValidationError):
        # one left node needs one dummy: right_count must be base + 1
        parse_instance("1 3 1\n1 1 2.0\n1 2 0.0\n", 'bipartite')
    with pytest.raises(ValidationError):
        BipartiteInstance(left_count=1, right_count=1, weights={}, base_right_count=1)
