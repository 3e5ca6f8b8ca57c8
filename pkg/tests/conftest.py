import numpy as np
import pytest

from selection_lab.instances import BipartiteInstance, GraphInstance, SecretaryInstance


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def triangle():
    """Triangle 1-2-3 with weights 3, 2, 1 on edges 1, 2, 3."""
    return GraphInstance(vertex_count=3, edges=((1, 2, 3.0), (2, 3, 2.0), (1, 3, 1.0)), connected=True)


@pytest.fixture
def diagonal_bipartite():
    return BipartiteInstance(
        left_count=2,
        right_count=2,
        weights={(1, 1): 3.0, (1, 2): 1.0, (2, 1): 1.0, (2, 2): 3.0},
    )


@pytest.fixture
def small_secretary():
    return SecretaryInstance(values=(3.0, 7.0, 2.0))

