import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robusttree.bound import (
    adversarial_accuracy_bound,
    build_conflict_graph,
    epsilon_sweep,
    hopcroft_karp,
    max_matching,
    select_epsilons,
    write_sweep_csv,
)
from robusttree.data import AttackModel, Dataset
from conftest import xor4


def brute_matching(adj, n_right):
    """Largest matching by trying every subset of edges, biggest first."""
    edges = [(u, v) for u, vs in enumerate(adj) for v in vs]
    for size in range(min(len(adj), n_right), 0, -1):
        for subset in itertools.combinations(edges, size):
            if len({u for u, _ in subset}) == size and len({v for _, v in subset}) == size:
                return size
    return 0


def random_graph(rng, max_side=6):
    nl, nr = int(rng.integers(0, max_side + 1)), int(rng.integers(0, max_side + 1))
    dens = rng.random()
    return [sorted(v for v in range(nr) if rng.random() < dens) for _ in range(nl)], nr


def check_matching(adj, n_right, pair_left):
    used = [v for v in pair_left if v != -1]
    assert len(used) == len(set(used))
    for u, v in enumerate(pair_left):
        assert v == -1 or v in adj[u]


def test_hopcroft_karp_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        adj, nr = random_graph(rng)
        pl = hopcroft_karp(adj, nr)
        check_matching(adj, nr, pl)
        assert sum(v != -1 for v in pl) == brute_matching(adj, nr)


def test_hopcroft_karp_on_long_augmenting_paths():
    # a path graph needs augmenting paths through every vertex
    n = 2000
    adj = [[u] + ([u - 1] if u else []) for u in range(n)]
    pl = hopcroft_karp(adj, n)
    assert sum(v != -1 for v in pl) == n


def test_xor_bound_is_one():
    data, attack = xor4()
    assert adversarial_accuracy_bound(data, attack) == 1.0


def test_unit_radius_gives_majority_fraction():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = int(rng.integers(1, 20))
        data = Dataset(rng.random((n, 2)), rng.integers(0, 2, n))
        assert adversarial_accuracy_bound(data, AttackModel.from_epsilon(1.0, 2)) == data.majority_fraction()


def test_conflict_graph_edges_join_opposite_labels():
    data = Dataset(np.array([[0.1], [0.2], [0.9]]), np.array([0, 1, 1]))
    g = build_conflict_graph(data, AttackModel.from_epsilon(0.05, 1))
    assert g.edges == ((0, 1),)
    assert max_matching(g).pairs == ((0, 1),)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        adversarial_accuracy_bound(Dataset(np.zeros((0, 1)), np.zeros(0, dtype=int)), AttackModel.from_epsilon(0.1, 1))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_sweep_is_non_increasing(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 25))
    data = Dataset(rng.random((n, int(rng.integers(1, 4)))), rng.integers(0, 2, n))
    rows = epsilon_sweep(data, np.linspace(0, 1, 21))
    bounds = [b for _, b in rows]
    assert all(a >= b for a, b in zip(bounds, bounds[1:]))
    assert bounds[-1] == data.majority_fraction()


def test_sweep_flat_prefix_when_radius_has_no_effect():
    # classes far apart: small radii change nothing
    X = np.array([[0.0], [0.1], [0.9], [1.0], [0.5]])
    data = Dataset(X, np.array([0, 0, 1, 1, 1]))
    text = write_sweep_csv(epsilon_sweep(data, [0.0, 0.05, 0.1, 0.3]))
    lines = text.splitlines()
    assert lines[0] == "epsilon,bound"
    assert lines[1].split(",")[1] == lines[2].split(",")[1] == lines[3].split(",")[1] == "1.0"
    assert float(lines[4].split(",")[1]) < 1.0


def test_select_epsilons_hits_targets():
    rng = np.random.default_rng(2)
    X = rng.random((40, 2))
    y = (X[:, 0] + 0.2 * rng.random(40) > 0.6).astype(int)
    data = Dataset(X, y)
    choices = select_epsilons(data)
    assert [c.fraction for c in choices] == [0.25, 0.5, 0.75]
    eps = [c.epsilon for c in choices]
    assert eps == sorted(eps)
    b_max = adversarial_accuracy_bound(data, AttackModel.from_epsilon(0.0, 2))
    for c in choices:
        assert c.bound == adversarial_accuracy_bound(data, AttackModel.from_epsilon(c.epsilon, 2))
        # no grid radius gets closer to the target
        grid = np.round(np.arange(0, 1001) * 1e-3, 10)
        best = min(abs(adversarial_accuracy_bound(data, AttackModel.from_epsilon(e, 2)) - c.target)
                   for e in grid[:: 25])
        assert abs(c.bound - c.target) <= best + 1e-12
        assert data.majority_fraction() <= c.bound <= b_max


def test_select_epsilons_rejects_constant_labels():
    with pytest.raises(ValueError):
        select_epsilons(Dataset(np.array([[0.1], [0.5]]), np.array([1, 1])))
