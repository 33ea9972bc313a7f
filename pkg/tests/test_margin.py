import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from robusttree.adversary import reachability
from robusttree.data import AttackModel, Dataset
from robusttree.exact import solve_exact
from robusttree.margin import maximize_margin
from robusttree.tree import Tree
from conftest import random_instance


def test_threshold_moves_to_the_middle_of_the_gap():
    data = Dataset(np.array([[0.2], [0.6]]), np.array([0, 1]))
    attack = AttackModel.from_epsilon(0.1, 1)
    tree = Tree(1, [0], [0.32], [0, 1])  # just right of the first box
    out = maximize_margin(tree, data, attack)
    assert abs(out.threshold(1) - 0.4) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_margin_keeps_reachability(seed):
    rng = np.random.default_rng(seed)
    data, attack, depth = random_instance(rng, min_depth=1)
    tree = solve_exact(data, attack, depth).tree
    out = maximize_margin(tree, data, attack)
    assert np.array_equal(reachability(out, data, attack), reachability(tree, data, attack))
    assert np.all((out.thresholds >= 0) & (out.thresholds <= 1))
