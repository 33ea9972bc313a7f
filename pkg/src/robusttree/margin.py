"""Post-processing that centres thresholds between the nearest constraining endpoints."""

from __future__ import annotations

import numpy as np

from .adversary import reachability
from .data import AttackModel, Dataset
from .tree import Tree, ancestors, subtree_leaves


def _related_thresholds(tree: Tree, m: int) -> list[float]:
    """Thresholds of ancestors and descendants of ``m`` that split on the same feature."""
    j = tree.feature(m)
    related = [k for k in ancestors(tree.depth, subtree_leaves(tree.depth, m)[0]) if k != m]
    stack = [2 * m, 2 * m + 1]
    while stack:
        k = stack.pop()
        if k >= 2**tree.depth:
            continue
        related.append(k)
        stack.extend((2 * k, 2 * k + 1))
    return [tree.threshold(k) for k in related if tree.feature(k) == j]


def maximize_margin(tree: Tree, data: Dataset, attack: AttackModel) -> Tree:
    """Move every threshold to the middle of the interval in which it can slide freely.

    The interval is bounded by the nearest box endpoints (of samples that can reach
    the node) and same-feature thresholds on the node's path. Reachable leaves of every
    training sample are left untouched; a move that would change them is skipped.
    """
    if tree.depth == 0 or data.n == 0:
        return tree
    attack.check(data.p)
    lo, hi = attack.boxes(data.features)
    reach = reachability(tree, data, attack)
    for m in range(1, 2**tree.depth):
        leaves = list(subtree_leaves(tree.depth, m))
        at_node = reach[:, leaves].any(axis=1)
        if not at_node.any():
            continue
        j, th = tree.feature(m), tree.threshold(m)
        points = np.concatenate([lo[at_node, j], hi[at_node, j], _related_thresholds(tree, m)])
        below = points[points <= th]
        above = points[points > th]
        if below.size and above.size:
            new = (below.max() + above.min()) / 2.0
        elif above.size:
            u = above.min()
            if u <= 0.0:
                continue
            new = u / 2.0
        else:
            low = below.max()
            if low >= 1.0:
                continue
            new = (low + 1.0) / 2.0
        if new == th:
            continue
        candidate = tree.with_threshold(m, float(new))
        if np.array_equal(reachability(candidate, data, attack), reach):
            tree = candidate
    return tree
