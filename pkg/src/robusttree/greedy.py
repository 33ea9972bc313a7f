"""Top-down greedy robust tree learner scored by worst-case Gini impurity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .adversary import reachability
from .candidates import candidate_thresholds
from .data import AttackModel, Dataset
from .tree import Tree, n_leaves, n_nodes

_TOL = 1e-12


def _weighted_gini(l0, l1, r0, r1):
    total = l0 + l1 + r0 + r1
    with np.errstate(invalid="ignore", divide="ignore"):
        nl = l0 + l1
        nr = r0 + r1
        gl = np.where(nl > 0, 1.0 - (l0 / np.where(nl > 0, nl, 1)) ** 2 - (l1 / np.where(nl > 0, nl, 1)) ** 2, 0.0)
        gr = np.where(nr > 0, 1.0 - (r0 / np.where(nr > 0, nr, 1)) ** 2 - (r1 / np.where(nr > 0, nr, 1)) ** 2, 0.0)
    return (nl * gl + nr * gr) / total


def worst_case_gini(left, right, straddling) -> float:
    """Largest weighted Gini impurity the adversary can force.

    Each argument is a pair of class counts ``(class 0, class 1)``. Straddling
    samples may be sent to either side; every split of the per-class straddler
    counts is tried. The maximum is not always at a block extreme (e.g. two
    class-0 straddlers with one class-1 sample on each side), so all
    ``(s0 + 1) * (s1 + 1)`` splits are scored.
    """
    l0, l1 = left
    r0, r1 = right
    s0, s1 = straddling
    if min(l0, l1, r0, r1, s0, s1) < 0:
        raise ValueError("counts must be nonnegative")
    if l0 + l1 + r0 + r1 + s0 + s1 == 0:
        return 0.0
    x = np.arange(s0 + 1)[:, None]
    y = np.arange(s1 + 1)[None, :]
    g = _weighted_gini(l0 + x, l1 + y, r0 + s0 - x, r1 + s1 - y)
    return float(g.max())


def gini(counts) -> float:
    n0, n1 = counts
    n = n0 + n1
    if n == 0:
        return 0.0
    return 1.0 - (n0 / n) ** 2 - (n1 / n) ** 2


@dataclass(frozen=True)
class SplitScore:
    feature: int
    threshold: float
    impurity: float
    n_left: int
    n_right: int
    n_straddle: int


def best_split(lo, hi, y, features) -> Optional[SplitScore]:
    """Lowest worst-case impurity split over node-local endpoint gaps.

    Ties go to the lower feature index, then the lower threshold.
    """
    best = None
    for j in features:
        points = np.unique(np.concatenate([lo[:, j], hi[:, j]]))
        if points.size < 2:
            continue
        ths = (points[:-1] + points[1:]) / 2.0
        left = hi[None, :, j] <= ths[:, None]
        right = lo[None, :, j] > ths[:, None]
        both = ~(left | right)
        for k, th in enumerate(ths):
            counts = [
                (int(np.sum(side[k] & (y == 0))), int(np.sum(side[k] & (y == 1))))
                for side in (left, right, both)
            ]
            score = worst_case_gini(*counts)
            if best is None or score < best.impurity - _TOL:
                best = SplitScore(int(j), float(th), score, sum(counts[0]), sum(counts[1]), sum(counts[2]))
    return best


def _majority(y, fallback: int) -> int:
    n1 = int(np.sum(y))
    n0 = y.size - n1
    if n0 == n1:
        return fallback
    return int(n1 > n0)


def fit_greedy(data: Dataset, attack: AttackModel, depth: int) -> Tree:
    """Grow a complete tree of the given depth by greedy robust splitting.

    A node is split only when the best split strictly lowers the worst-case
    impurity below the node's own Gini; otherwise the subtree is padded with
    splits that send everything left. Straddling samples follow both branches.
    Leaf labels come from the samples that can reach only that leaf, then from
    all samples reaching it, then from the parent.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    attack.check(data.p)
    lo, hi = attack.boxes(data.features)
    y = data.labels
    usable = candidate_thresholds(data, attack).usable_features()
    pad_feature = usable[0] if usable else 0
    N = n_nodes(depth)
    features = [pad_feature] * N
    thresholds = [1.0] * N
    fallback = [0] * (N + n_leaves(depth) + 1)

    def grow(m: int, idx: np.ndarray, level: int, parent_label: int):
        label = _majority(y[idx], parent_label)
        fallback[m] = label
        if level == depth:
            return
        split = None
        if idx.size and 0 < y[idx].sum() < idx.size:
            split = best_split(lo[idx], hi[idx], y[idx], usable)
            if split is not None and split.impurity >= gini((int(np.sum(y[idx] == 0)), int(np.sum(y[idx] == 1)))) - _TOL:
                split = None
        if split is None:
            left, right = idx, idx[:0]
        else:
            features[m - 1] = split.feature
            thresholds[m - 1] = split.threshold
            left = idx[lo[idx, split.feature] <= split.threshold]
            right = idx[hi[idx, split.feature] > split.threshold]
        grow(2 * m, left, level + 1, label)
        grow(2 * m + 1, right, level + 1, label)

    grow(1, np.arange(data.n), 0, 0)
    tree = Tree(depth, features, thresholds, [0] * n_leaves(depth))
    reach = reachability(tree, data, attack)
    only = reach & (reach.sum(axis=1, keepdims=True) == 1)
    leaves = []
    for t in range(n_leaves(depth)):
        parent = fallback[(2**depth + t) // 2] if depth else fallback[1]
        own = fallback[2**depth + t] if depth else parent
        if only[:, t].any():
            leaves.append(_majority(y[only[:, t]], own))
        elif reach[:, t].any():
            leaves.append(_majority(y[reach[:, t]], own))
        else:
            leaves.append(parent)
    return tree.replace(leaves=leaves)
