"""Exact evaluation of trees against box-shaped perturbations.

A sample is misclassified under attack iff some leaf whose region intersects the
sample's perturbation box predicts the other class. Reachable leaves are found by
descending the tree while shrinking the box: going left restricts the feature to
values <= threshold, going right to values strictly above it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import AttackModel, Dataset
from .tree import Tree


@dataclass(frozen=True)
class PerturbationBox:
    low: np.ndarray
    high: np.ndarray

    def contains(self, point, tol: float = 0.0) -> bool:
        point = np.asarray(point, dtype=float)
        return bool(np.all(point >= self.low - tol) and np.all(point <= self.high + tol))


def perturbation_box(x, attack: AttackModel) -> PerturbationBox:
    lo, hi = attack.boxes(np.asarray(x, dtype=float))
    return PerturbationBox(lo, hi)


def _children(tree: Tree, m: int, lo, strict, hi):
    """Yield ``(child, lo, strict, hi)`` for every child of ``m`` the region can reach."""
    j, th = tree.feature(m), tree.threshold(m)
    # left: x_j <= th
    new_hi = min(hi[j], th)
    if lo[j] < new_hi or (lo[j] == new_hi and not strict[j]):
        h = hi.copy()
        h[j] = new_hi
        yield 2 * m, lo, strict, h
    # right: x_j > th
    new_lo, new_strict = (th, True) if th >= lo[j] else (lo[j], strict[j])
    if new_lo < hi[j] or (new_lo == hi[j] and not new_strict):
        l, s = lo.copy(), strict.copy()
        l[j], s[j] = new_lo, new_strict
        yield 2 * m + 1, l, s, hi


def _walk(tree: Tree, box: PerturbationBox):
    """Yield ``(leaf, lo, strict, hi)`` for each reachable leaf with its restricted region."""
    stack = [(1, box.low.copy(), np.zeros(box.low.shape, dtype=bool), box.high.copy())]
    leaf_base = 2**tree.depth
    while stack:
        m, lo, strict, hi = stack.pop()
        if m >= leaf_base:
            yield m - leaf_base, lo, strict, hi
            continue
        children = list(_children(tree, m, lo, strict, hi))
        stack.extend(reversed(children))


def reachable_leaves(tree: Tree, sample, attack: AttackModel) -> frozenset:
    """Leaves whose region intersects the sample's perturbation box (never empty)."""
    return frozenset(t for t, *_ in _walk(tree, perturbation_box(sample, attack)))


def reachability(tree: Tree, data: Dataset, attack: AttackModel) -> np.ndarray:
    """Boolean ``(n, 2**depth)`` matrix: can sample i reach leaf t."""
    attack.check(data.p)
    lo, hi = attack.boxes(data.features)
    n = data.n
    out = np.zeros((n, 2**tree.depth), dtype=bool)
    rows = np.arange(n)
    stack = [(1, np.ones(n, dtype=bool), lo.copy(), np.zeros_like(lo, dtype=bool), hi.copy())]
    leaf_base = 2**tree.depth
    while stack:
        m, alive, l, s, h = stack.pop()
        if m >= leaf_base:
            out[:, m - leaf_base] = alive
            continue
        j, th = tree.feature(m), tree.threshold(m)
        lj, sj, hj = l[rows, j], s[rows, j], h[rows, j]
        # left child: upper bound shrinks to th
        new_h = np.minimum(hj, th)
        go_left = alive & ((lj < new_h) | ((lj == new_h) & ~sj))
        h_left = h.copy()
        h_left[:, j] = new_h
        # right child: strict lower bound th
        raise_lo = th >= lj
        new_l = np.where(raise_lo, th, lj)
        new_s = np.where(raise_lo, True, sj)
        go_right = alive & ((new_l < hj) | ((new_l == hj) & ~new_s))
        l_right, s_right = l.copy(), s.copy()
        l_right[:, j], s_right[:, j] = new_l, new_s
        stack.append((2 * m + 1, go_right, l_right, s_right, h))
        stack.append((2 * m, go_left, l, s, h_left))
    return out


def adversarial_errors(tree: Tree, data: Dataset, attack: AttackModel) -> np.ndarray:
    """Boolean vector: sample i can be pushed into a leaf predicting the wrong class."""
    reach = reachability(tree, data, attack)
    wrong = tree.leaves[None, :] != data.labels[:, None]
    return np.any(reach & wrong, axis=1)


def error_count(tree: Tree, data: Dataset, attack: AttackModel) -> int:
    return int(adversarial_errors(tree, data, attack).sum())


def adversarial_accuracy(tree: Tree, data: Dataset, attack: AttackModel) -> float:
    if data.n == 0:
        return 1.0
    return (data.n - error_count(tree, data, attack)) / data.n


def accuracy(tree: Tree, data: Dataset) -> float:
    if data.n == 0:
        return 1.0
    return float(np.mean(tree.predict(data.features) == data.labels))


def attack_witness(tree: Tree, sample, label: int, attack: AttackModel) -> Optional[np.ndarray]:
    """A point inside the sample's box that the tree classifies as ``1 - label``, if any.

    The point stays as close to the sample as the chosen leaf's region allows.
    """
    x = np.asarray(sample, dtype=float)
    box = perturbation_box(x, attack)
    for t, lo, strict, hi in _walk(tree, box):
        if tree.leaves[t] == label:
            continue
        w = np.clip(x, lo, hi)
        # an open lower bound is never attained; the region is non-empty so hi works
        w = np.where(strict & (w <= lo), hi, w)
        return w
    return None
