"""Exact search for the tree with the fewest adversarial errors.

The search assigns one (feature, threshold gap) split per decision node in heap
order. Each sample carries the set of nodes it can still reach, tested per node
against its own perturbation box. After the last split, the leaf labels are
optimised exactly for the resulting reachable-leaf sets.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .adversary import error_count
from .bound import boxes_intersect, hopcroft_karp
from .candidates import ThresholdCandidates, candidate_thresholds
from .data import AttackModel, Dataset
from .tree import Tree, leaf_path, n_leaves, n_nodes

log = logging.getLogger(__name__)


class Status(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    TIMEOUT = "timeout"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SearchBudget:
    time_limit: Optional[float] = None
    node_limit: Optional[int] = None
    incumbent: Optional[Tree] = None


@dataclass(frozen=True)
class SolveResult:
    tree: Tree
    objective: int
    status: Status
    nodes: int = 0
    elapsed: float = 0.0
    method: str = "exact"
    reported_cost: Optional[float] = None
    trace: tuple = field(default=(), compare=False)


class _OutOfBudget(Exception):
    pass


class _Closed(Exception):
    pass


def label_error_table(n_leaf: int) -> np.ndarray:
    """``table[y * 2**L + mask, C]``: a sample with label y reaching leaf set ``mask``
    is misclassified by leaf labelling ``C`` (bit t set = leaf t predicts 1)."""
    size = 2**n_leaf
    masks = np.arange(size)[:, None]
    labels = np.arange(size)[None, :]
    wrong1 = (masks & ~labels) != 0
    wrong0 = (masks & labels) != 0
    return np.concatenate([wrong0, wrong1]).astype(np.int32)


def _best_labels(masks: np.ndarray, y: np.ndarray, n_leaf: int, table: Optional[np.ndarray]):
    """Errors and labelling minimising misclassifications for each row of ``masks``."""
    if table is not None:
        codes = y[None, :] * (2**n_leaf) + masks
        errors = table[codes].sum(axis=1)
        best = errors.argmin(axis=1)
        return errors[np.arange(masks.shape[0]), best], best
    # large trees: scan labellings in chunks
    best_err = np.full(masks.shape[0], np.iinfo(np.int64).max)
    best_lab = np.zeros(masks.shape[0], dtype=np.int64)
    for start in range(0, 2**n_leaf, 4096):
        C = np.arange(start, min(start + 4096, 2**n_leaf))
        wrong = np.where(
            y[None, :, None] == 1,
            (masks[:, :, None] & ~C[None, None, :]) != 0,
            (masks[:, :, None] & C[None, None, :]) != 0,
        ).sum(axis=1)
        k = wrong.argmin(axis=1)
        e = wrong[np.arange(masks.shape[0]), k]
        better = e < best_err
        best_err = np.where(better, e, best_err)
        best_lab = np.where(better, C[k], best_lab)
    return best_err, best_lab


class _Search:
    def __init__(self, data, attack, depth, cands, budget, matching_bound):
        self.data = data
        self.depth = depth
        self.budget = budget
        self.matching_bound = matching_bound
        self.y = data.labels
        self.n = data.n
        self.N = n_nodes(depth)
        self.n_leaf = n_leaves(depth)
        self.table = label_error_table(self.n_leaf) if depth <= 3 else None
        lo, hi = attack.boxes(data.features)
        self.splits = cands.all_splits()
        feats = np.array([j for j, _ in self.splits], dtype=np.int64)
        ths = np.array([t for _, t in self.splits])
        self.L = lo[:, feats].T <= ths[:, None]
        self.R = hi[:, feats].T > ths[:, None]
        self.zeros = np.flatnonzero(self.y == 0)
        self.ones = np.flatnonzero(self.y == 1)
        self.conflict = boxes_intersect(lo[self.zeros], hi[self.zeros], lo[self.ones], hi[self.ones])
        self.node_reach = {1: np.ones(self.n, dtype=bool)}
        self.leaf_reach = {}
        self.choice = {}
        self.nodes = 0
        self.start = time.perf_counter()
        self.best_choice = None
        self.trace = []

    def tick(self):
        self.nodes += 1
        b = self.budget
        if b.node_limit is not None and self.nodes > b.node_limit:
            raise _OutOfBudget
        if b.time_limit is not None and time.perf_counter() - self.start > b.time_limit:
            raise _OutOfBudget

    def options(self, live: np.ndarray) -> list[int]:
        seen = set()
        opts = []
        for k in range(len(self.splits)):
            left, right = self.L[k] & live, self.R[k] & live
            key = np.packbits(left).tobytes() + np.packbits(right).tobytes()
            if key in seen:
                continue
            seen.add(key)
            opts.append((int(np.sum(left & right)), k))
        opts.sort()
        return [k for _, k in opts]

    def matching(self, groups_box, groups_free) -> int:
        """Matching size between opposite-label samples sharing a subtree or leaf."""
        share = np.zeros((self.zeros.size, self.ones.size), dtype=bool)
        if groups_box:
            G = np.array(groups_box)
            share |= ((G[:, self.zeros].T.astype(np.int32) @ G[:, self.ones].astype(np.int32)) > 0) & self.conflict
        if groups_free:
            G = np.array(groups_free)
            share |= (G[:, self.zeros].T.astype(np.int32) @ G[:, self.ones].astype(np.int32)) > 0
        adj = [list(np.flatnonzero(row)) for row in share]
        return sum(v != -1 for v in hopcroft_karp(adj, self.ones.size))

    def lower_bound(self, m: int) -> int:
        frontier = [self.node_reach[q] for q in range(m + 1, self.N + 1) if q // 2 <= m]
        leaves = list(self.leaf_reach.values())
        return self.matching(frontier, leaves)

    def leaf_bound(self) -> int:
        """Errors forced inside determined leaves, counted over disjoint sample sets."""
        used = np.zeros(self.n, dtype=bool)
        total = 0
        for r in self.leaf_reach.values():
            fresh = r & ~used
            n1 = int(np.sum(self.y[fresh]))
            total += min(n1, int(fresh.sum()) - n1)
            used |= r
        return total

    def set_children(self, m: int, left, right):
        base = 2**self.depth
        if 2 * m <= self.N:
            self.node_reach[2 * m], self.node_reach[2 * m + 1] = left, right
        else:
            self.leaf_reach[2 * m - base], self.leaf_reach[2 * m + 1 - base] = left, right

    def finish(self, live: np.ndarray, opts: list[int]):
        base = 2**self.depth
        mask = np.zeros(self.n, dtype=np.int64)
        for t, r in self.leaf_reach.items():
            if t < 2 * self.N - base:
                mask |= r.astype(np.int64) << t
        tl = 2 * self.N - base
        idx = np.array(opts)
        masks = (
            mask[None, :]
            | ((self.L[idx] & live).astype(np.int64) << tl)
            | ((self.R[idx] & live).astype(np.int64) << (tl + 1))
        )
        errors, labels = _best_labels(masks, self.y, self.n_leaf, self.table)
        k = int(errors.argmin())
        if errors[k] < self.ub:
            self.ub = int(errors[k])
            self.best_choice = ({**self.choice, self.N: int(idx[k])}, int(labels[k]))
            self.trace.append((time.perf_counter() - self.start, self.ub))
            log.debug("incumbent %d after %d nodes", self.ub, self.nodes)

    def visit(self, m: int):
        self.tick()
        live = self.node_reach[m]
        opts = self.options(live)
        if m == self.N:
            self.finish(live, opts)
            if self.ub <= self.root_lb:
                raise _Closed
            return
        for k in opts:
            self.choice[m] = k
            self.set_children(m, self.L[k] & live, self.R[k] & live)
            if self.leaf_bound() >= self.ub:
                continue
            if self.matching_bound and self.lower_bound(m) >= self.ub:
                continue
            self.visit(m + 1)
        del self.choice[m]
        if 2 * m > self.N:
            base = 2**self.depth
            self.leaf_reach.pop(2 * m - base, None)
            self.leaf_reach.pop(2 * m + 1 - base, None)

    def tree(self) -> Tree:
        choice, labels = self.best_choice
        feats = [self.splits[choice[m]][0] for m in range(1, self.N + 1)]
        ths = [self.splits[choice[m]][1] for m in range(1, self.N + 1)]
        leaves = [(labels >> t) & 1 for t in range(self.n_leaf)]
        return Tree(self.depth, feats, ths, leaves)


def solve_exact(
    data: Dataset,
    attack: AttackModel,
    depth: int,
    budget: Optional[SearchBudget] = None,
    matching_bound: bool = True,
    candidates: Optional[ThresholdCandidates] = None,
) -> SolveResult:
    """Branch-and-bound over candidate splits; anytime under a budget.

    The returned objective is always the adversarial error count of the returned
    tree. Status is ``optimal`` when the search finished or the incumbent met the
    matching lower bound, ``timeout`` when the budget ran out first.
    """
    start = time.perf_counter()
    budget = budget or SearchBudget()
    if depth < 0:
        raise ValueError("depth must be >= 0")
    attack.check(data.p)
    cands = candidates if candidates is not None else candidate_thresholds(data, attack)
    usable = cands.usable_features()
    best = Tree.constant(depth, data.majority_label(), usable[0] if usable else 0)
    ub = error_count(best, data, attack)
    if budget.incumbent is not None:
        if budget.incumbent.depth != depth:
            raise ValueError(f"incumbent depth {budget.incumbent.depth} != {depth}")
        inc = error_count(budget.incumbent, data, attack)
        if inc <= ub:
            best, ub = budget.incumbent, inc

    def result(tree, status, nodes=0, trace=()):
        return SolveResult(tree, error_count(tree, data, attack), status, nodes, time.perf_counter() - start, trace=tuple(trace))

    if depth == 0 or data.n == 0 or not usable:
        return result(best, Status.OPTIMAL)
    search = _Search(data, attack, depth, cands, budget, matching_bound)
    search.ub = ub
    search.root_lb = search.matching([search.node_reach[1]], []) if matching_bound else 0
    status = Status.OPTIMAL
    if ub > search.root_lb:
        try:
            search.visit(1)
        except _Closed:
            pass
        except _OutOfBudget:
            status = Status.TIMEOUT
    if search.best_choice is not None:
        best = search.tree()
    return result(best, status, search.nodes, search.trace)


def brute_force_reference(
    data: Dataset,
    attack: AttackModel,
    depth: int,
    cap: int = 10**7,
    candidates: Optional[ThresholdCandidates] = None,
) -> int:
    """Minimum adversarial error count by enumerating every tree over the candidates.

    Leaf reachability uses the closed form: a box reaches a leaf iff, per feature,
    ``min(high, smallest left-turn threshold) >= low`` and that value exceeds the
    largest right-turn threshold on the path.
    """
    attack.check(data.p)
    y = data.labels
    if depth == 0 or data.n == 0:
        return int(min(np.sum(y == 0), np.sum(y == 1)))
    cands = candidates if candidates is not None else candidate_thresholds(data, attack)
    splits = cands.all_splits()
    if not splits:
        return int(min(np.sum(y == 0), np.sum(y == 1)))
    K, N, n_leaf = len(splits), n_nodes(depth), n_leaves(depth)
    size = K**N * 2**n_leaf
    if size > cap:
        raise ValueError(f"search space {size} exceeds cap {cap}")
    feats = np.array([j for j, _ in splits])
    ths = np.array([t for _, t in splits])
    lo, hi = attack.boxes(data.features)

    leaf_reach, leaf_nodes = [], []
    for t in range(n_leaf):
        path = leaf_path(depth, t)
        grid = np.stack(np.meshgrid(*[np.arange(K)] * len(path), indexing="ij"), -1).reshape(-1, len(path))
        ok = np.ones((grid.shape[0], data.n), dtype=bool)
        for f in range(data.p):
            upper = np.full(grid.shape[0], np.inf)
            lower = np.full(grid.shape[0], -np.inf)
            for pos, (_, right) in enumerate(path):
                on_f = feats[grid[:, pos]] == f
                th = ths[grid[:, pos]]
                if right:
                    lower = np.where(on_f, np.maximum(lower, th), lower)
                else:
                    upper = np.where(on_f, np.minimum(upper, th), upper)
            top = np.minimum(hi[None, :, f], upper[:, None])
            ok &= (top >= lo[None, :, f]) & (top > lower[:, None])
        leaf_reach.append(ok)
        leaf_nodes.append([m - 1 for m, _ in path])

    best = data.n
    total = K**N
    chunk = max(1, 2**18 // max(1, data.n * n_leaf))
    for first in range(0, total, chunk):
        combo = np.arange(first, min(first + chunk, total))
        choice = np.stack(np.unravel_index(combo, (K,) * N), axis=1)
        masks = np.zeros((combo.size, data.n), dtype=np.int64)
        for t in range(n_leaf):
            idx = np.ravel_multi_index(tuple(choice[:, k] for k in leaf_nodes[t]), (K,) * len(leaf_nodes[t]))
            masks |= leaf_reach[t][idx].astype(np.int64) << t
        for C in range(2**n_leaf):
            wrong = np.where(y[None, :] == 1, (masks & ~C) != 0, (masks & C) != 0)
            best = min(best, int(wrong.sum(axis=1).min()))
    return best
