"""Upper bound on adversarial accuracy from maximum bipartite matching.

Two samples with different labels whose perturbation boxes intersect cannot both
be classified correctly by any model. Every matching in the graph of such pairs
therefore certifies that many unavoidable errors, and the maximum matching gives
the tightest bound of this kind (it equals the minimum vertex cover).
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .data import AttackModel, Dataset

_INF = float("inf")


@dataclass(frozen=True)
class ConflictGraph:
    """Bipartite graph between class-0 samples (left) and class-1 samples (right).

    ``edges`` holds pairs of sample indices ``(i, j)`` with ``y_i = 0``, ``y_j = 1``.
    """

    left: tuple
    right: tuple
    edges: tuple

    def adjacency(self) -> list[list[int]]:
        """Right-vertex positions adjacent to each left-vertex position, ascending."""
        lpos = {v: k for k, v in enumerate(self.left)}
        rpos = {v: k for k, v in enumerate(self.right)}
        adj = [[] for _ in self.left]
        for i, j in self.edges:
            adj[lpos[i]].append(rpos[j])
        for a in adj:
            a.sort()
        return adj


def boxes_intersect(lo_a, hi_a, lo_b, hi_b) -> np.ndarray:
    """Pairwise box intersection, ``(len(a), len(b))`` boolean."""
    out = np.ones((lo_a.shape[0], lo_b.shape[0]), dtype=bool)
    for f in range(lo_a.shape[1]):
        out &= np.maximum(lo_a[:, f, None], lo_b[None, :, f]) <= np.minimum(hi_a[:, f, None], hi_b[None, :, f])
    return out


def build_conflict_graph(data: Dataset, attack: AttackModel) -> ConflictGraph:
    lo, hi = attack.boxes(data.features)
    left = np.flatnonzero(data.labels == 0)
    right = np.flatnonzero(data.labels == 1)
    overlap = boxes_intersect(lo[left], hi[left], lo[right], hi[right])
    a, b = np.nonzero(overlap)
    edges = tuple((int(left[i]), int(right[j])) for i, j in zip(a, b))
    return ConflictGraph(tuple(int(v) for v in left), tuple(int(v) for v in right), edges)


class Matching(NamedTuple):
    cardinality: int
    pairs: tuple


def hopcroft_karp(adj: Sequence[Sequence[int]], n_right: int) -> list[int]:
    """Maximum matching of a bipartite graph given as left-vertex adjacency lists.

    Returns ``pair_left`` with the matched right vertex of every left vertex (or -1).
    Vertices and neighbours are scanned in the given order, so the result is
    deterministic.
    """
    n_left = len(adj)
    pair_left = [-1] * n_left
    pair_right = [-1] * n_right
    dist = [_INF] * n_left

    def bfs() -> bool:
        queue = deque()
        for u in range(n_left):
            if pair_left[u] == -1:
                dist[u] = 0
                queue.append(u)
            else:
                dist[u] = _INF
        found = False
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                w = pair_right[v]
                if w == -1:
                    found = True
                elif dist[w] == _INF:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return found

    def augment(root: int, ptr: list) -> bool:
        stack, via = [root], []
        while stack:
            u = stack[-1]
            advanced = False
            while ptr[u] < len(adj[u]):
                v = adj[u][ptr[u]]
                ptr[u] += 1
                w = pair_right[v]
                if w == -1:
                    via.append(v)
                    for uu, vv in zip(stack, via):
                        pair_left[uu] = vv
                        pair_right[vv] = uu
                    return True
                if dist[w] == dist[u] + 1:
                    via.append(v)
                    stack.append(w)
                    advanced = True
                    break
            if not advanced:
                dist[u] = _INF
                stack.pop()
                if via:
                    via.pop()
        return False

    while bfs():
        ptr = [0] * n_left
        for u in range(n_left):
            if pair_left[u] == -1:
                augment(u, ptr)
    return pair_left


def max_matching(graph: ConflictGraph) -> Matching:
    pair_left = hopcroft_karp(graph.adjacency(), len(graph.right))
    pairs = tuple(
        (graph.left[u], graph.right[v]) for u, v in enumerate(pair_left) if v != -1
    )
    return Matching(len(pairs), pairs)


def adversarial_accuracy_bound(data: Dataset, attack: AttackModel) -> float:
    """Best adversarial accuracy any classifier can reach on ``data``."""
    if data.n == 0:
        raise ValueError("cannot bound accuracy on an empty dataset")
    m = max_matching(build_conflict_graph(data, attack))
    return (data.n - m.cardinality) / data.n


def epsilon_sweep(data: Dataset, grid: Iterable[float]) -> list[tuple[float, float]]:
    """Bound for an L-infinity attack of each radius in ``grid``."""
    rows = []
    for eps in grid:
        eps = float(eps)
        if not 0.0 <= eps <= 1.0:
            raise ValueError(f"epsilon {eps} outside [0, 1]")
        rows.append((eps, adversarial_accuracy_bound(data, AttackModel.from_epsilon(eps, data.p))))
    return rows


def write_sweep_csv(rows, sink=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epsilon", "bound"])
    for eps, b in rows:
        writer.writerow([repr(float(eps)), repr(float(b))])
    text = buf.getvalue()
    if sink is not None:
        sink.write(text)
    return text


@dataclass(frozen=True)
class EpsilonChoice:
    fraction: float
    target: float
    epsilon: float
    bound: float


def select_epsilons(
    data: Dataset, fractions: Sequence[float] = (0.25, 0.5, 0.75), resolution: float = 1e-3
) -> list[EpsilonChoice]:
    """Radii whose bound sits at the given fractions of the non-trivial range.

    The range runs from the bound at epsilon = 0 down to the majority-class
    fraction. For each fraction ``f`` the target is ``b_max - f * (b_max - b_min)``
    and the smallest grid radius whose bound is closest to the target is chosen.
    """
    if data.n == 0 or np.all(data.labels == data.labels[0]):
        raise ValueError("epsilon selection needs both classes present")
    steps = int(round(1.0 / resolution))
    cache: dict = {}

    def bound_at(k: int) -> float:
        if k not in cache:
            eps = min(round(k * resolution, 10), 1.0)
            cache[k] = adversarial_accuracy_bound(data, AttackModel.from_epsilon(eps, data.p))
        return cache[k]

    def first_at_or_below(value: float) -> int:
        lo, hi = 0, steps
        while lo < hi:
            mid = (lo + hi) // 2
            if bound_at(mid) <= value:
                hi = mid
            else:
                lo = mid + 1
        return lo

    b_max = bound_at(0)
    b_min = data.majority_fraction()
    if b_max <= b_min:
        raise ValueError("bound is already trivial at epsilon = 0; nothing to select")
    choices = []
    for f in fractions:
        target = b_max - f * (b_max - b_min)
        k = first_at_or_below(target)
        best = bound_at(k)
        if k > 0 and abs(bound_at(k - 1) - target) <= abs(best - target):
            best = bound_at(k - 1)
        k = first_at_or_below(best)
        choices.append(EpsilonChoice(float(f), target, min(round(k * resolution, 10), 1.0), bound_at(k)))
    return choices
