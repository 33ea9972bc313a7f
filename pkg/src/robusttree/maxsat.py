"""Weighted CNF encoding of robust tree learning with ordered threshold variables.

Variables per decision node ``m``: ``a[j, m]`` (node splits on feature j) and, for
every candidate position ``v`` of feature ``j``, ``b[m, j, v]`` (threshold lies left
of candidate v; true values form a suffix of each block). Per sample ``i``:
``s[i, m, 0/1]`` (can move left/right of node m) and ``e[i]`` (is misclassified).
Per leaf ``t``: ``c[t]`` (predicts class 1). Soft clauses ``-e[i]`` count errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .adversary import error_count
from .candidates import BELOW, ThresholdCandidates, candidate_thresholds
from .data import AttackModel, Dataset
from .errors import AssignmentError, VerificationError
from .tree import Tree, left_ancestors, n_leaves, n_nodes, right_ancestors, simplify


@dataclass
class VarMap:
    """Dense variable numbering (from 1) with reverse lookup."""

    depth: int
    n: int
    candidates: ThresholdCandidates
    features: tuple
    a: dict = field(default_factory=dict)
    b: dict = field(default_factory=dict)
    s: dict = field(default_factory=dict)
    c: dict = field(default_factory=dict)
    e: dict = field(default_factory=dict)
    roles: list = field(default_factory=lambda: [None])

    def _new(self, role: tuple) -> int:
        self.roles.append(role)
        return len(self.roles) - 1

    @property
    def n_vars(self) -> int:
        return len(self.roles) - 1

    def role(self, var: int) -> tuple:
        return self.roles[var]

    def expected_count(self) -> int:
        nodes = n_nodes(self.depth)
        per_node_b = sum(self.candidates[j].size for j in self.features)
        return nodes * len(self.features) + nodes * per_node_b + 2 * self.n * nodes + n_leaves(self.depth) + self.n


@dataclass(frozen=True)
class WcnfInstance:
    n_vars: int
    hard: tuple
    soft: tuple
    top: int

    def cost(self, assignment) -> int:
        """Total weight of falsified soft clauses."""
        values = as_truth_array(assignment, self.n_vars)
        return sum(w for w, clause in self.soft if not _satisfied(clause, values))

    def violated_hard(self, assignment) -> list[int]:
        values = as_truth_array(assignment, self.n_vars)
        return [k for k, clause in enumerate(self.hard) if not _satisfied(clause, values)]


def _satisfied(clause, values: np.ndarray) -> bool:
    return any(values[lit] if lit > 0 else not values[-lit] for lit in clause)


def as_truth_array(assignment, n_vars: int) -> np.ndarray:
    """Normalise an assignment to a boolean array indexed by variable (slot 0 unused).

    Accepts a mapping ``var -> bool``, a sequence of signed literals, or a boolean
    sequence of length ``n_vars`` (position k holds variable k + 1).
    """
    values = np.zeros(n_vars + 1, dtype=bool)
    if isinstance(assignment, np.ndarray) and assignment.dtype == bool and assignment.size == n_vars + 1:
        return assignment.copy()
    if isinstance(assignment, Mapping):
        missing = [v for v in range(1, n_vars + 1) if v not in assignment]
        if missing:
            raise AssignmentError(f"assignment misses {len(missing)} variables, first {missing[0]}")
        for v in range(1, n_vars + 1):
            values[v] = bool(assignment[v])
        return values
    seq = list(assignment)
    if len(seq) == n_vars and all(isinstance(x, (bool, np.bool_)) for x in seq):
        values[1:] = seq
        return values
    seen = set()
    for lit in seq:
        lit = int(lit)
        if lit == 0 or abs(lit) > n_vars:
            raise AssignmentError(f"literal {lit} out of range 1..{n_vars}")
        values[abs(lit)] = lit > 0
        seen.add(abs(lit))
    if len(seen) != n_vars:
        raise AssignmentError(f"assignment covers {len(seen)} of {n_vars} variables")
    return values


def encoding_candidates(data: Dataset, attack: AttackModel, candidates: Optional[ThresholdCandidates] = None):
    """Candidates and selectable features for the encoders.

    When every feature is constant, feature 0 keeps its box endpoints as
    candidates so that trees still have an exact encoding.
    """
    cands = candidates if candidates is not None else candidate_thresholds(data, attack)
    features = tuple(cands.usable_features())
    if not features:
        lo, hi = attack.boxes(data.features)
        values = list(cands.values)
        values[0] = np.unique(np.concatenate([lo[:, 0], hi[:, 0]]))
        cands, features = ThresholdCandidates(tuple(values)), (0,)
    return cands, features


def build_encoding(
    data: Dataset, attack: AttackModel, depth: int, candidates: Optional[ThresholdCandidates] = None
) -> tuple[VarMap, WcnfInstance]:
    """Compile the robust tree learning problem to weighted MaxSAT."""
    if depth < 1:
        raise ValueError("encoding needs depth >= 1")
    if data.n < 1:
        raise ValueError("encoding needs at least one sample")
    attack.check(data.p)
    cands, features = encoding_candidates(data, attack, candidates)
    vm = VarMap(depth, data.n, cands, features)
    nodes = range(1, n_nodes(depth) + 1)
    for m in nodes:
        for j in features:
            vm.a[j, m] = vm._new(("a", j, m))
    for m in nodes:
        for j in features:
            for v in range(cands[j].size):
                vm.b[m, j, v] = vm._new(("b", m, j, v))
    for i in range(data.n):
        for m in nodes:
            for side in (0, 1):
                vm.s[i, m, side] = vm._new(("s", i, m, side))
    for t in range(n_leaves(depth)):
        vm.c[t] = vm._new(("c", t))
    for i in range(data.n):
        vm.e[i] = vm._new(("e", i))

    hard = []
    for m in nodes:
        hard.append(tuple(vm.a[j, m] for j in features))
    for m in nodes:
        for j in features:
            for v in range(cands[j].size - 1):
                hard.append((-vm.b[m, j, v], vm.b[m, j, v + 1]))
    lo, hi = attack.boxes(data.features)
    for i in range(data.n):
        for m in nodes:
            for j in features:
                a = vm.a[j, m]
                vl = cands.left_index(j, lo[i, j])
                if vl == BELOW:
                    hard.append((-a, vm.s[i, m, 0]))
                else:
                    hard.append((-a, vm.b[m, j, vl], vm.s[i, m, 0]))
                vr = cands.right_index(j, hi[i, j])
                if vr == cands[j].size:
                    hard.append((-a, vm.s[i, m, 1]))
                else:
                    hard.append((-a, -vm.b[m, j, vr], vm.s[i, m, 1]))
    for t in range(n_leaves(depth)):
        lefts, rights = left_ancestors(depth, t), right_ancestors(depth, t)
        for i in range(data.n):
            clause = [-vm.s[i, m, 0] for m in lefts] + [-vm.s[i, m, 1] for m in rights]
            clause.append(-vm.c[t] if data.labels[i] == 0 else vm.c[t])
            clause.append(vm.e[i])
            hard.append(tuple(clause))
    soft = tuple((1, (-vm.e[i],)) for i in range(data.n))
    return vm, WcnfInstance(vm.n_vars, tuple(hard), soft, data.n + 1)


def write_wcnf(instance: WcnfInstance, sink=None, new_format: bool = False) -> str:
    """DIMACS WCNF text; ``new_format`` writes the 2022 ``h``-prefixed dialect."""
    lines = []
    if not new_format:
        lines.append(f"p wcnf {instance.n_vars} {len(instance.hard) + len(instance.soft)} {instance.top}")
    hard_prefix = "h" if new_format else str(instance.top)
    for clause in instance.hard:
        if not clause:
            raise ValueError("empty hard clause")
        lines.append(" ".join([hard_prefix, *map(str, clause), "0"]))
    for weight, clause in instance.soft:
        lines.append(" ".join([str(weight), *map(str, clause), "0"]))
    text = "\n".join(lines) + "\n"
    if sink is not None:
        sink.write(text)
    return text


def tree_from_choices(
    depth: int,
    candidates: ThresholdCandidates,
    node_features: Sequence[int],
    node_gaps: Sequence[int],
    leaves: Sequence[int],
) -> Tree:
    """Build a tree from per-node (feature, first-true-candidate) choices.

    A node whose threshold would have to lie below 0 (every sample goes right) is
    turned into the mirror split: subtrees swapped, everything sent left.
    """
    thresholds, mirrored = [], []
    for m, (j, k) in enumerate(zip(node_features, node_gaps), start=1):
        th = candidates.threshold_for_gap(j, k)
        if th is None:
            th = 1.0
            mirrored.append(m)
        thresholds.append(th)
    tree = Tree(depth, list(node_features), thresholds, list(leaves))
    # deepest first, so a swap only moves subtrees that are already final
    for m in sorted(mirrored, reverse=True):
        tree = tree.swap_children(m)
    return tree


def decode_tree(vm: VarMap, assignment, data: Dataset, attack: AttackModel, instance: Optional[WcnfInstance] = None):
    """Turn a hard-satisfying assignment into a tree and verify its error count.

    Returns ``(tree, errors)`` where ``errors`` is the tree's adversarial error
    count on ``data``; it never exceeds the assignment's number of true ``e``.
    """
    values = as_truth_array(assignment, vm.n_vars)
    if instance is not None:
        bad = instance.violated_hard(values)
        if bad:
            raise AssignmentError(f"assignment violates {len(bad)} hard clauses, first {instance.hard[bad[0]]}")
    node_features, node_gaps = [], []
    for m in range(1, n_nodes(vm.depth) + 1):
        chosen = [j for j in vm.features if values[vm.a[j, m]]]
        if not chosen:
            raise AssignmentError(f"node {m} selects no feature")
        j = chosen[0]
        block = [values[vm.b[m, j, v]] for v in range(vm.candidates[j].size)]
        if any(x and not y for x, y in zip(block, block[1:])):
            raise AssignmentError(f"threshold block of node {m}, feature {j} is not monotone")
        node_features.append(j)
        node_gaps.append(block.index(True) if any(block) else len(block))
    leaves = [int(values[vm.c[t]]) for t in range(n_leaves(vm.depth))]
    tree = tree_from_choices(vm.depth, vm.candidates, node_features, node_gaps, leaves)
    cost = int(sum(values[vm.e[i]] for i in range(vm.n)))
    errors = error_count(tree, data, attack)
    if errors > cost:
        raise VerificationError(f"decoded tree makes {errors} errors but the assignment claims {cost}")
    return tree, errors


def normalize_for_encoding(tree: Tree, candidates: ThresholdCandidates) -> Tree:
    """Rewrite ``tree`` so that per-node box checks reproduce its exact behaviour.

    Redundant splits are removed (see :func:`simplify`), and splits sending every
    candidate right are mirrored into splits sending everything left.
    """
    tree = simplify(tree)
    for m in range(1, n_nodes(tree.depth) + 1):
        j = tree.feature(m)
        if j >= candidates.p:
            raise ValueError(f"node {m} splits on feature {j}, beyond the {candidates.p} features")
        if candidates[j].size and tree.threshold(m) < candidates[j][0]:
            tree = tree.swap_children(m).with_threshold(m, 1.0)
    return tree


def assignment_from_tree(vm: VarMap, tree: Tree, data: Dataset, attack: AttackModel) -> np.ndarray:
    """Hard-satisfying assignment whose cost equals the tree's adversarial error count."""
    if tree.depth != vm.depth:
        raise ValueError(f"tree depth {tree.depth} != encoding depth {vm.depth}")
    tree = normalize_for_encoding(tree, vm.candidates)
    cands = vm.candidates
    values = np.zeros(vm.n_vars + 1, dtype=bool)
    lo, hi = attack.boxes(data.features)
    nodes = range(1, n_nodes(vm.depth) + 1)
    for m in nodes:
        j, th = tree.feature(m), tree.threshold(m)
        values[vm.a[j, m]] = True
        for v in range(cands[j].size):
            values[vm.b[m, j, v]] = th < cands[j][v]
        for i in range(vm.n):
            vl = cands.left_index(j, lo[i, j])
            vr = cands.right_index(j, hi[i, j])
            values[vm.s[i, m, 0]] = vl == BELOW or not values[vm.b[m, j, vl]]
            values[vm.s[i, m, 1]] = vr == cands[j].size or values[vm.b[m, j, vr]]
    for t in range(n_leaves(vm.depth)):
        values[vm.c[t]] = bool(tree.leaves[t])
    for i in range(vm.n):
        for t in range(n_leaves(vm.depth)):
            path = all(values[vm.s[i, m, 0]] for m in left_ancestors(vm.depth, t)) and all(
                values[vm.s[i, m, 1]] for m in right_ancestors(vm.depth, t)
            )
            if path and tree.leaves[t] != data.labels[i]:
                values[vm.e[i]] = True
                break
    return values
