"""Mixed-integer linear models for robust tree learning, written in CPLEX LP format.

Two threshold formulations are supported. ``continuous`` gives each node one real
threshold ``b_m`` in [0, 1] and links it to the reachability indicators with big-M
constraints. ``binary`` reuses the ordered threshold indicators of the MaxSAT
encoding, with every clause turned into a 0-1 inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adversary import error_count
from .candidates import BELOW, ThresholdCandidates
from .data import AttackModel, Dataset
from .errors import AssignmentError, VerificationError
from .maxsat import encoding_candidates, normalize_for_encoding, tree_from_choices
from .tree import Tree, left_ancestors, n_leaves, n_nodes, right_ancestors

MODES = ("continuous", "binary")
BINARY_TOL = 1e-4
SNAP_TOL = 1e-6


@dataclass(frozen=True)
class Variable:
    name: str
    binary: bool
    lb: float = 0.0
    ub: float = 1.0


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple  # ((coef, var_name), ...)
    sense: str  # ">=", "<=" or "="
    rhs: float

    def satisfied(self, values, tol: float = 1e-9) -> bool:
        lhs = sum(c * values[v] for c, v in self.terms)
        if self.sense == ">=":
            return lhs >= self.rhs - tol
        if self.sense == "<=":
            return lhs <= self.rhs + tol
        return abs(lhs - self.rhs) <= tol


@dataclass
class MilpModel:
    mode: str
    depth: int
    candidates: ThresholdCandidates
    features: tuple
    big_m: float
    delta: float
    labels: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    variables: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    objective: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def var_names(self) -> list[str]:
        return [v.name for v in self.variables]

    def violated(self, values, tol: float = 1e-9) -> list[str]:
        """Names of constraints (and bounds) that ``values`` violates."""
        bad = [c.name for c in self.constraints if not c.satisfied(values, tol)]
        for v in self.variables:
            x = values[v.name]
            if x < v.lb - tol or x > v.ub + tol:
                bad.append(f"bound:{v.name}")
            elif v.binary and min(abs(x), abs(x - 1)) > tol:
                bad.append(f"integrality:{v.name}")
        return bad

    def objective_value(self, values) -> float:
        return float(sum(c * values[v] for c, v in self.objective))

    # variable names; node index k = m - 1, leaves and samples are 0-based
    @staticmethod
    def a_name(j: int, m: int) -> str:
        return f"a_{j}_{m - 1}"

    def b_name(self, m: int, j: Optional[int] = None, v: Optional[int] = None) -> str:
        if self.mode == "continuous":
            return f"b_{m - 1}"
        offset = 0
        for f in self.features:
            if f == j:
                break
            offset += self.candidates[f].size
        return f"b_{offset + v}_{m - 1}"

    @staticmethod
    def s_name(i: int, m: int, side: int) -> str:
        return f"s_{i}_{m - 1}_{side}"

    @staticmethod
    def c_name(t: int) -> str:
        return f"c_{t}"

    @staticmethod
    def e_name(i: int) -> str:
        return f"e_{i}"


def build_milp(
    data: Dataset,
    attack: AttackModel,
    depth: int,
    mode: str = "continuous",
    delta: float = 1e-5,
    big_m: Optional[float] = None,
) -> MilpModel:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if depth < 1:
        raise ValueError("MILP needs depth >= 1")
    if data.n < 1:
        raise ValueError("MILP needs at least one sample")
    attack.check(data.p)
    cands, features = encoding_candidates(data, attack)
    if big_m is None:
        big_m = max(2.0, 1.0 + float(np.max(attack.delta_left, initial=0.0)), 1.0 + float(np.max(attack.delta_right, initial=0.0)))
    gap = cands.min_gap()
    if delta <= 0:
        raise ValueError("delta must be positive")
    if math.isfinite(gap):
        delta = min(delta, gap / 2.0)
    lo, hi = attack.boxes(data.features)
    model = MilpModel(mode, depth, cands, features, float(big_m), float(delta), data.labels.copy(), lo, hi)
    nodes = range(1, n_nodes(depth) + 1)
    var = model.variables
    for m in nodes:
        for j in features:
            var.append(Variable(model.a_name(j, m), True))
    for m in nodes:
        if mode == "continuous":
            var.append(Variable(model.b_name(m), False, 0.0, 1.0))
        else:
            for j in features:
                for v in range(cands[j].size):
                    var.append(Variable(model.b_name(m, j, v), True))
    for i in range(data.n):
        for m in nodes:
            for side in (0, 1):
                var.append(Variable(model.s_name(i, m, side), True))
    for t in range(n_leaves(depth)):
        var.append(Variable(model.c_name(t), True))
    for i in range(data.n):
        var.append(Variable(model.e_name(i), True))

    cons = model.constraints
    for m in nodes:
        cons.append(Constraint(f"sel_{m - 1}", tuple((1.0, model.a_name(j, m)) for j in features), "=", 1.0))
    M = model.big_m
    if mode == "continuous":
        for i in range(data.n):
            for m in nodes:
                b = model.b_name(m)
                left = [(float(lo[i, j]), model.a_name(j, m)) for j in features if lo[i, j] != 0.0]
                left += [(-1.0, b), (M, model.s_name(i, m, 0))]
                cons.append(Constraint(f"left_{i}_{m - 1}", tuple(left), ">=", model.delta))
                right = [(float(hi[i, j]), model.a_name(j, m)) for j in features if hi[i, j] != 0.0]
                right += [(-1.0, b), (-M, model.s_name(i, m, 1))]
                cons.append(Constraint(f"right_{i}_{m - 1}", tuple(right), "<=", 0.0))
    else:
        for m in nodes:
            for j in features:
                for v in range(cands[j].size - 1):
                    cons.append(
                        Constraint(
                            f"ord_{m - 1}_{j}_{v}",
                            ((1.0, model.b_name(m, j, v)), (-1.0, model.b_name(m, j, v + 1))),
                            "<=",
                            0.0,
                        )
                    )
        for i in range(data.n):
            for m in nodes:
                for j in features:
                    a = model.a_name(j, m)
                    vl = cands.left_index(j, lo[i, j])
                    terms = [(-1.0, a), (1.0, model.s_name(i, m, 0))]
                    if vl != BELOW:
                        terms.append((1.0, model.b_name(m, j, vl)))
                    cons.append(Constraint(f"left_{i}_{m - 1}_{j}", tuple(terms), ">=", 0.0))
                    vr = cands.right_index(j, hi[i, j])
                    terms = [(-1.0, a), (1.0, model.s_name(i, m, 1))]
                    rhs = 0.0
                    if vr != cands[j].size:
                        terms.append((-1.0, model.b_name(m, j, vr)))
                        rhs = -1.0
                    cons.append(Constraint(f"right_{i}_{m - 1}_{j}", tuple(terms), ">=", rhs))
    for t in range(n_leaves(depth)):
        lefts, rights = left_ancestors(depth, t), right_ancestors(depth, t)
        for i in range(data.n):
            terms = [(1.0, model.e_name(i))]
            terms += [(-1.0, model.s_name(i, m, 0)) for m in lefts]
            terms += [(-1.0, model.s_name(i, m, 1)) for m in rights]
            if data.labels[i] == 0:
                terms.append((-1.0, model.c_name(t)))
                rhs = -float(depth)
            else:
                terms.append((1.0, model.c_name(t)))
                rhs = 1.0 - depth
            cons.append(Constraint(f"err_{t}_{i}", tuple(terms), ">=", rhs))
    model.objective = [(1.0, model.e_name(i)) for i in range(data.n)]
    return model


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _linear(terms) -> str:
    parts = []
    for k, (coef, name) in enumerate(terms):
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = name if mag == 1.0 else f"{_num(mag)} {name}"
        if k == 0:
            parts.append(f"- {body}" if sign == "-" else body)
        else:
            parts.append(f"{sign} {body}")
    return " ".join(parts)


def _wrap(text: str, width: int = 200) -> list[str]:
    """Split a long expression over continuation lines at token boundaries."""
    if len(text) <= width:
        return [text]
    lines, current = [], ""
    for tok in text.split(" "):
        if current and len(current) + 1 + len(tok) > width and tok in "+-":
            lines.append(current)
            current = "  " + tok
        else:
            current = f"{current} {tok}" if current else tok
    lines.append(current)
    return lines


def write_lp(model: MilpModel, sink=None) -> str:
    """CPLEX LP text with Minimize / Subject To / Bounds / Binaries sections."""
    out = ["Minimize"]
    out += _wrap(" obj: " + _linear(model.objective))
    out.append("Subject To")
    for c in model.constraints:
        out += _wrap(f" {c.name}: {_linear(c.terms)} {c.sense} {_num(c.rhs)}")
    out.append("Bounds")
    for v in model.variables:
        if not v.binary:
            out.append(f" {_num(v.lb)} <= {v.name} <= {_num(v.ub)}")
    out.append("Binaries")
    names = [v.name for v in model.variables if v.binary]
    for k in range(0, len(names), 10):
        out.append(" " + " ".join(names[k : k + 10]))
    out.append("End")
    text = "\n".join(out) + "\n"
    if sink is not None:
        sink.write(text)
    return text


def warm_start_values(model: MilpModel, tree: Tree) -> dict:
    """Feasible assignment encoding ``tree``; its objective is the tree's error count."""
    if tree.depth != model.depth:
        raise ValueError(f"tree depth {tree.depth} != model depth {model.depth}")
    if np.any(tree.thresholds < 0.0) or np.any(tree.thresholds > 1.0):
        raise ValueError("tree thresholds must lie in [0, 1]")
    cands = model.candidates
    tree = normalize_for_encoding(tree, cands)
    values = {v.name: 0.0 for v in model.variables}
    nodes = range(1, n_nodes(model.depth) + 1)
    reach_left = np.zeros((model.n, len(nodes) + 1), dtype=bool)
    reach_right = np.zeros_like(reach_left)
    for m in nodes:
        j, th = tree.feature(m), tree.threshold(m)
        if j not in model.features:
            raise ValueError(f"node {m} splits on feature {j}, which the model cannot select")
        values[model.a_name(j, m)] = 1.0
        k = cands.gap_index(j, th)
        if model.mode == "continuous":
            # snap to the candidate just left of the threshold: same split, exact in the model
            values[model.b_name(m)] = float(cands[j][k - 1]) if k else float(th)
        else:
            for v in range(cands[j].size):
                values[model.b_name(m, j, v)] = 1.0 if v >= k else 0.0
        for i in range(model.n):
            vl = cands.left_index(j, model.lo[i, j])
            vr = cands.right_index(j, model.hi[i, j])
            reach_left[i, m] = vl == BELOW or vl < k
            reach_right[i, m] = vr == cands[j].size or vr >= k
            values[model.s_name(i, m, 0)] = float(reach_left[i, m])
            values[model.s_name(i, m, 1)] = float(reach_right[i, m])
    for t in range(n_leaves(model.depth)):
        values[model.c_name(t)] = float(tree.leaves[t])
    for i in range(model.n):
        for t in range(n_leaves(model.depth)):
            path = all(reach_left[i, m] for m in left_ancestors(model.depth, t)) and all(
                reach_right[i, m] for m in right_ancestors(model.depth, t)
            )
            if path and tree.leaves[t] != model.labels[i]:
                values[model.e_name(i)] = 1.0
                break
    return values


def format_values(model: MilpModel, values: dict) -> str:
    lines = []
    for v in model.variables:
        x = values[v.name]
        lines.append(f"{v.name} {int(round(x)) if v.binary else _num(x)}")
    return "\n".join(lines) + "\n"


def write_warm_start(model: MilpModel, tree: Tree, sink=None) -> str:
    """``name value`` lines (MST-style) assigning every variable of ``model`` from ``tree``."""
    text = format_values(model, warm_start_values(model, tree))
    if sink is not None:
        sink.write(text)
    return text


def decode_tree(model: MilpModel, values: dict, data: Dataset, attack: AttackModel):
    """Rebuild the tree from a solver solution and verify its error count.

    Returns ``(tree, errors)``. Binaries must be within 1e-4 of 0 or 1.
    """
    rounded = {}
    for v in model.variables:
        if v.name not in values:
            raise AssignmentError(f"solution has no value for {v.name}")
        x = float(values[v.name])
        if v.binary:
            r = round(x)
            if abs(x - r) > BINARY_TOL or r not in (0, 1):
                raise AssignmentError(f"{v.name} = {x} is not binary")
            x = r
        rounded[v.name] = x
    cands = model.candidates
    features, thresholds, gaps = [], [], []
    for m in range(1, n_nodes(model.depth) + 1):
        chosen = [j for j in model.features if rounded[model.a_name(j, m)] == 1]
        if not chosen:
            raise AssignmentError(f"node {m} selects no feature")
        j = chosen[0]
        features.append(j)
        if model.mode == "continuous":
            th = min(max(rounded[model.b_name(m)], 0.0), 1.0)
            near = np.flatnonzero(np.abs(cands[j] - th) <= SNAP_TOL)
            if near.size:
                th = float(cands[j][near[0]])
            thresholds.append(th)
        else:
            block = [rounded[model.b_name(m, j, v)] == 1 for v in range(cands[j].size)]
            gaps.append(block.index(True) if any(block) else len(block))
    leaves = [int(rounded[model.c_name(t)]) for t in range(n_leaves(model.depth))]
    if model.mode == "continuous":
        tree = Tree(model.depth, features, thresholds, leaves)
    else:
        tree = tree_from_choices(model.depth, cands, features, gaps, leaves)
    cost = int(sum(rounded[model.e_name(i)] for i in range(model.n)))
    errors = error_count(tree, data, attack)
    if errors > cost:
        raise VerificationError(f"decoded tree makes {errors} errors but the solution claims {cost}")
    return tree, errors
