"""Complete binary decision trees in heap layout.

Decision nodes are numbered 1 .. 2**depth - 1 (children of ``m`` are ``2m`` and
``2m + 1``) and stored at position ``m - 1``. Leaves are numbered 0 .. 2**depth - 1
from left to right; leaf ``t`` sits at heap index ``2**depth + t``.
A sample goes left at a node iff its value is <= the threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np


class TreeFormatError(ValueError):
    """Raised when a serialized tree does not match the schema."""


def n_nodes(depth: int) -> int:
    return 2**depth - 1


def n_leaves(depth: int) -> int:
    return 2**depth


@lru_cache(maxsize=None)
def leaf_path(depth: int, t: int) -> tuple:
    """``((m, went_right), ...)`` from the root down to leaf ``t``."""
    heap = 2**depth + t
    path = []
    while heap > 1:
        path.append((heap // 2, heap % 2))
        heap //= 2
    return tuple(reversed(path))


def ancestors(depth: int, t: int) -> list[int]:
    return [m for m, _ in leaf_path(depth, t)]


def left_ancestors(depth: int, t: int) -> list[int]:
    return [m for m, right in leaf_path(depth, t) if not right]


def right_ancestors(depth: int, t: int) -> list[int]:
    return [m for m, right in leaf_path(depth, t) if right]


def subtree_leaves(depth: int, m: int) -> range:
    """Leaves below decision node ``m``."""
    level = int(math.log2(m))
    width = 2 ** (depth - level)
    first = m * width - 2**depth
    return range(first, first + width)


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Tree:
    depth: int
    features: np.ndarray
    thresholds: np.ndarray
    leaves: np.ndarray

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        features = _frozen(self.features, np.int64)
        thresholds = _frozen(self.thresholds, float)
        leaves = _frozen(self.leaves, np.int64)
        if features.size != n_nodes(self.depth) or thresholds.size != n_nodes(self.depth):
            raise ValueError(f"depth {self.depth} needs {n_nodes(self.depth)} decision nodes")
        if leaves.size != n_leaves(self.depth):
            raise ValueError(f"depth {self.depth} needs {n_leaves(self.depth)} leaves")
        if np.any(features < 0):
            raise ValueError("feature indices must be non-negative")
        if not np.all(np.isfinite(thresholds)):
            raise ValueError("thresholds must be finite")
        if not np.all((leaves == 0) | (leaves == 1)):
            raise ValueError("leaf classes must be 0 or 1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "leaves", leaves)

    @classmethod
    def constant(cls, depth: int, label: int, feature: int = 0) -> "Tree":
        """Tree predicting ``label`` everywhere; every node sends all points left."""
        return cls(depth, [feature] * n_nodes(depth), [1.0] * n_nodes(depth), [label] * n_leaves(depth))

    def feature(self, m: int) -> int:
        return int(self.features[m - 1])

    def threshold(self, m: int) -> float:
        return float(self.thresholds[m - 1])

    def leaf_index(self, X) -> np.ndarray:
        """Leaf reached by every row of ``X`` under ordinary traversal."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        heap = np.ones(X.shape[0], dtype=np.int64)
        for _ in range(self.depth):
            f = self.features[heap - 1]
            th = self.thresholds[heap - 1]
            go_right = X[np.arange(X.shape[0]), f] > th
            heap = 2 * heap + go_right
        return heap - 2**self.depth

    def predict(self, X) -> np.ndarray:
        return self.leaves[self.leaf_index(X)]

    def replace(self, features=None, thresholds=None, leaves=None) -> "Tree":
        return Tree(
            self.depth,
            self.features if features is None else features,
            self.thresholds if thresholds is None else thresholds,
            self.leaves if leaves is None else leaves,
        )

    def with_threshold(self, m: int, value: float) -> "Tree":
        th = self.thresholds.copy()
        th[m - 1] = value
        return self.replace(thresholds=th)

    def swap_children(self, m: int) -> "Tree":
        """Exchange the left and right subtrees of node ``m`` (the split itself is kept)."""
        features = self.features.copy()
        thresholds = self.thresholds.copy()
        leaves = self.leaves.copy()
        left, right = 2 * m, 2 * m + 1
        width = 1
        while left < 2**self.depth:
            a = slice(left - 1, left - 1 + width)
            b = slice(right - 1, right - 1 + width)
            features[a], features[b] = features[b].copy(), features[a].copy()
            thresholds[a], thresholds[b] = thresholds[b].copy(), thresholds[a].copy()
            left, right, width = 2 * left, 2 * right, 2 * width
        a = slice(left - 2**self.depth, left - 2**self.depth + width)
        b = slice(right - 2**self.depth, right - 2**self.depth + width)
        leaves[a], leaves[b] = leaves[b].copy(), leaves[a].copy()
        return Tree(self.depth, features, thresholds, leaves)

    def same_as(self, other: "Tree") -> bool:
        return (
            self.depth == other.depth
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.thresholds, other.thresholds)
            and np.array_equal(self.leaves, other.leaves)
        )


def simplify(tree: Tree) -> Tree:
    """Remove splits that cannot separate anything inside their node's region.

    A node whose threshold lies at or above the region's upper bound on its feature
    gets threshold 1.0 (everything left). A node whose region lies entirely right of
    the threshold has its subtrees swapped and threshold 1.0. The prediction function
    on [0, 1]^p is unchanged, and afterwards every split is decided by the sample's
    own box alone, without needing the ancestors' constraints.
    """

    def visit(t: Tree, m: int, lower: dict, upper: dict) -> Tree:
        if m >= 2**t.depth:
            return t
        j, th = t.feature(m), t.threshold(m)
        lo, strict = lower.get(j, (0.0, False))
        hi = upper.get(j, 1.0)
        if th >= hi:
            if th != 1.0:
                t = t.with_threshold(m, 1.0)
            return visit(t, 2 * m, lower, upper)
        if th < lo or (strict and th <= lo):
            t = t.swap_children(m).with_threshold(m, 1.0)
            return visit(t, 2 * m, lower, upper)
        t = visit(t, 2 * m, lower, {**upper, j: th})
        return visit(t, 2 * m + 1, {**lower, j: (th, True)}, upper)

    return visit(tree, 1, {}, {})


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def tree_to_json(tree: Tree) -> str:
    """Serialize to ``{"depth", "nodes": [{"feature", "threshold"}], "leaves"}`` in heap order."""
    nodes = ", ".join(
        f'{{"feature": {int(f)}, "threshold": {_fmt(th)}}}'
        for f, th in zip(tree.features, tree.thresholds)
    )
    leaves = ", ".join(str(int(c)) for c in tree.leaves)
    return f'{{"depth": {tree.depth}, "nodes": [{nodes}], "leaves": [{leaves}]}}'


def tree_from_json(source, n_features: Optional[int] = None) -> Tree:
    """Parse a tree from JSON text or an already-decoded dict.

    Raises:
        TreeFormatError: naming the JSON path of the first violation.
    """
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise TreeFormatError(f"$: invalid JSON ({exc})") from None
    else:
        doc = source
    if not isinstance(doc, dict):
        raise TreeFormatError("$: expected an object")

    def integer(value, path):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TreeFormatError(f"{path}: expected an integer, got {value!r}")
        return value

    for key in ("depth", "nodes", "leaves"):
        if key not in doc:
            raise TreeFormatError(f"$.{key}: missing")
    depth = integer(doc["depth"], "$.depth")
    if depth < 0:
        raise TreeFormatError(f"$.depth: must be >= 0, got {depth}")
    nodes, leaves = doc["nodes"], doc["leaves"]
    if not isinstance(nodes, list) or len(nodes) != n_nodes(depth):
        raise TreeFormatError(f"$.nodes: expected a list of {n_nodes(depth)} nodes")
    if not isinstance(leaves, list) or len(leaves) != n_leaves(depth):
        raise TreeFormatError(f"$.leaves: expected a list of {n_leaves(depth)} classes")
    features, thresholds = [], []
    for k, node in enumerate(nodes):
        path = f"$.nodes[{k}]"
        if not isinstance(node, dict):
            raise TreeFormatError(f"{path}: expected an object")
        for key in ("feature", "threshold"):
            if key not in node:
                raise TreeFormatError(f"{path}.{key}: missing")
        f = integer(node["feature"], f"{path}.feature")
        if f < 0 or (n_features is not None and f >= n_features):
            bound = "" if n_features is None else f" < {n_features}"
            raise TreeFormatError(f"{path}.feature: {f} out of range (need 0 <= feature{bound})")
        th = node["threshold"]
        if isinstance(th, bool) or not isinstance(th, (int, float)) or not math.isfinite(th):
            raise TreeFormatError(f"{path}.threshold: expected a finite number, got {th!r}")
        features.append(f)
        thresholds.append(float(th))
    classes = []
    for k, c in enumerate(leaves):
        c = integer(c, f"$.leaves[{k}]")
        if c not in (0, 1):
            raise TreeFormatError(f"$.leaves[{k}]: class must be 0 or 1, got {c}")
        classes.append(c)
    return Tree(depth, features, thresholds, classes)
