"""Candidate split positions derived from perturbed sample endpoints."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import AttackModel, Dataset

BELOW = -1
"""Sentinel from :meth:`ThresholdCandidates.left_index` when a value is below every candidate."""


@dataclass(frozen=True)
class ThresholdCandidates:
    """Sorted, deduplicated candidate positions per feature.

    Features without candidates (constant columns) cannot be split on.
    """

    values: tuple

    def __post_init__(self):
        vals = []
        for v in self.values:
            v = np.array(v, dtype=float)
            if v.size > 1 and not np.all(np.diff(v) > 0):
                raise ValueError("candidate lists must be strictly increasing")
            v.setflags(write=False)
            vals.append(v)
        object.__setattr__(self, "values", tuple(vals))

    @property
    def p(self) -> int:
        return len(self.values)

    def __getitem__(self, j: int) -> np.ndarray:
        return self.values[j]

    def usable_features(self) -> list[int]:
        return [j for j, v in enumerate(self.values) if v.size]

    def min_gap(self) -> float:
        gaps = [np.diff(v).min() for v in self.values if v.size > 1]
        return float(min(gaps)) if gaps else float("inf")

    def left_index(self, j: int, value: float) -> int:
        """Index of the largest candidate <= value, or ``BELOW``."""
        return int(np.searchsorted(self.values[j], value, side="right")) - 1

    def right_index(self, j: int, value: float) -> int:
        """Index of the smallest candidate >= value; ``len(values[j])`` means above all."""
        return int(np.searchsorted(self.values[j], value, side="left"))

    def gap_index(self, j: int, threshold: float) -> int:
        """Number of candidates <= threshold, i.e. the index of the first candidate right of it."""
        return int(np.searchsorted(self.values[j], threshold, side="right"))

    def threshold_for_gap(self, j: int, k: int) -> Optional[float]:
        """Representative threshold for the gap left of candidate ``k``.

        ``k == 0`` is the gap below every candidate, ``k == len`` the gap above.
        Returns None when the lower outer gap is not representable inside [0, 1].
        A feature without candidates has a single gap, represented by 1.0.
        """
        v = self.values[j]
        if not 0 <= k <= v.size:
            raise IndexError(f"gap {k} out of range for feature {j}")
        if v.size == 0:
            return 1.0
        if k == 0:
            return float(v[0]) / 2.0 if v[0] > 0.0 else None
        if k == v.size:
            return (float(v[-1]) + 1.0) / 2.0 if v[-1] < 1.0 else 1.0
        return (float(v[k - 1]) + float(v[k])) / 2.0

    def split_thresholds(self, j: int) -> list[float]:
        """One threshold per distinct split behaviour of feature ``j``, ascending."""
        out = []
        for k in range(self.values[j].size + 1):
            t = self.threshold_for_gap(j, k)
            if t is not None:
                out.append(t)
        return out

    def all_splits(self) -> list[tuple[int, float]]:
        return [(j, t) for j in self.usable_features() for t in self.split_thresholds(j)]


def candidate_thresholds(data: Dataset, attack: AttackModel, mode: str = "endpoints") -> ThresholdCandidates:
    """Candidate split positions per feature.

    ``mode="endpoints"`` uses the clipped box corners ``x - delta_left`` and
    ``x + delta_right`` of every sample; ``mode="raw"`` uses the unique feature
    values instead. Constant features get no candidates.
    """
    attack.check(data.p)
    X = data.features
    if mode == "endpoints":
        lo, hi = attack.boxes(X)
        pools = [np.concatenate([lo[:, j], hi[:, j]]) for j in range(data.p)]
    elif mode == "raw":
        pools = [X[:, j] for j in range(data.p)]
    else:
        raise ValueError(f"unknown candidate mode {mode!r}")
    values = []
    for j in range(data.p):
        col = X[:, j]
        if col.size == 0 or np.all(col == col[0]):
            values.append(np.empty(0))
        else:
            values.append(np.unique(pools[j]))
    return ThresholdCandidates(tuple(values))
