"""Dataset ingestion, min-max scaling and the box-shaped attack model."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix scaled to [0, 1] with binary labels."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise DataError(f"features must be 2-dimensional, got shape {X.shape}")
        if X.shape[1] < 1:
            raise DataError("dataset needs at least one feature")
        if y.shape != (X.shape[0],):
            raise DataError(f"expected {X.shape[0]} labels, got shape {y.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain NaN or infinite values")
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise DataError("features must lie in [0, 1]; scale them first")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"expected {X.shape[1]} feature names, got {len(names)}")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y.astype(np.int64)))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.features[index], self.labels[index], self.feature_names)

    def majority_label(self) -> int:
        """Most frequent label; ties go to 0."""
        return int(np.sum(self.labels == 1) > np.sum(self.labels == 0))

    def majority_fraction(self) -> float:
        if self.n == 0:
            return 1.0
        ones = int(np.sum(self.labels))
        return max(ones, self.n - ones) / self.n


@dataclass(frozen=True)
class ScalingInfo:
    """Per-feature min/max of the raw data used for min-max scaling."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "minimum", _frozen(np.asarray(self.minimum, dtype=float)))
        object.__setattr__(self, "maximum", _frozen(np.asarray(self.maximum, dtype=float)))

    @property
    def degenerate(self) -> np.ndarray:
        return self.maximum == self.minimum

    def transform(self, raw, clip: bool = True) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        span = np.where(self.degenerate, 1.0, self.maximum - self.minimum)
        scaled = (raw - self.minimum) / span
        scaled = np.where(self.degenerate, 0.5, scaled)
        if clip:
            scaled = np.clip(scaled, 0.0, 1.0)
        return scaled

    def inverse_transform(self, scaled) -> np.ndarray:
        scaled = np.asarray(scaled, dtype=float)
        raw = self.minimum + scaled * (self.maximum - self.minimum)
        return np.where(self.degenerate, self.minimum, raw)

    def to_dict(self) -> dict:
        return {"min": [float(v) for v in self.minimum], "max": [float(v) for v in self.maximum]}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingInfo":
        return cls(np.asarray(d["min"], dtype=float), np.asarray(d["max"], dtype=float))


class RawData(NamedTuple):
    matrix: np.ndarray
    labels: np.ndarray
    feature_names: tuple


def load_csv(path) -> RawData:
    """Read a CSV with a header row; the last column holds the 0/1 label.

    Raises:
        FileNotFoundError: if ``path`` does not exist.
        DataError: on ragged rows, non-numeric cells or labels outside {0, 1}.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        header = [h.strip() for h in header]
        if len(header) < 2:
            raise DataError(f"{path}: need at least one feature column and a label column")
        width = len(header)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != width:
                raise DataError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
            values = []
            for col, cell in enumerate(row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {col + 1} ({header[col]!r}): "
                        f"non-numeric value {cell!r}"
                    ) from None
            label = values[-1]
            if label not in (0.0, 1.0):
                raise DataError(f"{path}: row {lineno}: label {cell.strip()!r} is not 0 or 1")
            rows.append(values[:-1])
            labels.append(int(label))
    matrix = np.array(rows, dtype=float).reshape(len(rows), width - 1)
    return RawData(matrix, np.array(labels, dtype=np.int64), tuple(header[:-1]))


def scale_features(raw, labels=None, feature_names: Sequence[str] = ()):
    """Min-max scale every column to [0, 1].

    Constant columns map to 0.5 and are flagged in ``ScalingInfo.degenerate``.
    Returns ``(Dataset, ScalingInfo)``; without labels the dataset gets all-zero labels.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise DataError(f"expected a 2-d matrix, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise DataError("raw data contains NaN or infinite values")
    if raw.shape[0] == 0:
        lo = np.zeros(raw.shape[1])
        hi = np.zeros(raw.shape[1])
    else:
        lo = raw.min(axis=0)
        hi = raw.max(axis=0)
    info = ScalingInfo(lo, hi)
    if labels is None:
        labels = np.zeros(raw.shape[0], dtype=np.int64)
    return Dataset(info.transform(raw), labels, tuple(feature_names)), info


@dataclass(frozen=True)
class AttackModel:
    """Box attack: feature j may decrease by ``delta_left[j]`` and increase by ``delta_right[j]``."""

    delta_left: np.ndarray
    delta_right: np.ndarray
    epsilon: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        dl = np.asarray(self.delta_left, dtype=float).reshape(-1)
        dr = np.asarray(self.delta_right, dtype=float).reshape(-1)
        if dl.shape != dr.shape:
            raise ValueError("delta_left and delta_right must have the same length")
        if not (np.all(np.isfinite(dl)) and np.all(np.isfinite(dr))):
            raise ValueError("perturbation sizes must be finite")
        if np.any(dl < 0) or np.any(dr < 0):
            raise ValueError("perturbation sizes must be non-negative")
        object.__setattr__(self, "delta_left", _frozen(dl))
        object.__setattr__(self, "delta_right", _frozen(dr))

    @classmethod
    def from_epsilon(cls, epsilon: float, p: int) -> "AttackModel":
        if not math.isfinite(epsilon) or epsilon < 0:
            raise ValueError(f"epsilon must be a non-negative number, got {epsilon}")
        return cls(np.full(p, float(epsilon)), np.full(p, float(epsilon)), epsilon=float(epsilon))

    @property
    def p(self) -> int:
        return self.delta_left.shape[0]

    def check(self, p: int) -> None:
        if self.p != p:
            raise ValueError(f"attack model covers {self.p} features, data has {p}")

    def boxes(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of every sample's perturbation box, clipped to [0, 1]."""
        X = np.asarray(X, dtype=float)
        self.check(X.shape[-1])
        lo = np.clip(X - self.delta_left, 0.0, 1.0)
        hi = np.clip(X + self.delta_right, 0.0, 1.0)
        return lo, hi
