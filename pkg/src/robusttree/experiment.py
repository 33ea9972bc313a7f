"""Train/test protocol: seeded stratified split, depth chosen by stratified CV."""

from __future__ import annotations

import csv
import io
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold, train_test_split

from .adversary import accuracy, adversarial_accuracy
from .bound import adversarial_accuracy_bound
from .bridge import METHODS, SolverConfig, fit
from .data import AttackModel, Dataset, load_csv, scale_features
from .errors import NoIncumbentError
from .exact import SearchBudget
from .tree import Tree

log = logging.getLogger(__name__)

COLUMNS = (
    "attack", "method", "depth", "selected", "cv_adv_accuracy", "train_adv_accuracy",
    "test_adv_accuracy", "test_accuracy", "train_bound", "objective", "status", "error",
)


@dataclass(frozen=True)
class ExperimentPlan:
    data_path: str
    epsilons: tuple = (0.1,)
    deltas: Optional[tuple] = None  # (left, right) per-feature vectors, used instead of epsilons
    depths: tuple = (1, 2)
    methods: tuple = ("greedy", "exact")
    seed: int = 0
    train_fraction: float = 0.8
    folds: int = 3
    solver: Optional[SolverConfig] = None
    time_limit: Optional[float] = None
    node_limit: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train fraction must lie in (0, 1)")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if not self.depths or min(self.depths) < 0:
            raise ValueError("depths must be nonnegative and nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if self.deltas is None and not self.epsilons:
            raise ValueError("give epsilons or delta vectors")

    def attacks(self, p: int) -> list[tuple[str, AttackModel]]:
        if self.deltas is not None:
            left, right = self.deltas
            return [("delta", AttackModel(left, right))]
        return [(f"eps={e!r}", AttackModel.from_epsilon(float(e), p)) for e in self.epsilons]


def stratified_split(y: np.ndarray, train_fraction: float, seed: int):
    """Train and test indices, both sorted, with class proportions preserved."""
    idx = np.arange(y.size)
    try:
        train, test = train_test_split(idx, train_size=train_fraction, stratify=y, random_state=seed)
    except ValueError:
        warnings.warn("a class is too small to stratify; splitting without stratification", RuntimeWarning)
        train, test = train_test_split(idx, train_size=train_fraction, random_state=seed)
    return np.sort(train), np.sort(test)


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
        return [(np.sort(a), np.sort(b)) for a, b in skf.split(np.zeros(y.size), y)]


@dataclass
class CellResult:
    tree: Optional[Tree] = None
    objective: Optional[int] = None
    status: str = ""
    error: str = ""


def _fit_cell(args) -> CellResult:
    data, attack, depth, method, plan = args
    budget = SearchBudget(plan.time_limit, plan.node_limit)
    try:
        res = fit(data, attack, depth, method, warm=method.startswith("milp"), config=plan.solver, budget=budget)
        return CellResult(res.tree, res.objective, str(res.status))
    except NoIncumbentError:
        # no solution at all: predict the training majority everywhere
        tree = Tree.constant(depth, data.majority_label())
        return CellResult(tree, None, "fallback")
    except Exception as exc:  # recorded per cell, the table carries on
        return CellResult(error=f"{type(exc).__name__}: {exc}")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 12))
    return str(x)


def run_experiment(plan: ExperimentPlan) -> list[dict]:
    raw = load_csv(plan.data_path)
    y_all = raw.labels
    train_idx, test_idx = stratified_split(y_all, plan.train_fraction, plan.seed)
    train, scaling = scale_features(raw.matrix[train_idx], y_all[train_idx], raw.feature_names)
    test = Dataset(scaling.transform(raw.matrix[test_idx]), y_all[test_idx], raw.feature_names)
    folds = stratified_folds(train.labels, plan.folds, plan.seed)

    jobs = []
    for name, attack in plan.attacks(train.p):
        for method in plan.methods:
            for depth in plan.depths:
                for a, _ in folds:
                    jobs.append((train.subset(a), attack, depth, method, plan))
                jobs.append((train, attack, depth, method, plan))
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(_fit_cell, jobs))
    else:
        results = [_fit_cell(j) for j in jobs]

    rows, k = [], 0
    for name, attack in plan.attacks(train.p):
        bound = adversarial_accuracy_bound(train, attack) if train.n else None
        for method in plan.methods:
            block = []
            for depth in plan.depths:
                scores, err = [], ""
                for _, b in folds:
                    cell = results[k]
                    k += 1
                    if cell.tree is None:
                        err = err or cell.error
                    else:
                        scores.append(adversarial_accuracy(cell.tree, train.subset(b), attack))
                final = results[k]
                k += 1
                cv = float(np.mean(scores)) if len(scores) == len(folds) else None
                row = {
                    "attack": name, "method": method, "depth": depth, "selected": False,
                    "cv_adv_accuracy": cv, "train_adv_accuracy": None, "test_adv_accuracy": None,
                    "test_accuracy": None, "train_bound": bound, "objective": final.objective,
                    "status": final.status or "error", "error": final.error or err,
                }
                if final.tree is not None:
                    row["train_adv_accuracy"] = adversarial_accuracy(final.tree, train, attack)
                    row["test_adv_accuracy"] = adversarial_accuracy(final.tree, test, attack)
                    row["test_accuracy"] = accuracy(final.tree, test)
                block.append(row)
            scored = [r for r in block if r["cv_adv_accuracy"] is not None and r["test_adv_accuracy"] is not None]
            if scored:
                # highest CV score, shallower depth on ties
                best = max(scored, key=lambda r: (r["cv_adv_accuracy"], -r["depth"]))
                best["selected"] = True
            rows.extend(block)
    return rows


def write_results_csv(rows: Sequence[dict], sink=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in COLUMNS])
    text = buf.getvalue()
    if sink is not None:
        sink.write(text)
    return text
