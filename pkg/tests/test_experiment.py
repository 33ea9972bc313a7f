import csv
import io

import numpy as np
import pytest

from robusttree.experiment import (
    ExperimentPlan,
    run_experiment,
    stratified_folds,
    stratified_split,
    write_results_csv,
)


def noisy_xor(path, n=48, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 17, size=(n, 2)) / 16
    y = ((X[:, 0] > 0.5) ^ (X[:, 1] > 0.5)).astype(int)
    flip = rng.random(n) < 0.1
    y[flip] = 1 - y[flip]
    with open(path, "w") as fh:
        fh.write("a,b,label\n")
        for row, label in zip(X, y):
            fh.write(f"{row[0]},{row[1]},{label}\n")
    return path


def test_folds_are_stratified():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(9, 60))
        y = (rng.random(n) < rng.uniform(0.2, 0.8)).astype(int)
        if min(y.sum(), n - y.sum()) < 3:
            continue
        folds = stratified_folds(y, 3, seed=int(rng.integers(100)))
        seen = np.concatenate([b for _, b in folds])
        assert sorted(seen.tolist()) == list(range(n))
        for _, b in folds:
            expected = y.mean() * b.size
            assert abs(y[b].sum() - expected) <= 1


def test_split_is_seeded_and_stratified():
    y = np.array([0] * 30 + [1] * 20)
    a = stratified_split(y, 0.8, 3)
    b = stratified_split(y, 0.8, 3)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    train, test = a
    assert train.size == 40 and test.size == 10
    assert y[test].sum() == 4


def test_plan_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentPlan("x.csv", train_fraction=1.0)
    with pytest.raises(ValueError):
        ExperimentPlan("x.csv", folds=1)
    with pytest.raises(ValueError):
        ExperimentPlan("x.csv", methods=("cart",))


def test_experiment_table(tmp_path):
    path = noisy_xor(tmp_path / "xor.csv")
    plan = ExperimentPlan(str(path), epsilons=(0.05,), depths=(1, 2), methods=("greedy", "exact"), seed=4)
    rows = run_experiment(plan)
    assert len(rows) == 4
    for method in ("greedy", "exact"):
        assert sum(r["selected"] for r in rows if r["method"] == method) == 1
    by = {(r["method"], r["depth"]): r for r in rows}
    for depth in (1, 2):
        exact, greedy = by["exact", depth], by["greedy", depth]
        assert exact["status"] == "optimal"
        assert exact["train_adv_accuracy"] >= greedy["train_adv_accuracy"]
        assert exact["train_adv_accuracy"] <= exact["train_bound"]
        assert exact["error"] == "" and greedy["error"] == ""
    text = write_results_csv(rows)
    header = next(csv.reader(io.StringIO(text)))
    assert header[:3] == ["attack", "method", "depth"]


def test_experiment_is_byte_identical(tmp_path):
    path = noisy_xor(tmp_path / "xor.csv", seed=2)
    plan = ExperimentPlan(str(path), epsilons=(0.0, 0.1), depths=(1, 2), seed=9)
    assert write_results_csv(run_experiment(plan)) == write_results_csv(run_experiment(plan))


def test_parallel_matches_serial(tmp_path):
    path = noisy_xor(tmp_path / "xor.csv", seed=5)
    serial = ExperimentPlan(str(path), depths=(1, 2), seed=1)
    parallel = ExperimentPlan(str(path), depths=(1, 2), seed=1, workers=2)
    assert write_results_csv(run_experiment(serial)) == write_results_csv(run_experiment(parallel))


def test_failures_are_recorded_per_cell(tmp_path):
    path = noisy_xor(tmp_path / "xor.csv", seed=6)
    plan = ExperimentPlan(str(path), depths=(1,), methods=("greedy", "maxsat"))
    rows = run_experiment(plan)
    greedy = [r for r in rows if r["method"] == "greedy"][0]
    broken = [r for r in rows if r["method"] == "maxsat"][0]
    assert greedy["error"] == "" and greedy["selected"]
    assert "solver" in broken["error"] and broken["status"] == "error"


def test_no_incumbent_falls_back_to_majority(tmp_path):
    import sys

    from robusttree.bridge import SolverConfig
    from conftest import SOLVERS

    path = noisy_xor(tmp_path / "xor.csv", seed=7)
    solver = SolverConfig([sys.executable, str(SOLVERS / "fake_maxsat.py"), "silent", "{instance}"], timeout=0.3)
    plan = ExperimentPlan(str(path), depths=(1,), methods=("maxsat",), solver=solver, folds=2)
    (row,) = run_experiment(plan)
    assert row["status"] == "fallback" and row["error"] == ""
    assert row["objective"] is None and row["test_adv_accuracy"] is not None
