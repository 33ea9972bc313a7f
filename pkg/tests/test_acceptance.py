"""Acceptance suite: one printed PASS/FAIL line per criterion, then the assertion."""

import itertools
import os
import subprocess
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from robusttree import maxsat, milp
from robusttree.adversary import (
    accuracy,
    adversarial_accuracy,
    adversarial_errors,
    attack_witness,
    error_count,
    reachable_leaves,
)
from robusttree.bound import adversarial_accuracy_bound, hopcroft_karp
from robusttree.bridge import SolverConfig, fit
from robusttree.data import AttackModel
from robusttree.exact import Status, brute_force_reference, solve_exact
from robusttree.greedy import fit_greedy
from conftest import DATA, highs_solve, random_instance, rc2_solve, three_point, xor4
from test_bound import brute_matching, random_graph
from test_maxsat import stated_assignment
from test_tree import random_tree


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    return _report


@lru_cache(maxsize=None)
def oracle_instances():
    rng = np.random.default_rng(2024)
    return [random_instance(rng, max_n=16, max_p=3, max_depth=2, epsilons=(0.0, 0.05, 0.1)) for _ in range(200)]


def test_criterion_1_three_point_instance(report):
    start = time.perf_counter()
    data, attack = three_point()
    vm, inst = maxsat.build_encoding(data, attack, 1)
    _, cost = rc2_solve(inst)
    values = stated_assignment(vm, inst, data, attack)
    feasible = inst.violated_hard(values) == []
    e = [int(values[vm.e[i]]) for i in range(data.n)]
    tree, errors = maxsat.decode_tree(vm, values, data, attack, inst)
    acc = adversarial_accuracy(tree, data, attack)
    elapsed = time.perf_counter() - start
    ok = (cost == 1 and feasible and e == [0, 1, 0] and errors == 1
          and adversarial_errors(tree, data, attack).astype(int).tolist() == [0, 1, 0]
          and acc == 2 / 3 and elapsed < 1.0)
    report(1, ok, f"optimum cost {cost}, e={e}, adversarial accuracy {acc:.6f}, {elapsed:.3f}s")
    assert ok


def test_criterion_2_xor(report):
    start = time.perf_counter()
    data, attack = xor4()
    exact = fit(data, attack, 2, "exact")
    rc2 = SolverConfig(f"{sys.executable} -m pysat.examples.rc2 -vv {{instance}}", timeout=60)
    sat = fit(data, attack, 2, "maxsat", config=rc2)
    greedy = adversarial_accuracy(fit_greedy(data, attack, 2), data, attack)
    accs = [adversarial_accuracy(r.tree, data, attack) for r in (exact, sat)]
    elapsed = time.perf_counter() - start
    ok = (accs == [1.0, 1.0] and exact.status == Status.OPTIMAL and sat.status == Status.OPTIMAL
          and greedy <= 0.75 and elapsed < 5.0)
    report(2, ok, f"exact {accs[0]} ({exact.status}), maxsat {accs[1]} ({sat.status}), "
                  f"greedy {greedy}, {elapsed:.2f}s")
    assert ok


def encoder_objectives(data, attack, depth, tmp_path):
    """Decoded error counts of the MaxSAT and both MILP optima, or a diagnostic tuple."""
    got = {}
    vm, inst = maxsat.build_encoding(data, attack, depth)
    values, cost = rc2_solve(inst)
    _, errors = maxsat.decode_tree(vm, values, data, attack, inst)
    got["maxsat"] = errors if errors == cost else ("cost", cost, errors)
    for mode in milp.MODES:
        model = milp.build_milp(data, attack, depth, mode)
        path = tmp_path / f"{mode}.lp"
        path.write_text(milp.write_lp(model))
        status, objective, sol = highs_solve(path)
        _, errors = milp.decode_tree(model, sol, data, attack)
        got[mode] = errors if status == "Optimal" and round(objective) == errors else (status, objective, errors)
    return got


def test_criterion_3_oracle_equivalence(report, tmp_path):
    start = time.perf_counter()
    mismatches, constant = [], 0
    for k, (data, attack, depth) in enumerate(oracle_instances()):
        depths = [depth] if depth else [0, 1]
        if not depth:
            # the encoders start at depth 1, so depth-0 data is also solved at depth 1 by every method
            constant += 1
        for d in depths:
            brute = brute_force_reference(data, attack, d)
            exact = solve_exact(data, attack, d)
            got = {"exact": exact.objective}
            if exact.status != Status.OPTIMAL:
                got["status"] = exact.status
            if d:
                got.update(encoder_objectives(data, attack, d, tmp_path))
            if any(v != brute for v in got.values()):
                mismatches.append((k, d, brute, got))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 600
    report(3, ok, f"200 instances, brute force = exact = maxsat = milp (both modes) with "
                  f"{len(mismatches)} mismatches ({constant} depth-0 instances also solved at depth 1), {elapsed:.1f}s")
    assert ok, mismatches[:5]


def test_criterion_4_bound_dominance(report):
    start = time.perf_counter()
    violations = []
    for k, (data, attack, depth) in enumerate(oracle_instances()):
        best = 1 - solve_exact(data, attack, depth).objective / data.n
        if best > adversarial_accuracy_bound(data, attack) + 1e-12:
            violations.append(k)
        wide = AttackModel.from_epsilon(1.0, data.p)
        majority = max(np.sum(data.labels == 0), np.sum(data.labels == 1)) / data.n
        if adversarial_accuracy_bound(data, wide) != majority:
            violations.append(("majority", k))
    data, attack = xor4()
    xor_bound = adversarial_accuracy_bound(data, attack)
    elapsed = time.perf_counter() - start
    ok = not violations and xor_bound == 1.0 and elapsed < 60
    report(4, ok, f"optimum <= bound on 200 instances, majority at radius 1, XOR bound {xor_bound}, "
                  f"{len(violations)} violations, {elapsed:.1f}s")
    assert ok, violations[:5]


def test_criterion_5_matching(report):
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(100):
        adj, nr = random_graph(rng, max_side=6)
        pl = hopcroft_karp(adj, nr)
        used = [v for v in pl if v != -1]
        valid = len(used) == len(set(used)) and all(v == -1 or v in adj[u] for u, v in enumerate(pl))
        if not valid or len(used) != brute_matching(adj, nr):
            bad += 1
    ok = bad == 0
    report(5, ok, f"Hopcroft-Karp equals exhaustive matching on 100 graphs ({bad} disagreements)")
    assert ok


def test_criterion_6_evaluator_against_grid(report):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    missed, outside, bad_witness = 0, 0, 0
    for _ in range(100):
        p = int(rng.integers(1, 4))
        depth = int(rng.integers(1, 4))
        tree = random_tree(rng, depth, p, grid=int(rng.choice([16, 40])))
        x = rng.integers(0, 9, p) / 8.0
        label = int(rng.integers(0, 2))
        attack = AttackModel.from_epsilon(float(rng.choice([0.0, 0.05, 0.1, 0.25])), p)
        lo, hi = attack.boxes(x)
        axes = [np.linspace(lo[j], hi[j], 21) for j in range(p)]
        grid = np.array(list(itertools.product(*axes)))
        reach = reachable_leaves(tree, x, attack)
        found = set(tree.leaf_index(grid).tolist())
        outside += not found <= reach
        robust = all(tree.leaves[t] == label for t in reach)
        missed += robust and bool(np.any(tree.predict(grid) != label))
        w = attack_witness(tree, x, label, attack)
        if robust != (w is None):
            bad_witness += 1
        elif w is not None and not (np.all(w >= lo) and np.all(w <= hi) and tree.predict(w)[0] != label):
            bad_witness += 1
    elapsed = time.perf_counter() - start
    ok = missed == 0 and outside == 0 and bad_witness == 0 and elapsed < 60
    report(6, ok, f"100 (tree, sample) pairs: grid beat evaluator {missed}x, grid leaf outside set {outside}x, "
                  f"bad witnesses {bad_witness}, {elapsed:.1f}s")
    assert ok


def test_criterion_7_monotonicity(report):
    rng = np.random.default_rng(7)
    grid = np.linspace(0.0, 0.5, 21)
    bad = []
    for k in range(40):
        data, _, depth = random_instance(rng, max_n=24, min_depth=1, max_depth=3)
        tree = random_tree(rng, depth, data.p, grid=16)
        accs = [adversarial_accuracy(tree, data, AttackModel.from_epsilon(e, data.p)) for e in grid]
        bounds = [adversarial_accuracy_bound(data, AttackModel.from_epsilon(e, data.p)) for e in grid]
        if any(b > a for a, b in zip(accs, accs[1:])) or any(b > a for a, b in zip(bounds, bounds[1:])):
            bad.append(k)
        if accs[0] != accuracy(tree, data):
            bad.append(("zero", k))
    ok = not bad
    report(7, ok, f"40 (tree, dataset) pairs over 21 radii, non-increasing and exact at zero ({len(bad)} failures)")
    assert ok, bad


def test_criterion_8_warm_start_feasibility(report):
    rng = np.random.default_rng(8)
    bad = []
    for k in range(50):
        data, attack, depth = random_instance(rng, max_n=30, min_depth=1, max_depth=3)
        tree = fit_greedy(data, attack, depth)
        errors = error_count(tree, data, attack)
        for mode in milp.MODES:
            model = milp.build_milp(data, attack, depth, mode)
            values = milp.warm_start_values(model, tree)
            if model.violated(values) or model.objective_value(values) != errors:
                bad.append((k, mode))
    ok = not bad
    report(8, ok, f"50 greedy trees, warm start satisfies every constraint in both modes "
                  f"with objective = error count ({len(bad)} failures)")
    assert ok, bad


def _cli(args, seed):
    env = dict(os.environ, PYTHONHASHSEED=str(seed))
    proc = subprocess.run([sys.executable, "-m", "robusttree", *args], env=env, capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()


def test_criterion_9_determinism(report, tmp_path):
    rng = np.random.default_rng(9)
    X = rng.integers(0, 9, (40, 2)) / 8
    y = ((X[:, 0] > 0.5) ^ (X[:, 1] > 0.4)).astype(int)
    data = tmp_path / "d.csv"
    data.write_text("a,b,label\n" + "".join(f"{a},{b},{c}\n" for (a, b), c in zip(X, y)))
    jobs = {
        "wcnf": ["encode", "--data", str(DATA / "xor.csv"), "--epsilon", "0.1", "--depth", "2", "--format", "wcnf"],
        "lp-continuous": ["encode", "--data", str(data), "--epsilon", "0.05", "--depth", "2",
                          "--format", "lp-continuous"],
        "lp-binary": ["encode", "--data", str(data), "--epsilon", "0.05", "--depth", "2", "--format", "lp-binary"],
        "csv": ["experiment", "--data", str(data), "--epsilon", "0.05,0.1", "--depths", "1,2",
                "--methods", "greedy,exact", "--seed", "11"],
    }
    differ = []
    for name, args in jobs.items():
        outs = []
        for run, hash_seed in enumerate((1, 2)):
            path = tmp_path / f"{name}.{run}"
            _cli([*args, "--out", str(path)], hash_seed)
            outs.append(path.read_bytes())
        if outs[0] != outs[1] or not outs[0]:
            differ.append(name)
    ok = not differ
    report(9, ok, f"WCNF, LP (both modes) and experiment CSV byte-identical across two processes "
                  f"(differing: {differ or 'none'})")
    assert ok
