import sys
from pathlib import Path

import numpy as np
import pytest

from robusttree.data import AttackModel, Dataset

SOLVERS = Path(__file__).parent / "solvers"
DATA = Path(__file__).parent / "data"


def random_instance(rng, max_n=16, max_p=3, max_depth=2, epsilons=(0.0, 0.05, 0.1), min_depth=0):
    """Small instance on a 1/8 grid, so clipped box endpoints never nearly coincide."""
    n = int(rng.integers(1, max_n + 1))
    p = int(rng.integers(1, max_p + 1))
    depth = int(rng.integers(min_depth, max_depth + 1))
    eps = float(rng.choice(epsilons))
    X = rng.integers(0, 9, size=(n, p)) / 8.0
    y = rng.integers(0, 2, size=n)
    return Dataset(X, y), AttackModel.from_epsilon(eps, p), depth


def three_point():
    """Three samples on one feature; the middle one overlaps the first, labels 0, 1, 1."""
    data = Dataset(np.array([[0.2], [0.25], [0.42]]), np.array([0, 1, 1]))
    return data, AttackModel.from_epsilon(0.1, 1)


def xor4():
    X = np.array([[0.25, 0.25], [0.75, 0.75], [0.25, 0.75], [0.75, 0.25]])
    return Dataset(X, np.array([0, 0, 1, 1])), AttackModel.from_epsilon(0.1, 2)


def rc2_solve(instance):
    """Optimal assignment (index 0 unused) and cost, from python-sat's RC2."""
    from pysat.examples.rc2 import RC2
    from pysat.formula import WCNF

    w = WCNF()
    for clause in instance.hard:
        w.append(list(clause))
    for weight, clause in instance.soft:
        w.append(list(clause), weight=weight)
    with RC2(w) as solver:
        model = solver.compute()
        cost = solver.cost
    values = np.zeros(instance.n_vars + 1, dtype=bool)
    for lit in model:
        if abs(lit) <= instance.n_vars:
            values[abs(lit)] = lit > 0
    return values, cost


def highs_solve(lp_path):
    """Solve an LP file with HiGHS; returns (status name, objective, name -> value)."""
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.readModel(str(lp_path))
    h.run()
    status = h.modelStatusToString(h.getModelStatus())
    lp = h.getLp()
    names = [lp.col_names_[k] for k in range(lp.num_col_)]
    sol = h.getSolution().col_value
    return status, h.getInfo().objective_function_value, dict(zip(names, sol))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def python():
    return sys.executable
