"""Running external MaxSAT and MILP solvers on exported instance files."""

from __future__ import annotations

import logging
import os
import re
import shlex
import signal
import subprocess
import tempfile
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import maxsat, milp
from .adversary import error_count
from .data import AttackModel, Dataset
from .errors import NoIncumbentError, VerificationError
from .exact import SearchBudget, SolveResult, Status, solve_exact
from .greedy import fit_greedy
from .margin import maximize_margin

log = logging.getLogger(__name__)

METHODS = ("maxsat", "milp-continuous", "milp-binary", "exact", "greedy")
EXTERNAL = ("maxsat", "milp-continuous", "milp-binary")
FORMATS = ("maxsat-v-line", "lp-solution-file")


class SolverError(RuntimeError):
    """The solver reported something the encoding rules out (e.g. infeasibility)."""


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """External solver invocation.

    ``command`` is an argument template; ``{instance}`` is replaced by the instance
    path, ``{solution}`` by a solution-file path and ``{start}`` by a warm-start
    file path. Arguments mentioning ``{start}`` are dropped when there is no start.
    Without ``{solution}`` the solution is read from standard output.
    """

    command: tuple
    timeout: float = 60.0
    output: str = "maxsat-v-line"
    workdir: Optional[str] = None

    def __init__(self, command: Union[str, Sequence[str]], timeout: float = 60.0,
                 output: str = "maxsat-v-line", workdir: Optional[str] = None):
        args = tuple(shlex.split(command)) if isinstance(command, str) else tuple(command)
        object.__setattr__(self, "command", args)
        object.__setattr__(self, "timeout", float(timeout))
        object.__setattr__(self, "output", output)
        object.__setattr__(self, "workdir", None if workdir is None else str(workdir))
        if not args:
            raise ValueError("empty solver command")
        if not any("{instance}" in a for a in args):
            raise ValueError("solver command must contain the {instance} placeholder")
        if not self.timeout > 0:
            raise ValueError(f"timeout must be positive, got {timeout}")
        if output not in FORMATS:
            raise ValueError(f"unknown solution format {output!r}; expected one of {FORMATS}")

    def argv(self, instance, solution=None, start=None) -> list[str]:
        out = []
        for a in self.command:
            if "{start}" in a and start is None:
                continue
            out.append(a.replace("{instance}", str(instance))
                        .replace("{solution}", str(solution))
                        .replace("{start}", str(start)))
        return out

    @property
    def writes_solution_file(self) -> bool:
        return any("{solution}" in a for a in self.command)

    @property
    def takes_start(self) -> bool:
        return any("{start}" in a for a in self.command)


@dataclass(frozen=True)
class RunOutput:
    stdout: str
    returncode: Optional[int]
    timed_out: bool
    elapsed: float


def run_command(argv: Sequence[str], timeout: float, cwd=None) -> RunOutput:
    """Run ``argv``; on timeout terminate the whole process group and keep its output."""
    start = time.perf_counter()
    proc = subprocess.Popen(
        list(argv), stdout=subprocess.PIPE, stderr=subprocess.STDOUT, cwd=cwd,
        text=True, start_new_session=True,
    )
    timed_out = False
    try:
        out, _ = proc.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill(proc, signal.SIGTERM)
        try:
            out, _ = proc.communicate(timeout=2.0)
        except subprocess.TimeoutExpired:
            _kill(proc, signal.SIGKILL)
            out, _ = proc.communicate()
    return RunOutput(out or "", proc.returncode, timed_out, time.perf_counter() - start)


def _kill(proc, sig):
    try:
        os.killpg(proc.pid, sig)
    except (ProcessLookupError, PermissionError):
        pass


# MaxSAT ----------------------------------------------------------------------

@dataclass(frozen=True)
class MaxsatOutcome:
    assignment: np.ndarray  # index 0 unused
    status: Status
    reported_cost: Optional[int]
    timed_out: bool = False

    def as_dict(self) -> dict:
        return {v: bool(self.assignment[v]) for v in range(1, self.assignment.size)}


def _v_blocks(text: str) -> list[list[str]]:
    blocks, current = [], None
    for line in text.splitlines():
        if line.startswith("v ") or line.strip() == "v":
            if current is None:
                current = []
                blocks.append(current)
            current.append(line)
        else:
            current = None
    return blocks


def _parse_block(lines: list[str], n_vars: int) -> Optional[np.ndarray]:
    """Assignment for one v-block, or None if it does not cover every variable."""
    tokens = [tok for line in lines for tok in line.split()[1:]]
    if len(tokens) == 1 and re.fullmatch(r"[01]+", tokens[0]) and len(tokens[0]) == n_vars:
        values = np.zeros(n_vars + 1, dtype=bool)
        values[1:] = [ch == "1" for ch in tokens[0]]
        return values
    values = np.zeros(n_vars + 1, dtype=bool)
    seen = np.zeros(n_vars + 1, dtype=bool)
    for line in lines:
        for tok in line.split()[1:]:
            try:
                lit = int(tok)
            except ValueError:
                raise ParseError(f"malformed v-line: {line!r}") from None
            if lit == 0:
                continue
            if abs(lit) > n_vars:
                raise ParseError(f"literal {lit} out of range in v-line: {line!r}")
            values[abs(lit)] = lit > 0
            seen[abs(lit)] = True
    if not seen[1:].all():
        return None
    return values


def parse_maxsat_output(text: str, n_vars: int, timed_out: bool = False) -> MaxsatOutcome:
    """Last complete model printed by a MaxSAT solver.

    Both ``v`` dialects are accepted: signed literals over one or more lines, or
    a single 0/1 string of length ``n_vars``. A trailing truncated block (solver
    killed while printing) is skipped in favour of the previous complete one.
    """
    if re.search(r"^s UNSATISFIABLE", text, re.M):
        raise SolverError("solver reports the hard clauses unsatisfiable")
    costs = re.findall(r"^o\s+(\d+)", text, re.M)
    for block in reversed(_v_blocks(text)):
        values = _parse_block(block, n_vars)
        if values is not None:
            break
        warnings.warn("ignoring an incomplete v-line block", RuntimeWarning, stacklevel=2)
    else:
        raise NoIncumbentError("solver output contains no complete model")
    optimal = re.search(r"^s OPTIMUM FOUND", text, re.M) is not None and not timed_out
    return MaxsatOutcome(values, Status.OPTIMAL if optimal else Status.FEASIBLE,
                         int(costs[-1]) if costs else None, timed_out)


def wcnf_n_vars(path) -> int:
    n = 0
    with open(path) as fh:
        for line in fh:
            if line.startswith("p wcnf"):
                return int(line.split()[2])
            if line.startswith("c") or not line.strip():
                continue
            lits = [abs(int(t)) for t in line.split()[1:]]
            n = max([n, *lits])
    return n


def run_maxsat(instance_path, config: SolverConfig, n_vars: Optional[int] = None) -> MaxsatOutcome:
    path = Path(instance_path)
    if not path.is_file():
        raise FileNotFoundError(path)
    n_vars = wcnf_n_vars(path) if n_vars is None else n_vars
    solution = Path(config.workdir or path.parent) / (path.stem + ".sol")
    run = run_command(config.argv(path, solution), config.timeout, config.workdir)
    text = run.stdout
    if config.writes_solution_file and solution.is_file():
        text = solution.read_text() + "\n" + text
    log.debug("maxsat solver exit %s after %.2fs", run.returncode, run.elapsed)
    return parse_maxsat_output(text, n_vars, run.timed_out)


# MILP ------------------------------------------------------------------------

@dataclass(frozen=True)
class MilpOutcome:
    values: dict
    status: Status
    objective: Optional[float]
    timed_out: bool = False


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def parse_solution(text: str) -> tuple[dict, Optional[float]]:
    """``name value`` pairs; other lines (headers, comments) are ignored."""
    if re.search(r"\binfeasible\b", text, re.I):
        raise SolverError("solver reports the model infeasible")
    values, objective = {}, None
    for line in text.splitlines():
        m = re.match(r"^\s*#?\s*objective(?: value)?\s*[:=]?\s*(" + _NUM + r")\s*$", line, re.I)
        if m:
            objective = float(m.group(1))
            continue
        parts = line.split()
        if len(parts) == 2 and not line.lstrip().startswith("#") and re.fullmatch(_NUM, parts[1]):
            values[parts[0]] = float(parts[1])
    return values, objective


def run_milp(instance_path, config: SolverConfig, start_path=None) -> MilpOutcome:
    path = Path(instance_path)
    if not path.is_file():
        raise FileNotFoundError(path)
    if start_path is not None and not config.takes_start:
        warnings.warn("solver command has no {start} placeholder; warm start not passed", RuntimeWarning, stacklevel=2)
    solution = Path(config.workdir or path.parent) / (path.stem + ".sol")
    if solution.exists():
        solution.unlink()
    run = run_command(config.argv(path, solution, start_path), config.timeout, config.workdir)
    if config.writes_solution_file and solution.is_file():
        text = solution.read_text()
    else:
        text = run.stdout
    if re.search(r"\binfeasible\b", run.stdout, re.I):
        raise SolverError("solver reports the model infeasible")
    values, objective = parse_solution(text)
    if not values:
        raise NoIncumbentError("solver produced no solution values")
    optimal = not run.timed_out and re.search(r"\boptimal\b", run.stdout + "\n" + text, re.I) is not None
    return MilpOutcome(values, Status.OPTIMAL if optimal else Status.FEASIBLE, objective, run.timed_out)


def complete_values(model: milp.MilpModel, values: dict) -> dict:
    missing = [v.name for v in model.variables if v.name not in values]
    if missing:
        warnings.warn(f"{len(missing)} variables missing from solution (first {missing[0]}); set to 0",
                      RuntimeWarning, stacklevel=2)
    return {v.name: float(values.get(v.name, 0.0)) for v in model.variables}


# Orchestration ---------------------------------------------------------------

def _warm_tree(data, attack, depth):
    return maximize_margin(fit_greedy(data, attack, depth), data, attack)


def fit(
    data: Dataset,
    attack: AttackModel,
    depth: int,
    method: str,
    warm: bool = False,
    config: Optional[SolverConfig] = None,
    budget: Optional[SearchBudget] = None,
) -> SolveResult:
    """Train a tree with ``method`` and return it with a verified objective.

    The final tree is margin-maximised; its error count is recomputed with the
    adversary evaluator and must match what the solver reported when the solver
    claims optimality.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method in EXTERNAL and config is None:
        raise ValueError(f"method {method} needs a solver configuration")
    attack.check(data.p)
    start = time.perf_counter()

    if method == "greedy":
        tree = _warm_tree(data, attack, depth)
        return SolveResult(tree, error_count(tree, data, attack), Status.FEASIBLE, 0,
                           time.perf_counter() - start, method)
    if method == "exact":
        budget = budget or SearchBudget()
        if warm:
            budget = SearchBudget(budget.time_limit, budget.node_limit, _warm_tree(data, attack, depth))
        res = solve_exact(data, attack, depth, budget)
        tree = maximize_margin(res.tree, data, attack)
        objective = error_count(tree, data, attack)
        if objective != res.objective:
            raise VerificationError(f"margin step changed the error count {res.objective} -> {objective}")
        return SolveResult(tree, objective, res.status, res.nodes, time.perf_counter() - start, method,
                           trace=res.trace)

    if depth == 0 or data.n == 0:
        return fit(data, attack, depth, "exact")
    with tempfile.TemporaryDirectory(dir=config.workdir) as tmp:
        if method == "maxsat":
            tree, cost, status = _fit_maxsat(data, attack, depth, config, Path(tmp))
        else:
            tree, cost, status = _fit_milp(data, attack, depth, method.split("-")[1], warm, config, Path(tmp))
    errors = error_count(tree, data, attack)
    if status == Status.OPTIMAL and errors != cost:
        raise VerificationError(f"solver reports optimum {cost} but the tree makes {errors} errors")
    final = maximize_margin(tree, data, attack)
    objective = error_count(final, data, attack)
    if objective != errors:
        raise VerificationError(f"margin step changed the error count {errors} -> {objective}")
    return SolveResult(final, objective, status, 0, time.perf_counter() - start, method, reported_cost=cost)


def _fit_maxsat(data, attack, depth, config, tmp: Path):
    vm, inst = maxsat.build_encoding(data, attack, depth)
    path = tmp / "instance.wcnf"
    with open(path, "w") as fh:
        maxsat.write_wcnf(inst, fh)
    out = run_maxsat(path, config, inst.n_vars)
    tree, _ = maxsat.decode_tree(vm, out.assignment, data, attack, inst)
    return tree, inst.cost(out.assignment), out.status


def _fit_milp(data, attack, depth, mode, warm, config, tmp: Path):
    model = milp.build_milp(data, attack, depth, mode)
    path = tmp / "instance.lp"
    with open(path, "w") as fh:
        milp.write_lp(model, fh)
    start_path, warm_cost = None, None
    if warm:
        warm_tree = _warm_tree(data, attack, depth)
        start_path = tmp / "start.sol"
        with open(start_path, "w") as fh:
            milp.write_warm_start(model, warm_tree, fh)
        warm_cost = error_count(warm_tree, data, attack)
    out = run_milp(path, config, start_path)
    values = complete_values(model, out.values)
    tree, _ = milp.decode_tree(model, values, data, attack)
    cost = model.objective_value(values)
    if out.objective is not None and out.status == Status.OPTIMAL and abs(out.objective - cost) > 1e-6:
        raise VerificationError(f"reported objective {out.objective} differs from solution value {cost}")
    if warm_cost is not None and cost > warm_cost + 1e-6:
        raise VerificationError(f"solution objective {cost} is worse than the warm start's {warm_cost}")
    return tree, int(round(cost)), out.status
