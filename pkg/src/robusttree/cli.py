"""Command-line entry point: ``robusttree <command> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import maxsat, milp
from .adversary import accuracy, adversarial_accuracy, attack_witness, reachable_leaves
from .bound import build_conflict_graph, epsilon_sweep, max_matching, select_epsilons, write_sweep_csv
from .bridge import EXTERNAL, METHODS, SolverConfig, fit
from .data import AttackModel, Dataset, ScalingInfo, load_csv, scale_features
from .exact import SearchBudget
from .experiment import ExperimentPlan, run_experiment, stratified_split, write_results_csv
from .greedy import fit_greedy
from .margin import maximize_margin
from .tree import tree_from_json, tree_to_json

log = logging.getLogger("robusttree")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_attack(p: argparse.ArgumentParser, many: bool = False):
    g = p.add_argument_group("attack")
    if many:
        g.add_argument("--epsilon", type=_floats, help="comma-separated L-infinity radii")
    else:
        g.add_argument("--epsilon", type=float, help="L-infinity radius on [0, 1]-scaled features")
    g.add_argument("--delta-left", type=_floats, help="per-feature decrease limits, comma-separated")
    g.add_argument("--delta-right", type=_floats, help="per-feature increase limits, comma-separated")


def _attack(args, p: int) -> AttackModel:
    has_delta = args.delta_left is not None or args.delta_right is not None
    if args.epsilon is not None and has_delta:
        raise UsageError("give either --epsilon or --delta-left/--delta-right, not both")
    if has_delta:
        if args.delta_left is None or args.delta_right is None:
            raise UsageError("--delta-left and --delta-right go together")
        left, right = args.delta_left, args.delta_right
        left = left * p if len(left) == 1 else left
        right = right * p if len(right) == 1 else right
        if len(left) != p or len(right) != p:
            raise ValueError(f"delta vectors need {p} entries (one per feature)")
        return AttackModel(left, right)
    if args.epsilon is None:
        raise UsageError("an attack is required: --epsilon or --delta-left/--delta-right")
    return AttackModel.from_epsilon(args.epsilon, p)


def _load(path) -> tuple[Dataset, ScalingInfo]:
    raw = load_csv(path)
    return scale_features(raw.matrix, raw.labels, raw.feature_names)


def _solver(args, method: str) -> Optional[SolverConfig]:
    if method not in EXTERNAL:
        return None
    if not args.solver_cmd:
        raise UsageError(f"--method {method} needs --solver-cmd")
    fmt = "maxsat-v-line" if method == "maxsat" else "lp-solution-file"
    return SolverConfig(args.solver_cmd, args.timeout or 60.0, fmt)


def _out(path):
    return contextlib.nullcontext(sys.stdout) if path in (None, "-") else open(path, "w")


def cmd_fit(args) -> int:
    data, scaling = _load(args.data)
    attack = _attack(args, data.p)
    config = _solver(args, args.method)
    test = None
    if args.test_data:
        raw = load_csv(args.test_data)
        test = Dataset(scaling.transform(raw.matrix), raw.labels, raw.feature_names)
    elif args.test_fraction:
        tr, te = stratified_split(data.labels, 1.0 - args.test_fraction, args.seed)
        data, test = data.subset(tr), data.subset(te)
    budget = SearchBudget(args.timeout, args.node_limit)
    start = time.perf_counter()
    res = fit(data, attack, args.depth, args.method, warm=args.warm, config=config, budget=budget)
    elapsed = time.perf_counter() - start
    doc = json.loads(tree_to_json(res.tree))
    doc["scaling"] = scaling.to_dict()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(json.dumps(doc) + "\n")
    print(f"method: {args.method}")
    print(f"status: {res.status}")
    print(f"objective: {res.objective}")
    print(f"train adversarial accuracy: {adversarial_accuracy(res.tree, data, attack):.6f}")
    if test is not None:
        print(f"test adversarial accuracy: {adversarial_accuracy(res.tree, test, attack):.6f}")
        print(f"test accuracy: {accuracy(res.tree, test):.6f}")
    print(f"wall time: {elapsed:.3f}s")
    return 0


def cmd_eval(args) -> int:
    with open(args.model) as fh:
        text = fh.read()
    doc = json.loads(text)
    raw = load_csv(args.data)
    tree = tree_from_json(doc, n_features=raw.matrix.shape[1])
    if "scaling" in doc:
        scaling = ScalingInfo.from_dict(doc["scaling"])
        if scaling.minimum.size != raw.matrix.shape[1]:
            raise ValueError(f"model was trained on {scaling.minimum.size} features, data has {raw.matrix.shape[1]}")
        data = Dataset(scaling.transform(raw.matrix), raw.labels, raw.feature_names)
    else:
        data = Dataset(raw.matrix, raw.labels, raw.feature_names)
    attack = _attack(args, data.p)
    print(f"adversarial accuracy: {adversarial_accuracy(tree, data, attack):.6f}")
    print(f"accuracy: {accuracy(tree, data):.6f}")
    if args.witness_out:
        with _out(args.witness_out) as fh:
            for i in range(data.n):
                x, y = data.features[i], int(data.labels[i])
                w = attack_witness(tree, x, y, attack)
                entry = {
                    "index": i,
                    "label": y,
                    "robust": w is None,
                    "reachable_leaves": sorted(reachable_leaves(tree, x, attack)),
                    "witness": None if w is None else [float(v) for v in w],
                }
                if w is not None:
                    entry["prediction"] = int(tree.predict(w[None, :])[0])
                fh.write(json.dumps(entry) + "\n")
    return 0


def cmd_bound(args) -> int:
    data, _ = _load(args.data)
    attack = _attack(args, data.p)
    if data.n == 0:
        raise ValueError("dataset is empty")
    m = max_matching(build_conflict_graph(data, attack))
    print(f"matching: {m.cardinality}")
    print(f"bound: {(data.n - m.cardinality) / data.n:.6f}")
    return 0


def cmd_sweep(args) -> int:
    data, _ = _load(args.data)
    grid = args.grid if args.grid else list(np.linspace(0.0, 1.0, args.steps))
    rows = epsilon_sweep(data, grid)
    with _out(args.out) as fh:
        write_sweep_csv(rows, fh)
    return 0


def cmd_select_eps(args) -> int:
    data, _ = _load(args.data)
    choices = select_epsilons(data, args.fractions, args.resolution)
    with _out(args.out) as fh:
        fh.write("fraction,target,epsilon,bound\n")
        for c in choices:
            fh.write(f"{c.fraction!r},{c.target!r},{c.epsilon!r},{c.bound!r}\n")
    return 0


def cmd_encode(args) -> int:
    data, _ = _load(args.data)
    attack = _attack(args, data.p)
    if args.format == "wcnf":
        _, inst = maxsat.build_encoding(data, attack, args.depth)
        with _out(args.out) as fh:
            maxsat.write_wcnf(inst, fh, new_format=args.new_format)
        return 0
    model = milp.build_milp(data, attack, args.depth, args.format.split("-")[1])
    with _out(args.out) as fh:
        milp.write_lp(model, fh)
    if args.start_out:
        tree = maximize_margin(fit_greedy(data, attack, args.depth), data, attack)
        with open(args.start_out, "w") as fh:
            milp.write_warm_start(model, tree, fh)
    return 0


def cmd_experiment(args) -> int:
    if any(m in EXTERNAL for m in args.methods) and not args.solver_cmd:
        raise UsageError("external methods need --solver-cmd")
    solver = SolverConfig(args.solver_cmd, args.timeout or 60.0) if args.solver_cmd else None
    deltas = None
    if args.delta_left is not None or args.delta_right is not None:
        if args.epsilon is not None:
            raise UsageError("give either --epsilon or --delta-left/--delta-right, not both")
        if args.delta_left is None or args.delta_right is None:
            raise UsageError("--delta-left and --delta-right go together")
        deltas = (tuple(args.delta_left), tuple(args.delta_right))
    plan = ExperimentPlan(
        data_path=args.data,
        epsilons=tuple(args.epsilon or (0.1,)),
        deltas=deltas,
        depths=tuple(args.depths),
        methods=tuple(args.methods),
        seed=args.seed,
        train_fraction=args.train_fraction,
        folds=args.folds,
        solver=solver,
        time_limit=args.timeout,
        node_limit=args.node_limit,
        workers=args.workers,
    )
    rows = run_experiment(plan)
    with _out(args.out) as fh:
        write_results_csv(rows, fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robusttree", description="Optimal and greedy adversarially robust decision trees.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def solver_flags(p):
        p.add_argument("--solver-cmd", help="solver command template with {instance}, {solution}, {start}")
        p.add_argument("--timeout", type=float, help="time limit in seconds")
        p.add_argument("--node-limit", type=int, help="node limit for the built-in search")

    p = sub.add_parser("fit", help="train a tree")
    p.add_argument("--data", required=True)
    _add_attack(p)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--method", choices=METHODS, default="exact")
    p.add_argument("--warm", action="store_true", help="start from the greedy tree")
    solver_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the tree JSON here")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--test-data", help="held-out CSV, scaled like the training data")
    g.add_argument("--test-fraction", type=float, help="hold out this fraction (stratified, seeded)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a saved tree")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    _add_attack(p)
    p.add_argument("--witness-out", help="write one JSON line per sample with an attack point if one exists")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bound", help="upper bound on adversarial accuracy")
    p.add_argument("--data", required=True)
    _add_attack(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sweep", help="bound over a grid of radii, as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", type=_floats, help="comma-separated radii")
    p.add_argument("--steps", type=int, default=21, help="evenly spaced radii on [0, 1] when --grid is absent")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("select-eps", help="radii at fractions of the bound's range")
    p.add_argument("--data", required=True)
    p.add_argument("--fractions", type=_floats, default=[0.25, 0.5, 0.75])
    p.add_argument("--resolution", type=float, default=1e-3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select_eps)

    p = sub.add_parser("encode", help="export a MaxSAT or MILP instance")
    p.add_argument("--data", required=True)
    _add_attack(p)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--format", choices=("wcnf", "lp-continuous", "lp-binary"), default="wcnf")
    p.add_argument("--new-format", action="store_true", help="WCNF with 'h' hard-clause prefix")
    p.add_argument("--start-out", help="also write a greedy warm start for the LP model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("experiment", help="split, cross-validate depth, report test scores")
    p.add_argument("--data", required=True)
    _add_attack(p, many=True)
    p.add_argument("--depths", type=_ints, default=[1, 2])
    p.add_argument("--methods", type=lambda s: [m.strip() for m in s.split(",") if m.strip()],
                   default=["greedy", "exact"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"robusttree: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"robusttree: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
