"""Optimal and greedy decision trees that are robust to box-shaped evasion attacks."""

from .adversary import (
    accuracy,
    adversarial_accuracy,
    adversarial_errors,
    attack_witness,
    error_count,
    reachability,
    reachable_leaves,
)
from .bound import adversarial_accuracy_bound, epsilon_sweep, max_matching, select_epsilons
from .bridge import SolverConfig, fit
from .candidates import ThresholdCandidates, candidate_thresholds
from .data import AttackModel, DataError, Dataset, ScalingInfo, load_csv, scale_features
from .errors import AssignmentError, NoIncumbentError, VerificationError
from .exact import SearchBudget, SolveResult, Status, brute_force_reference, solve_exact
from .greedy import fit_greedy, worst_case_gini
from .margin import maximize_margin
from .tree import Tree, simplify, tree_from_json, tree_to_json

__version__ = "0.1.0"

__all__ = [
    "AssignmentError",
    "AttackModel",
    "DataError",
    "Dataset",
    "NoIncumbentError",
    "ScalingInfo",
    "SearchBudget",
    "SolveResult",
    "SolverConfig",
    "Status",
    "ThresholdCandidates",
    "Tree",
    "VerificationError",
    "accuracy",
    "adversarial_accuracy",
    "adversarial_accuracy_bound",
    "adversarial_errors",
    "attack_witness",
    "brute_force_reference",
    "candidate_thresholds",
    "epsilon_sweep",
    "error_count",
    "fit",
    "fit_greedy",
    "load_csv",
    "max_matching",
    "maximize_margin",
    "reachability",
    "reachable_leaves",
    "scale_features",
    "select_epsilons",
    "simplify",
    "solve_exact",
    "tree_from_json",
    "tree_to_json",
    "worst_case_gini",
]
