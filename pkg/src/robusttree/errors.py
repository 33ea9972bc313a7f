"""Exceptions shared by the encoders, solvers and the bridge."""


class AssignmentError(ValueError):
    """A solver assignment violates a hard constraint or is incomplete."""


class VerificationError(RuntimeError):
    """A decoded tree does not reproduce the cost the solver reported."""


class NoIncumbentError(RuntimeError):
    """The solver stopped without producing any solution."""
