"""Exception hierarchy shared by all stages.

The CLI maps these onto exit codes: InputError -> 2, EmptyResultError -> 3,
anything else derived from FundnetError -> 1.
"""


class FundnetError(Exception):
    exit_code = 1


class InputError(FundnetError):
    """Malformed, missing or stale input data."""

    exit_code = 2


class EmptyResultError(FundnetError):
    """A stage ran but had nothing to produce (empty window, no funds...)."""

    exit_code = 3


class EstimationError(FundnetError):
    """Regression could not be carried out (too few rows, singular design)."""
