"""Exception types shared across the package."""


class RnnLabError(Exception):
    """Base class for all package errors."""


class InvalidSymbol(RnnLabError):
    """A symbol outside the grammar's alphabet was encountered."""


class UnsupportedGrammar(RnnLabError):
    """The requested construction does not exist for this grammar."""


class NoFeasibleLength(RnnLabError):
    """The language has no member at any feasible length in the allowed range."""


class RejectionBudgetExceeded(RnnLabError):
    """A rejection sampler exhausted its retry budget."""


class NoValidPerturbation(RnnLabError):
    """No structure-preserving perturbation exists for this string."""
