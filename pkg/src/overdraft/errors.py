"""Exception hierarchy shared by the simulator modules."""


class OverdraftError(Exception):
    """Base class for simulator errors."""


class ValidationError(OverdraftError, ValueError):
    """Malformed input: out-of-range parameters, bad drafts, bad files."""


class SnapshotError(OverdraftError):
    """A view was requested for a block the ledger has not reached."""


class LoanCanceled(OverdraftError):
    """Loan registration refused; the ledger is left untouched."""


class EarlyClosureError(OverdraftError):
    """Loans cannot be closed before their end block."""


class ReplayError(OverdraftError):
    """An offline transaction id was submitted twice."""


class UnknownPartyError(OverdraftError, KeyError):
    """A node id is not registered on the ledger or view."""
