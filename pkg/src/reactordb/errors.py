"""Exception hierarchy shared by the engine, the checker and the tooling."""


class ReactorDBError(Exception):
    """Base class for every error raised by reactordb."""


class TransactionAborted(ReactorDBError):
    """The root transaction must abort.

    ``reason`` is a short tag that ends up in benchmark statistics and in
    client-visible outcomes.
    """

    reason = "abort"

    def __init__(self, message="", *, reason=None):
        super().__init__(message or self.reason)
        if reason is not None:
            self.reason = reason


class UserAbort(TransactionAborted):
    reason = "user-abort"


class ConflictAbort(TransactionAborted):
    reason = "conflict"


class DuplicateKey(ConflictAbort):
    reason = "duplicate-key"


class DangerousStructure(TransactionAborted):
    reason = "dangerous-structure"


class ShutdownAbort(TransactionAborted):
    reason = "shutdown"


class ProcedureError(TransactionAborted):
    """A procedure raised something that is not an abort (a bug)."""

    reason = "procedure-error"


class DuplicateTable(ReactorDBError):
    pass


class UnknownReactor(ReactorDBError):
    pass


class UnknownProcedure(ReactorDBError):
    pass


class UnknownType(ReactorDBError):
    pass


class UnmappedReactor(ReactorDBError):
    pass


class PlanError(ReactorDBError):
    """Invalid deployment plan. ``kind`` is one of schema-error,
    double-mapping or dangling-executor."""

    def __init__(self, kind, message):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


class MalformedHistory(ReactorDBError):
    pass


class HistoryTooLarge(ReactorDBError):
    pass


class InsufficientSamples(ReactorDBError):
    pass


class IncompleteTrace(ReactorDBError):
    pass
