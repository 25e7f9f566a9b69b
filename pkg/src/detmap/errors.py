"""Exception types shared across the toolkit."""


class EvaluationError(ValueError):
    """Invalid input to an evaluation step (maps to CLI exit code 2)."""


class SingletonQueryError(EvaluationError):
    """One or more queries have no relevant, non-excluded database item."""

    def __init__(self, query_indices):
        self.query_indices = [int(q) for q in query_indices]
        shown = ", ".join(str(q) for q in self.query_indices[:10])
        more = "" if len(self.query_indices) <= 10 else f" (+{len(self.query_indices) - 10} more)"
        super().__init__(f"queries without any relevant database item: {shown}{more}")


class InvariantViolation(RuntimeError):
    """An internal consistency check failed (maps to CLI exit code 1)."""
