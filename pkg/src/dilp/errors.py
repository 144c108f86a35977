"""Exception hierarchy shared across the pipeline.

The CLI maps the three base classes to distinct exit codes, so new errors
should subclass whichever phase they belong to.
"""


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration (exit code 2)."""


class DataError(Exception):
    """Problem with input data or its conversion to facts (exit code 3)."""


class TrainingError(Exception):
    """Failure while building the candidate space or optimizing (exit code 4)."""


class UnboundVariable(ValueError):
    """A substitution does not cover every variable of an atom."""


class LengthMismatch(ValueError):
    """Prediction and label sequences differ in length."""


class SchemaMismatch(DataError):
    """An input table does not carry the expected columns."""


class UnknownColumn(DataError):
    """A threshold rule references a column absent from the table."""


class InsufficientRows(DataError):
    """A class sample was requested with fewer rows available than asked."""


class DuplicateEdgeLabelConflict(DataError):
    """The same (source, destination, relation) edge was asserted both true and false."""


class EmptyEvaluation(DataError):
    """Metrics were requested over zero examples."""


class EmptyCandidateSpace(TrainingError):
    """No clause survives the generation restrictions (or masking removed all pairs)."""


class MemoryCapExceeded(TrainingError):
    """Estimated memory for grounding/weights exceeds the configured cap."""

    def __init__(self, estimated_bytes: int, cap_bytes: int, detail: str = ""):
        self.estimated_bytes = int(estimated_bytes)
        self.cap_bytes = int(cap_bytes)
        msg = (
            f"estimated memory {self.estimated_bytes:,} bytes exceeds the "
            f"configured cap of {self.cap_bytes:,} bytes"
        )
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteLoss(TrainingError):
    """Loss became NaN or infinite during optimization."""


class RecursivePredicate(Exception):
    """Rephrasing or SQL emission hit a recursive predicate definition."""


class UnsupportedArity(Exception):
    """SQL emission only handles programs whose predicates all have arity 1."""
