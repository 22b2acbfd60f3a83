"""Exception types shared across the attack engine."""


class SparsevidError(Exception):
    """Base class for every library-defined error."""


class ShapeMismatch(SparsevidError):
    """Tensor shapes disagree where congruence is required."""


class ZeroDirection(SparsevidError):
    """A direction with zero norm cannot be normalized or searched along."""


class FrameOutOfRange(SparsevidError):
    """Frame index outside [0, frames)."""


class NotAdversarialWithinCap(SparsevidError):
    """No point along the direction satisfied the goal within the step cap.

    Callers treat this as an infinite boundary distance; it is never folded
    into arithmetic as a float sentinel.
    """


class AllDrawsFailed(SparsevidError):
    """Every perturbed probe of a gradient estimate failed its boundary search."""


class QueryBudgetExceeded(SparsevidError):
    """A query was attempted past the active budget cap on a session."""


class BudgetExhausted(SparsevidError):
    """Optimization ran out of query budget. Carries the best result so far."""

    def __init__(self, message, *, direction=None, distance=None, trace=None):
        super().__init__(message)
        self.direction = direction
        self.distance = distance
        self.trace = trace


class StartingDirectionNotAdversarial(SparsevidError):
    """The masked candidate direction does not satisfy the attack goal."""


class CleanSampleMisclassified(SparsevidError):
    """The victim does not classify the clean sample as its true label."""


class NoViableInitialization(SparsevidError):
    """Every initialization candidate failed; the attack cannot start."""


class InsufficientCandidates(SparsevidError):
    """The dataset holds fewer admissible candidates than requested."""


class EmptyMask(SparsevidError):
    """An operation requiring at least one selected position got an all-zero mask."""


class EmptyBatch(SparsevidError):
    """Aggregation over zero attack results."""


class RemoteUnavailable(SparsevidError):
    """The remote victim failed at transport level or returned a fatal status."""


class BindFailure(SparsevidError):
    """The victim server could not bind its address."""


class ConfigError(SparsevidError):
    """Invalid, unknown or missing experiment configuration keys."""


class DatasetError(SparsevidError):
    """Dataset files are missing, malformed or inconsistent."""
