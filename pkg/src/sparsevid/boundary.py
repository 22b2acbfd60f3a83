"""Distance from a clean video to the decision boundary along a direction.

The distance is found hard-label style: probe points x + lambda * theta_hat,
bracket the smallest goal-satisfying step with a geometric coarse search,
then shrink the bracket by binary search. Every probe is one victim query.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotAdversarialWithinCap, ZeroDirection
from .tensors import VideoTensor, as_block
from .victim import QuerySession

__all__ = [
    "AttackGoal",
    "BoundaryDistance",
    "is_success",
    "boundary_distance",
    "make_distance_fn",
    "DEFAULT_TOLERANCE",
]

DEFAULT_TOLERANCE = 0.01
CAP_FACTOR = 10.0
DEFAULT_CAP = 1e4
EXPANSION = 2.0
# Below this fraction of the tolerance the bracket floor is taken as 0;
# the clean point itself never satisfies the goal for a correctly
# classified sample, so no probe is spent there.
_FLOOR_FRACTION = 1e-3


@dataclass(frozen=True)
class AttackGoal:
    """Untargeted (escape the true label) or targeted (reach a chosen label)."""

    true_label: int | None = None
    target_label: int | None = None

    def __post_init__(self):
        if (self.true_label is None) == (self.target_label is None):
            raise ValueError("exactly one of true_label / target_label must be set")

    @classmethod
    def untargeted(cls, true_label: int) -> "AttackGoal":
        return cls(true_label=int(true_label))

    @classmethod
    def targeted(cls, target_label: int) -> "AttackGoal":
        return cls(target_label=int(target_label))

    @property
    def targeted_attack(self) -> bool:
        return self.target_label is not None

    def describe(self) -> str:
        if self.targeted_attack:
            return f"targeted({self.target_label})"
        return f"untargeted({self.true_label})"


def is_success(label: int, goal: AttackGoal) -> bool:
    """Whether a predicted label satisfies the attack goal."""
    if goal.targeted_attack:
        return label == goal.target_label
    return label != goal.true_label


@dataclass(frozen=True)
class BoundaryDistance:
    """Result of one boundary search.

    ``distance`` is the upper bracket edge: the smallest probed step that
    satisfied the goal, within ``bracket[1] - bracket[0]`` of the true
    crossing. ``queries_used`` is the exact session-counter delta of the call.
    """

    distance: float
    queries_used: int
    bracket: tuple[float, float]


def boundary_distance(session: QuerySession, x: VideoTensor, goal: AttackGoal,
                      direction, hint: float | None = None, *,
                      tolerance: float = DEFAULT_TOLERANCE) -> BoundaryDistance:
    """Measure the boundary distance from ``x`` along ``direction``.

    The direction is normalized internally, so the result is scale invariant.
    The coarse phase starts from ``hint`` when given (the previous distance
    during optimization, or the candidate's norm at initialization) and
    otherwise from the direction's own norm; it doubles or halves by factor 2
    until the goal flips between the bracket edges. Expansion is capped at
    10x the hint (1e4 without one); if nothing below the cap satisfies the
    goal the direction is useless and NotAdversarialWithinCap is raised.
    """
    arr = as_block(direction)
    norm = float(np.linalg.norm(arr.ravel()))
    if norm == 0.0:
        raise ZeroDirection("boundary search along an all-zero direction")
    if hint is not None and hint <= 0:
        raise ValueError("hint must be positive")
    unit = arr / norm
    cap = CAP_FACTOR * hint if hint is not None else DEFAULT_CAP
    start = min(hint if hint is not None else norm, cap)
    floor = tolerance * _FLOOR_FRACTION

    base = x.data
    start_count = session.count

    def satisfied(lam: float) -> bool:
        probe = VideoTensor._wrap(base + lam * unit)
        return is_success(session.query(probe).label, goal)

    with session.purpose("g-eval"):
        if satisfied(start):
            hi = start
            lo = start / EXPANSION
            while lo > floor and satisfied(lo):
                hi = lo
                lo /= EXPANSION
            if lo <= floor:
                lo = 0.0
        else:
            if start >= cap:
                raise NotAdversarialWithinCap(
                    f"no goal-satisfying point within step cap {cap:g}"
                )
            lo = start
            hi = min(start * EXPANSION, cap)
            while True:
                if satisfied(hi):
                    break
                if hi >= cap:
                    raise NotAdversarialWithinCap(
                        f"no goal-satisfying point within step cap {cap:g}"
                    )
                lo = hi
                hi = min(hi * EXPANSION, cap)

        while hi - lo > tolerance:
            mid = (lo + hi) / 2.0
            if mid <= lo or mid >= hi:
                break
            if satisfied(mid):
                hi = mid
            else:
                lo = mid

    return BoundaryDistance(hi, session.count - start_count, (lo, hi))


def make_distance_fn(session: QuerySession, x: VideoTensor, goal: AttackGoal, *,
                     tolerance: float = DEFAULT_TOLERANCE):
    """Closure ``f(direction, hint) -> float`` for optimizers.

    Queries flow through the supplied session; NotAdversarialWithinCap
    propagates to the caller.
    """

    def distance(direction, hint: float | None = None) -> float:
        return boundary_distance(session, x, goal, direction, hint, tolerance=tolerance).distance

    return distance
