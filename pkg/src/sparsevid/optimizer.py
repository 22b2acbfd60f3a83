"""Zeroth-order optimization of the boundary distance.

The objective is evaluated only through value queries: randomized finite
differences give a gradient estimate, a backtracking line search with
doubling and halving adjusts the step size, and the smoothing radius decays
by 10x whenever an iteration yields no usable descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import DEFAULT_TOLERANCE, make_distance_fn
from .errors import AllDrawsFailed, BudgetExhausted, NotAdversarialWithinCap, QueryBudgetExceeded
from .tensors import Direction, as_block

__all__ = [
    "OptimizerConfig",
    "TraceRecord",
    "OptimizationTrace",
    "estimate_gradient",
    "line_search_step",
    "optimize_direction",
]


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of the direction optimizer.

    ``smoothing`` is the finite-difference radius, averaged over
    ``gradient_samples`` Gaussian draws per estimate. ``query_budget`` caps
    the absolute session count during optimization; ``target_distance``
    optionally stops the loop once the best distance falls below it.
    """

    smoothing: float = 0.005
    gradient_samples: int = 20
    step_size: float = 0.2
    min_step_size: float = 1e-4
    min_smoothing: float = 5e-6
    max_iterations: int = 1000
    query_budget: int | None = None
    target_distance: float | None = None

    def __post_init__(self):
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")
        if self.gradient_samples < 1:
            raise ValueError("gradient_samples must be >= 1")
        if not self.step_size >= self.min_step_size > 0:
            raise ValueError("need step_size >= min_step_size > 0")
        if self.min_smoothing <= 0:
            raise ValueError("min_smoothing must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.query_budget is not None and self.query_budget < 0:
            raise ValueError("query_budget must be >= 0")


@dataclass(frozen=True)
class TraceRecord:
    """State after one optimizer iteration; ``distance`` is the best so far."""

    iteration: int
    distance: float
    current_distance: float
    queries: int
    step_size: float
    smoothing: float
    accepted: bool


@dataclass
class OptimizationTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def best_distance(self) -> float:
        if not self.records:
            return math.inf
        return min(r.distance for r in self.records)

    def to_rows(self) -> list[dict]:
        return [
            {
                "iteration": r.iteration,
                "distance": r.distance,
                "current_distance": r.current_distance,
                "queries": r.queries,
                "step_size": r.step_size,
                "smoothing": r.smoothing,
                "accepted": r.accepted,
            }
            for r in self.records
        ]


def _as_array(direction) -> np.ndarray:
    return as_block(direction)


def _gradient_with_baseline(distance_fn, theta: np.ndarray, baseline: float,
                            smoothing: float, n_samples: int, rng,
                            mask: np.ndarray | None) -> np.ndarray:
    """Average of single-draw finite-difference estimators around ``theta``.

    Each draw perturbs by a standard Gaussian of theta's shape (restricted to
    the mask support when one is given, so the search never leaves the masked
    subspace). The baseline value is shared across all draws. Draws whose
    perturbed direction has no boundary within the cap are skipped; if every
    draw fails the smoothing radius is too large for this neighborhood.
    """
    total = np.zeros_like(theta)
    valid = 0
    for _ in range(n_samples):
        u = rng.standard_normal(theta.shape)
        if mask is not None:
            u = u * mask
        try:
            value = distance_fn(theta + smoothing * u, baseline)
        except NotAdversarialWithinCap:
            continue
        total += ((value - baseline) / smoothing) * u
        valid += 1
    if valid == 0:
        raise AllDrawsFailed(f"all {n_samples} gradient draws left the feasible cone")
    return total / valid


def estimate_gradient(distance_fn, direction, smoothing: float, n_samples: int,
                      rng, mask=None) -> Direction:
    """Randomized finite-difference gradient of ``distance_fn`` at ``direction``.

    The baseline distance is evaluated once and reused by all draws, so a
    call costs 1 + n_samples evaluations.
    """
    theta = _as_array(direction)
    baseline = distance_fn(theta, None)
    mask_arr = _as_array(mask) if mask is not None else None
    grad = _gradient_with_baseline(distance_fn, theta, baseline, smoothing,
                                   n_samples, rng, mask_arr)
    return Direction._wrap(grad)


def line_search_step(distance_fn, direction, gradient, step: float,
                     current: float, min_step: float):
    """Backtracking line search along the negative gradient.

    If the first trial improves, the step doubles while improvement
    continues and the best point is returned. Otherwise the step halves
    until an improvement appears or the step falls below ``min_step``;
    non-acceptance leaves the direction unchanged and is a normal outcome.

    Returns ``(direction', step', value', accepted)``.
    """
    theta = _as_array(direction)
    grad = _as_array(gradient)
    if not np.any(grad):
        return direction, step, current, False

    def value_at(eta: float, hint: float):
        candidate = theta - eta * grad
        try:
            return candidate, distance_fn(candidate, hint)
        except NotAdversarialWithinCap:
            return candidate, math.inf

    candidate, value = value_at(step, current)
    if value < current:
        best_theta, best_value, best_step = candidate, value, step
        while True:
            candidate, value = value_at(best_step * 2.0, best_value)
            if value < best_value:
                best_theta, best_value, best_step = candidate, value, best_step * 2.0
            else:
                break
        return Direction._wrap(best_theta), best_step, best_value, True

    eta = step / 2.0
    while eta >= min_step:
        candidate, value = value_at(eta, current)
        if value < current:
            return Direction._wrap(candidate), eta, value, True
        eta /= 2.0
    return direction, min_step, current, False


def optimize_direction(session, x, goal, direction_init, config: OptimizerConfig, *,
                       mask=None, rng=None, initial_distance: float | None = None,
                       tolerance: float = DEFAULT_TOLERANCE):
    """Minimize the boundary distance over directions, hard-label style.

    Runs up to ``config.max_iterations`` iterations, each costing one
    baseline evaluation, ``gradient_samples`` draw evaluations and the line
    search probes, all warm-started with the current distance. A rejected
    iteration divides the smoothing radius by 10 (consecutive rejections
    compound, flooring at ``min_smoothing``); an accepted one resets it. The
    direction is deliberately not renormalized between iterations: the
    objective is scale invariant, and the caller renormalizes once when
    reconstructing the adversarial example.

    Returns ``(best_direction, best_distance, trace)``. When the query
    budget runs out mid-flight, raises ``BudgetExhausted`` carrying the best
    result so far instead of losing the work.
    """
    if rng is None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(0)))
    theta = _as_array(direction_init).copy()
    mask_arr = _as_array(mask) if mask is not None else None
    distance_fn = make_distance_fn(session, x, goal, tolerance=tolerance)

    trace = OptimizationTrace()
    best_theta = theta
    best = initial_distance
    current = initial_distance
    step = config.step_size
    base_smoothing = config.smoothing
    smoothing = base_smoothing
    rejects = 0

    with session.budget(config.query_budget):
        try:
            if current is None:
                current = distance_fn(theta, None)
                best = current
            for iteration in range(1, config.max_iterations + 1):
                accepted = False
                try:
                    baseline = distance_fn(theta, current)
                    gradient = _gradient_with_baseline(
                        distance_fn, theta, baseline, smoothing,
                        config.gradient_samples, rng, mask_arr)
                except AllDrawsFailed:
                    current = baseline
                else:
                    new_dir, step, value, accepted = line_search_step(
                        distance_fn, theta, gradient, step, baseline,
                        config.min_step_size)
                    if accepted:
                        theta = _as_array(new_dir)
                        current = value
                    else:
                        current = baseline
                if accepted:
                    rejects = 0
                    smoothing = base_smoothing
                else:
                    rejects += 1
                    smoothing = max(base_smoothing * 10.0 ** (-rejects),
                                    config.min_smoothing)
                if current < best:
                    best = current
                    best_theta = theta
                trace.records.append(TraceRecord(
                    iteration=iteration,
                    distance=best,
                    current_distance=current,
                    queries=session.count,
                    step_size=step,
                    smoothing=smoothing,
                    accepted=accepted,
                ))
                if config.target_distance is not None and best <= config.target_distance:
                    break
        except QueryBudgetExceeded:
            raise BudgetExhausted(
                f"query budget {config.query_budget} exhausted after "
                f"{len(trace.records)} iterations",
                direction=Direction._wrap(best_theta),
                distance=best,
                trace=trace,
            ) from None

    return Direction._wrap(best_theta), best, trace
