"""End-to-end attack: candidate initialization, combined masking, direction
optimization and adversarial example reconstruction.

Directions are seeded from dataset samples of other classes, masked
spatially (saliency) and temporally (frame pruning), the candidate with the
smallest boundary distance wins, and zeroth-order optimization shrinks that
distance. The adversarial example is the clean video pushed exactly to the
boundary along the optimized direction; it differs from the clean video only
inside the mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundary import DEFAULT_TOLERANCE, AttackGoal, boundary_distance, is_success
from .dataset import LabeledVideo, VideoDataset
from .errors import (
    BudgetExhausted,
    CleanSampleMisclassified,
    InsufficientCandidates,
    NoViableInitialization,
    NotAdversarialWithinCap,
    StartingDirectionNotAdversarial,
    ZeroDirection,
)
from .metrics import mean_abs_perturbation, mean_abs_perturbation_masked, sparsity
from .optimizer import OptimizationTrace, OptimizerConfig, optimize_direction
from .saliency import spatial_mask
from .tensors import BinaryMask, VideoTensor, apply_mask, key_frame_count, l2_norm, normalize
from .temporal import rank_frames, prune_frames
from .victim import QuerySession

__all__ = ["AttackConfig", "AttackResult", "sample_candidates", "initialize_direction", "attack"]

UNTARGETED_BOUND = 3.0
UNTARGETED_RATIO = 0.6
TARGETED_BOUND = 30.0
TARGETED_RATIO = 0.8


@dataclass(frozen=True)
class AttackConfig:
    """Everything an attack run needs besides the victim and the data.

    ``perturbation_bound`` and ``salient_ratio`` default per goal kind
    (3 / 0.6 untargeted, 30 / 0.8 targeted) when built through
    ``AttackConfig.for_goal``. ``clamp`` additionally reports the label of
    the [0, 255]-clipped adversarial example, at the cost of one query.
    """

    goal: AttackGoal
    perturbation_bound: float = UNTARGETED_BOUND
    salient_ratio: float = UNTARGETED_RATIO
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    candidates: int = 5
    seed: int = 0
    enable_temporal: bool = True
    enable_spatial: bool = True
    clamp: bool = False
    boundary_tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if self.candidates < 1:
            raise ValueError("need at least one initialization candidate")
        if self.perturbation_bound < 0:
            raise ValueError("perturbation_bound must be >= 0")
        if not 0.0 < self.salient_ratio <= 1.0:
            raise ValueError("salient_ratio must be in (0, 1]")

    @classmethod
    def for_goal(cls, goal: AttackGoal, **overrides) -> "AttackConfig":
        defaults = dict(
            perturbation_bound=TARGETED_BOUND if goal.targeted_attack else UNTARGETED_BOUND,
            salient_ratio=TARGETED_RATIO if goal.targeted_attack else UNTARGETED_RATIO,
        )
        defaults.update(overrides)
        return cls(goal=goal, **defaults)


@dataclass
class AttackResult:
    success: bool
    x_adv: VideoTensor
    queries: int
    map: float
    map_masked: float
    sparsity: float
    mask: BinaryMask
    trace: OptimizationTrace
    clamped_label: int | None
    distance_init: float
    distance_final: float
    budget_exhausted: bool
    candidates_tried: int
    key_frames: int
    # one record per initialization candidate: id, queries spent, distance
    # reached or the failure kind, so per-candidate cost can be reconstructed
    init_attempts: list[dict] = field(default_factory=list)


def sample_candidates(dataset: VideoDataset, x: VideoTensor, goal: AttackGoal,
                      n: int, rng: np.random.Generator) -> list[LabeledVideo]:
    """Pick ``n`` distinct direction seeds of admissible classes.

    Targeted attacks draw from the target class, untargeted ones from any
    class except the true label. Selection order comes from the seeded rng.
    """
    if goal.targeted_attack:
        admissible = dataset.of_label(goal.target_label)
    else:
        admissible = dataset.excluding_label(goal.true_label)
    if len(admissible) < n:
        raise InsufficientCandidates(
            f"need {n} candidates of admissible classes, dataset has {len(admissible)}"
        )
    order = rng.permutation(len(admissible))
    return [admissible[i] for i in order[:n]]


def initialize_direction(session: QuerySession, x: VideoTensor, goal: AttackGoal,
                         candidate: VideoTensor, config: AttackConfig):
    """Build the masked start direction from one candidate video.

    The spatial mask comes from the clean video's saliency; the temporal
    stage then ranks and prunes frames against the masked difference
    direction. Returns ``(direction, mask, distance)`` where the distance is
    evaluated along the final direction with the candidate's distance as the
    warm-start hint.
    """
    p = VideoTensor._wrap(candidate.data - x.data)
    p_norm = l2_norm(p)
    if p_norm == 0.0:
        raise ZeroDirection("candidate equals the clean video")

    if config.enable_spatial:
        mask = spatial_mask(x, config.salient_ratio)
    else:
        mask = BinaryMask.ones(x.dims)

    if config.enable_temporal:
        with session.purpose("init"):
            start = VideoTensor._wrap(x.data + p.data * mask.data)
            if not is_success(session.query(start).label, goal):
                raise StartingDirectionNotAdversarial(
                    "masked candidate direction does not satisfy the goal"
                )
        ranking = rank_frames(session, x, p, mask, goal)
        mask, direction = prune_frames(session, x, p, mask, ranking,
                                       config.perturbation_bound, goal,
                                       tolerance=config.boundary_tolerance)
    else:
        direction = normalize(apply_mask(p, mask))

    result = boundary_distance(session, x, goal, direction, hint=p_norm,
                               tolerance=config.boundary_tolerance)
    return direction, mask, result.distance


def attack(session: QuerySession, x: VideoTensor, true_label: int,
           config: AttackConfig, dataset: VideoDataset) -> AttackResult:
    """Run the full attack pipeline against one correctly classified video.

    Initialization failures of individual candidates are skipped (their
    queries still count); the attack errors only if every candidate fails.
    On budget exhaustion the best direction so far is reconstructed and the
    final verification query decides the success flag. Identical seed,
    config, victim and dataset reproduce the result bit for bit.
    """
    goal = config.goal
    if goal.targeted_attack and goal.target_label == true_label:
        raise ValueError("target label equals the true label")
    if not goal.targeted_attack and goal.true_label != true_label:
        raise ValueError("goal true label disagrees with the attacked sample")

    with session.purpose("verify"):
        if session.query(x).label != true_label:
            raise CleanSampleMisclassified(
                f"victim does not assign label {true_label} to the clean sample"
            )

    candidate_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((config.seed, 0))))
    optimizer_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((config.seed, 1))))

    candidates = sample_candidates(dataset, x, goal, config.candidates, candidate_rng)
    best = None
    attempts = []
    for candidate in candidates:
        before = session.count
        try:
            direction, mask, distance = initialize_direction(
                session, x, goal, candidate.video, config)
        except (StartingDirectionNotAdversarial, NotAdversarialWithinCap, ZeroDirection) as exc:
            attempts.append({"candidate": candidate.sample_id,
                             "queries": session.count - before,
                             "distance": None,
                             "outcome": type(exc).__name__})
            continue
        attempts.append({"candidate": candidate.sample_id,
                         "queries": session.count - before,
                         "distance": distance,
                         "outcome": "ok"})
        if best is None or distance < best[2]:
            best = (direction, mask, distance)
    if best is None:
        raise NoViableInitialization(f"all {len(attempts)} candidates failed to initialize")
    direction, mask, distance_init = best

    budget_exhausted = False
    try:
        theta, distance_final, trace = optimize_direction(
            session, x, goal, direction, config.optimizer,
            mask=mask, rng=optimizer_rng, initial_distance=distance_init,
            tolerance=config.boundary_tolerance)
    except BudgetExhausted as exhausted:
        theta = exhausted.direction
        distance_final = exhausted.distance
        trace = exhausted.trace
        budget_exhausted = True

    x_adv = VideoTensor._wrap(x.data + distance_final * (theta.data / l2_norm(theta)))
    with session.purpose("verify"):
        success = is_success(session.query(x_adv).label, goal)

    clamped_label = None
    if config.clamp:
        clamped = VideoTensor._wrap(np.clip(x_adv.data, 0.0, 255.0))
        with session.purpose("verify"):
            clamped_label = session.query(clamped).label

    perturbation = VideoTensor._wrap(x_adv.data - x.data)
    return AttackResult(
        success=success,
        x_adv=x_adv,
        queries=session.count,
        map=mean_abs_perturbation(perturbation),
        map_masked=mean_abs_perturbation_masked(perturbation, mask),
        sparsity=sparsity(mask),
        mask=mask,
        trace=trace,
        clamped_label=clamped_label,
        distance_init=distance_init,
        distance_final=distance_final,
        budget_exhausted=budget_exhausted,
        candidates_tried=len(attempts),
        key_frames=key_frame_count(mask),
        init_attempts=attempts,
    )
