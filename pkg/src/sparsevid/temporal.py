"""Heuristic temporal sparsity: rank frames, then greedily prune the mask.

Frame importance is probed leave-one-frame-out: zeroing an unimportant frame
from the perturbation keeps the goal satisfied with high reported
probability. Pruning walks the ranking and drops frames while the mean
absolute perturbation stays under the bound, or while dropping strictly
improves it once over the bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boundary import DEFAULT_TOLERANCE, AttackGoal, boundary_distance, is_success
from .errors import ZeroDirection
from .tensors import BinaryMask, Direction, VideoTensor, del_frame, key_frame_count
from .victim import QuerySession

__all__ = ["FrameScore", "FrameRanking", "rank_frames", "prune_frames"]


@dataclass(frozen=True)
class FrameScore:
    frame: int
    probability: float


@dataclass(frozen=True)
class FrameRanking:
    """Frames whose removal keeps the goal satisfied, most expendable first.

    Sorted by reported probability descending; a higher probability after
    removal means the frame mattered less. Ties break toward the lower frame
    index so rankings are deterministic.
    """

    entries: tuple[FrameScore, ...]

    def frames(self) -> list[int]:
        return [e.frame for e in self.entries]


def rank_frames(session: QuerySession, x: VideoTensor, perturbation: VideoTensor,
                mask: BinaryMask, goal: AttackGoal) -> FrameRanking:
    """Probe each frame's removal and rank the removable ones.

    Costs exactly ``frames`` queries. The caller must have verified that
    ``x + perturbation * mask`` satisfies the goal before ranking.
    """
    scores = []
    with session.purpose("ranking"):
        for t in range(mask.frames):
            probe_mask = del_frame(mask, t)
            probe = VideoTensor._wrap(x.data + perturbation.data * probe_mask.data)
            response = session.query(probe)
            if is_success(response.label, goal):
                scores.append(FrameScore(t, response.probability))
    scores.sort(key=lambda s: (-s.probability, s.frame))
    return FrameRanking(tuple(scores))


def _mean_abs(arr: np.ndarray) -> float:
    return float(np.mean(np.abs(arr)))


def prune_frames(session: QuerySession, x: VideoTensor, perturbation: VideoTensor,
                 mask: BinaryMask, ranking: FrameRanking, bound: float,
                 goal: AttackGoal, *, tolerance: float = DEFAULT_TOLERANCE):
    """Greedily delete ranked frames from the mask.

    For each candidate frame (in ranking order) the frame is dropped from
    the current mask and the masked perturbation is re-queried. If the goal
    still holds, the candidate's mean absolute perturbation at the boundary
    decides: at or under ``bound`` the smaller mask wins, over ``bound`` the
    candidate must strictly improve on the incumbent's value. Each such
    evaluation is a full boundary search and its queries are counted; with an
    infinite bound the value is never needed and no searches are spent. The
    incumbent's own value is computed at most once and cached.

    Returns ``(mask, direction)``: the final mask and the normalized masked
    direction that goes with it.
    """
    if bound < 0:
        raise ValueError("perturbation bound must be >= 0")
    current_mask = mask
    masked = perturbation.data * mask.data
    norm = float(np.linalg.norm(masked.ravel()))
    if norm == 0.0:
        raise ZeroDirection("perturbation vanishes under the initial mask")
    incumbent = masked / norm
    incumbent_norm = norm
    incumbent_value: float | None = None
    bounded = math.isfinite(bound)

    def value_of(theta: np.ndarray, hint: float) -> float:
        result = boundary_distance(session, x, goal, theta, hint, tolerance=tolerance)
        return result.distance * _mean_abs(theta)

    with session.purpose("prune"):
        for entry in ranking.entries:
            candidate_mask = del_frame(current_mask, entry.frame)
            p_hat = perturbation.data * candidate_mask.data
            probe = VideoTensor._wrap(x.data + p_hat)
            if not is_success(session.query(probe).label, goal):
                continue
            norm = float(np.linalg.norm(p_hat.ravel()))
            if norm == 0.0:
                continue
            theta = p_hat / norm
            if not bounded:
                accept = key_frame_count(candidate_mask) < key_frame_count(current_mask)
                candidate_value = None
            else:
                candidate_value = value_of(theta, norm)
                if candidate_value <= bound:
                    accept = key_frame_count(candidate_mask) < key_frame_count(current_mask)
                else:
                    if incumbent_value is None:
                        incumbent_value = value_of(incumbent, incumbent_norm)
                    accept = candidate_value < incumbent_value
            if accept:
                current_mask = candidate_mask
                incumbent = theta
                incumbent_norm = norm
                incumbent_value = candidate_value

    return current_mask, Direction._wrap(incumbent)
