"""Query-efficient hard-label black-box adversarial attacks on video tensors.

The attack sees only the victim's top-1 class and its probability. It
measures the distance to the decision boundary along candidate directions,
optimizes that distance with zeroth-order gradient estimates, and keeps the
perturbation sparse in time (pruned key frames) and space (salient regions).
"""

from .boundary import AttackGoal, BoundaryDistance, boundary_distance, is_success
from .dataset import DatasetSpec, LabeledVideo, VideoDataset, generate_dataset, load_dataset, save_dataset
from .driver import AttackConfig, AttackResult, attack, initialize_direction, sample_candidates
from .errors import SparsevidError
from .metrics import (
    MetricsSummary,
    aggregate,
    mean_abs_perturbation,
    mean_abs_perturbation_masked,
    sparsity,
)
from .optimizer import OptimizerConfig, estimate_gradient, line_search_step, optimize_direction
from .saliency import SaliencyMap, select_salient, spatial_mask, spectral_residual
from .server import serve_victim
from .temporal import FrameRanking, prune_frames, rank_frames
from .tensors import (
    BinaryMask,
    Direction,
    VideoTensor,
    apply_mask,
    del_frame,
    key_frame_count,
    l2_norm,
    normalize,
    read_mask,
    read_video,
    write_tensor,
)
from .victim import FrameObliviousVictim, LinearSoftmaxVictim, QuerySession, RemoteVictim, VictimResponse

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackGoal",
    "AttackResult",
    "BinaryMask",
    "BoundaryDistance",
    "DatasetSpec",
    "Direction",
    "FrameObliviousVictim",
    "FrameRanking",
    "LabeledVideo",
    "LinearSoftmaxVictim",
    "MetricsSummary",
    "OptimizerConfig",
    "QuerySession",
    "RemoteVictim",
    "SaliencyMap",
    "SparsevidError",
    "VictimResponse",
    "VideoDataset",
    "VideoTensor",
    "aggregate",
    "apply_mask",
    "attack",
    "boundary_distance",
    "del_frame",
    "estimate_gradient",
    "generate_dataset",
    "initialize_direction",
    "is_success",
    "key_frame_count",
    "l2_norm",
    "line_search_step",
    "load_dataset",
    "mean_abs_perturbation",
    "mean_abs_perturbation_masked",
    "normalize",
    "optimize_direction",
    "prune_frames",
    "rank_frames",
    "read_mask",
    "read_video",
    "sample_candidates",
    "save_dataset",
    "select_salient",
    "serve_victim",
    "sparsity",
    "spatial_mask",
    "spectral_residual",
    "write_tensor",
]
