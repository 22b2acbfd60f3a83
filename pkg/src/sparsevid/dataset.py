"""Synthetic datasets with analytically separable victims.

A generated dataset is a set of videos clustered around per-class prototype
patterns, together with the nearest-prototype linear victim that classifies
its own samples perfectly. Generation is bit-reproducible from the seed, and
everything serializes to plain VBT1 tensors plus JSON manifests so directory
trees are byte-identical across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DatasetError
from .tensors import VideoTensor, read_video, write_tensor
from .victim import FrameObliviousVictim, LinearSoftmaxVictim

__all__ = [
    "LabeledVideo",
    "VideoDataset",
    "DatasetSpec",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "save_victim",
    "load_victim",
]


@dataclass(frozen=True)
class LabeledVideo:
    sample_id: str
    label: int
    video: VideoTensor


@dataclass
class VideoDataset:
    items: list[LabeledVideo] = field(default_factory=list)
    classes: int = 0

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def of_label(self, label: int) -> list[LabeledVideo]:
        return [item for item in self.items if item.label == label]

    def excluding_label(self, label: int) -> list[LabeledVideo]:
        return [item for item in self.items if item.label != label]


@dataclass(frozen=True)
class DatasetSpec:
    """Generator parameters; same spec and seed means same bytes out.

    ``oblivious_frames`` wraps the victim so those frames never influence its
    output, giving the bench a ground truth for temporal pruning.
    ``logit_gap`` calibrates the victim temperature so top-1 probabilities
    are informative rather than saturated.
    """

    seed: int = 0
    classes: int = 2
    samples_per_class: int = 10
    frames: int = 16
    width: int = 32
    height: int = 32
    channels: int = 3
    oblivious_frames: tuple[int, ...] = ()
    noise_sigma: float = 8.0
    smoothness: float = 3.0
    logit_gap: float = 4.0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        if self.samples_per_class < 1:
            raise ValueError("need at least 1 sample per class")
        if min(self.frames, self.width, self.height, self.channels) < 1:
            raise ValueError("geometry dims must be >= 1")
        for f in self.oblivious_frames:
            if not 0 <= f < self.frames:
                raise ValueError(f"oblivious frame {f} outside [0, {self.frames})")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.frames, self.width, self.height, self.channels)


def _rng(seed, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, stream))))


def _prototypes(spec: DatasetSpec) -> np.ndarray:
    """Smooth per-class patterns on the 0-255 scale, well separated in L2."""
    rng = _rng(spec.seed, 0)
    raw = rng.standard_normal((spec.classes, *spec.dims))
    smooth = ndimage.gaussian_filter(raw, sigma=(0, 0, spec.smoothness, spec.smoothness, 0))
    flat = smooth.reshape(spec.classes, -1)
    lo = flat.min(axis=1, keepdims=True)
    hi = flat.max(axis=1, keepdims=True)
    scaled = (flat - lo) / np.where(hi - lo == 0, 1.0, hi - lo)
    return (40.0 + 175.0 * scaled).reshape(spec.classes, *spec.dims)


def generate_dataset(spec: DatasetSpec):
    """Build ``(dataset, victim)`` and verify the victim's perfect accuracy.

    The victim is the nearest-prototype classifier written as a linear
    softmax model (weights P_k, biases -|P_k|^2 / 2, jointly rescaled so the
    median winning margin equals ``logit_gap``). Samples are prototypes plus
    Gaussian noise, far smaller than the inter-prototype separation.
    """
    protos = _prototypes(spec)
    rng = _rng(spec.seed, 1)
    items = []
    for label in range(spec.classes):
        for j in range(spec.samples_per_class):
            data = protos[label] + rng.normal(0.0, spec.noise_sigma, spec.dims)
            items.append(LabeledVideo(f"{label:02d}_{j:03d}", label, VideoTensor._wrap(data)))
    dataset = VideoDataset(items, classes=spec.classes)

    flat = protos.reshape(spec.classes, -1)
    weights = protos.copy()
    biases = -0.5 * np.sum(flat * flat, axis=1)
    if spec.oblivious_frames:
        visible = np.ones(spec.dims)
        visible[list(spec.oblivious_frames)] = 0.0
        masked = (flat * visible.ravel()).reshape(spec.classes, -1)
        weights = masked.reshape(spec.classes, *spec.dims)
        biases = -0.5 * np.sum(masked * masked, axis=1)

    margins = []
    wflat = weights.reshape(spec.classes, -1)
    for item in dataset:
        scores = wflat @ item.video.data.ravel() + biases
        top_two = np.sort(scores)[-2:]
        margins.append(top_two[1] - top_two[0])
    temperature = float(np.median(margins) / spec.logit_gap)
    victim = LinearSoftmaxVictim(weights, biases, temperature=temperature)
    classifier = victim
    if spec.oblivious_frames:
        classifier = FrameObliviousVictim(victim, spec.oblivious_frames)

    for item in dataset:
        if classifier.classify(item.video).label != item.label:
            raise DatasetError(
                f"generated victim misclassifies {item.sample_id}; "
                "widen prototype separation or reduce noise_sigma"
            )
    return dataset, classifier


def save_victim(victim, directory: Path) -> dict:
    """Write victim weights as VBT1 files plus a JSON descriptor; returns it."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    inner = victim
    oblivious = []
    if isinstance(victim, FrameObliviousVictim):
        oblivious = list(victim.ignored_frames)
        inner = victim.inner
    if not isinstance(inner, LinearSoftmaxVictim):
        raise DatasetError(f"cannot serialize victim of type {type(victim).__name__}")
    weight_files = []
    for k in range(inner.classes):
        name = f"victim_w{k:03d}.vbt"
        write_tensor(directory / name, VideoTensor._wrap(inner.weights[k].copy()))
        weight_files.append(name)
    descriptor = {
        "schema": 1,
        "kind": "linear_softmax",
        "classes": inner.classes,
        "temperature": inner.temperature,
        "biases": [float(b) for b in inner.biases],
        "weight_files": weight_files,
        "oblivious_frames": oblivious,
    }
    (directory / "victim.json").write_text(json.dumps(descriptor, indent=2) + "\n", encoding="utf-8")
    return descriptor


def load_victim(directory: Path):
    directory = Path(directory)
    path = directory / "victim.json"
    if not path.exists():
        raise DatasetError(f"no victim.json under {directory}")
    descriptor = json.loads(path.read_text())
    if descriptor.get("kind") != "linear_softmax":
        raise DatasetError(f"unsupported victim kind {descriptor.get('kind')!r}")
    weights = np.stack([read_video(directory / f).data for f in descriptor["weight_files"]])
    victim = LinearSoftmaxVictim(weights, np.asarray(descriptor["biases"], dtype=np.float64),
                                 temperature=float(descriptor["temperature"]))
    frames = descriptor.get("oblivious_frames") or []
    if frames:
        return FrameObliviousVictim(victim, frames)
    return victim


def save_dataset(dataset: VideoDataset, victim, directory: Path) -> None:
    """Write a dataset directory: manifest, victim descriptor and video files."""
    directory = Path(directory)
    (directory / "videos").mkdir(parents=True, exist_ok=True)
    entries = []
    for item in dataset:
        name = f"videos/sample_{item.sample_id}.vbt"
        write_tensor(directory / name, item.video)
        entries.append({"id": item.sample_id, "label": item.label, "file": name})
    t, w, h, c = dataset.items[0].video.dims if dataset.items else (0, 0, 0, 0)
    manifest = {
        "schema": 1,
        "classes": dataset.classes,
        "geometry": {"t": t, "w": w, "h": h, "c": c},
        "videos": entries,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    if victim is not None:
        save_victim(victim, directory)


def load_dataset(directory: Path):
    """Read back ``(dataset, victim_or_None)`` from a dataset directory."""
    directory = Path(directory)
    path = directory / "manifest.json"
    if not path.exists():
        raise DatasetError(f"no manifest.json under {directory}")
    manifest = json.loads(path.read_text())
    items = []
    for entry in manifest["videos"]:
        items.append(LabeledVideo(str(entry["id"]), int(entry["label"]),
                                  read_video(directory / entry["file"])))
    classes = int(manifest.get("classes") or (1 + max((i.label for i in items), default=-1)))
    victim = None
    if (directory / "victim.json").exists():
        victim = load_victim(directory)
    return VideoDataset(items, classes=classes), victim
