"""Experiment configuration: strict JSON with a versioned schema.

Unknown keys are hard errors. A typo in a parameter name would silently
invalidate an experiment, so strictness is part of the contract. Every
default is resolved here and echoed into reports, making runs reproducible
from their own output.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .boundary import AttackGoal
from .dataset import DatasetSpec, load_dataset
from .driver import AttackConfig
from .errors import ConfigError
from .optimizer import OptimizerConfig
from .victim import LinearSoftmaxVictim, RemoteVictim

__all__ = ["ExperimentConfig", "BenchSettings", "load_config", "config_from_dict",
           "CONFIG_ENV_VAR", "BENCH_VARIANTS"]

CONFIG_ENV_VAR = "SPARSEVID_CONFIG"

# Variant name -> (enable_temporal, enable_spatial)
BENCH_VARIANTS = {
    "baseline": (False, False),
    "temporal": (True, False),
    "temporal_spatial": (True, True),
}


@dataclass(frozen=True)
class BenchSettings:
    variants: tuple[str, ...] = ("baseline", "temporal", "temporal_spatial")
    jobs: int = 1
    limit: int | None = None
    target_offset: int = 1


@dataclass
class ExperimentConfig:
    victim: dict = field(default_factory=lambda: {"kind": "dataset"})
    dataset: dict = field(default_factory=dict)
    attack: AttackConfig | None = None
    attack_raw: dict = field(default_factory=dict)
    bench: BenchSettings = field(default_factory=BenchSettings)
    output: str = "out"
    log_queries: bool = False


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _number(section, key, where, default=None, allow_none=False, allow_inf=False):
    if key not in section:
        return default
    value = section[key]
    if value is None and allow_none:
        return None
    if isinstance(value, str) and allow_inf and value in ("inf", "Infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    return value


def _optimizer_from(section: dict) -> OptimizerConfig:
    where = "attack.optimizer"
    _require_keys(section, {
        "smoothing", "gradient_samples", "step_size", "min_step_size",
        "min_smoothing", "max_iterations", "query_budget", "target_distance",
    }, where)
    defaults = OptimizerConfig()
    try:
        return OptimizerConfig(
            smoothing=_number(section, "smoothing", where, defaults.smoothing),
            gradient_samples=int(_number(section, "gradient_samples", where, defaults.gradient_samples)),
            step_size=_number(section, "step_size", where, defaults.step_size),
            min_step_size=_number(section, "min_step_size", where, defaults.min_step_size),
            min_smoothing=_number(section, "min_smoothing", where, defaults.min_smoothing),
            max_iterations=int(_number(section, "max_iterations", where, defaults.max_iterations)),
            query_budget=(None if section.get("query_budget") is None
                          else int(_number(section, "query_budget", where, allow_none=True))),
            target_distance=_number(section, "target_distance", where, None, allow_none=True),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def attack_config_from(section: dict, true_label: int, classes: int | None = None,
                       target_offset: int = 1) -> AttackConfig:
    """Materialize an AttackConfig for one sample from the raw attack section.

    The goal needs the sample's true label; targeted runs use the explicit
    ``target_label`` or fall back to ``(label + target_offset) % classes``.
    """
    where = "attack"
    goal_kind = section.get("goal", "untargeted")
    if goal_kind == "untargeted":
        goal = AttackGoal.untargeted(true_label)
    elif goal_kind == "targeted":
        target = section.get("target_label")
        if target is None:
            if classes is None:
                raise ConfigError("targeted attack needs target_label or a dataset with classes")
            target = (true_label + target_offset) % classes
        goal = AttackGoal.targeted(int(target))
    else:
        raise ConfigError(f"attack.goal must be 'untargeted' or 'targeted', got {goal_kind!r}")

    overrides = {}
    if "perturbation_bound" in section:
        overrides["perturbation_bound"] = _number(section, "perturbation_bound", where, allow_inf=True)
    if "salient_ratio" in section:
        overrides["salient_ratio"] = _number(section, "salient_ratio", where)
    if "candidates" in section:
        overrides["candidates"] = int(_number(section, "candidates", where))
    if "seed" in section:
        overrides["seed"] = int(_number(section, "seed", where))
    if "boundary_tolerance" in section:
        overrides["boundary_tolerance"] = _number(section, "boundary_tolerance", where)
    for flag in ("enable_temporal", "enable_spatial", "clamp"):
        if flag in section:
            value = section[flag]
            if not isinstance(value, bool):
                raise ConfigError(f"{where}.{flag} must be a boolean")
            overrides[flag] = value
    overrides["optimizer"] = _optimizer_from(section.get("optimizer", {}))
    try:
        return AttackConfig.for_goal(goal, **overrides)
    except ValueError as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def _validate_attack_section(section: dict) -> None:
    _require_keys(section, {
        "goal", "target_label", "perturbation_bound", "salient_ratio",
        "candidates", "seed", "enable_temporal", "enable_spatial", "clamp",
        "boundary_tolerance", "optimizer",
    }, "attack")
    _optimizer_from(section.get("optimizer", {}))


def _bench_from(section: dict) -> BenchSettings:
    _require_keys(section, {"variants", "jobs", "limit", "target_offset"}, "bench")
    variants = section.get("variants", list(BenchSettings().variants))
    if not isinstance(variants, list) or not variants:
        raise ConfigError("bench.variants must be a non-empty list")
    for v in variants:
        if v not in BENCH_VARIANTS:
            raise ConfigError(f"unknown bench variant {v!r}; pick from {sorted(BENCH_VARIANTS)}")
    return BenchSettings(
        variants=tuple(variants),
        jobs=int(_number(section, "jobs", "bench", 1)),
        limit=(None if section.get("limit") is None
               else int(_number(section, "limit", "bench", allow_none=True))),
        target_offset=int(_number(section, "target_offset", "bench", 1)),
    )


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a JSON object")
    _require_keys(doc, {"schema", "victim", "dataset", "attack", "bench", "output",
                        "log_queries"}, "config")
    if doc.get("schema") != 1:
        raise ConfigError(f"unsupported config schema {doc.get('schema')!r}, expected 1")

    victim = doc.get("victim", {"kind": "dataset"})
    _require_keys(victim, {"kind", "seed", "classes", "temperature", "level",
                           "oblivious_frames", "url", "path", "dims"}, "victim")
    kind = victim.get("kind", "dataset")
    if kind not in ("dataset", "linear_softmax", "mean_threshold", "remote"):
        raise ConfigError(f"unknown victim kind {kind!r}")

    dataset = doc.get("dataset", {})
    _require_keys(dataset, {"path", "generate"}, "dataset")
    if "generate" in dataset:
        _require_keys(dataset["generate"], {
            "seed", "classes", "samples_per_class", "frames", "width", "height",
            "channels", "oblivious_frames", "noise_sigma", "smoothness", "logit_gap",
        }, "dataset.generate")

    attack_section = doc.get("attack", {})
    _validate_attack_section(attack_section)

    log_queries = doc.get("log_queries", False)
    if not isinstance(log_queries, bool):
        raise ConfigError("log_queries must be a boolean")

    return ExperimentConfig(
        victim=victim,
        dataset=dataset,
        attack_raw=attack_section,
        bench=_bench_from(doc.get("bench", {})),
        output=str(doc.get("output", "out")),
        log_queries=log_queries,
    )


def load_config(path=None) -> ExperimentConfig:
    """Load a config file, falling back to the environment default path."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
        if path is None:
            raise ConfigError(
                f"no config file given and {CONFIG_ENV_VAR} is not set"
            )
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def dataset_spec_from(section: dict) -> DatasetSpec:
    defaults = DatasetSpec()
    try:
        return DatasetSpec(
            seed=int(section.get("seed", defaults.seed)),
            classes=int(section.get("classes", defaults.classes)),
            samples_per_class=int(section.get("samples_per_class", defaults.samples_per_class)),
            frames=int(section.get("frames", defaults.frames)),
            width=int(section.get("width", defaults.width)),
            height=int(section.get("height", defaults.height)),
            channels=int(section.get("channels", defaults.channels)),
            oblivious_frames=tuple(section.get("oblivious_frames", ())),
            noise_sigma=float(section.get("noise_sigma", defaults.noise_sigma)),
            smoothness=float(section.get("smoothness", defaults.smoothness)),
            logit_gap=float(section.get("logit_gap", defaults.logit_gap)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid dataset.generate: {exc}") from exc


def resolve_dataset(config: ExperimentConfig):
    """Produce ``(dataset, victim_from_dataset)`` per the dataset section."""
    from .dataset import generate_dataset

    section = config.dataset
    if "path" in section and "generate" in section:
        raise ConfigError("dataset: give either path or generate, not both")
    if "path" in section:
        return load_dataset(section["path"])
    if "generate" in section:
        return generate_dataset(dataset_spec_from(section["generate"]))
    raise ConfigError("dataset: need a path or a generate block")


def resolve_victim(config: ExperimentConfig, dataset_victim, dims):
    """Build the victim per the victim section, defaulting to the dataset's."""
    from .victim import FrameObliviousVictim

    section = config.victim
    kind = section.get("kind", "dataset")
    if kind == "dataset":
        if dataset_victim is None:
            raise ConfigError("victim kind 'dataset' needs a dataset that ships a victim")
        return dataset_victim
    if dims is None and not section.get("dims"):
        raise ConfigError(f"victim kind {kind!r} needs tensor dims "
                          "(from a dataset, an input tensor, or victim.dims)")
    if section.get("dims"):
        dims = tuple(int(d) for d in section["dims"])
    if kind == "linear_softmax":
        victim = LinearSoftmaxVictim.random(
            dims,
            classes=int(section.get("classes", 2)),
            seed=int(section.get("seed", 0)),
            temperature=float(section.get("temperature", 1.0)),
        )
        frames = section.get("oblivious_frames") or []
        if frames:
            victim = FrameObliviousVictim(victim, frames)
        return victim
    if kind == "mean_threshold":
        return LinearSoftmaxVictim.mean_threshold(
            dims,
            level=float(section.get("level", 100.0)),
            temperature=float(section.get("temperature", 1.0)),
        )
    if kind == "remote":
        url = section.get("url")
        if not url:
            raise ConfigError("victim kind 'remote' needs a url")
        return RemoteVictim(url, dims=section.get("dims") or dims)
    raise ConfigError(f"unknown victim kind {kind!r}")
