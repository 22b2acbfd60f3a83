"""Command-line entry points tying the library into reproducible experiments.

Subcommands: ``attack`` (one video), ``bench`` (batch comparison across
sparsity variants), ``gen-dataset`` (synthetic data plus its victim),
``saliency`` (inspect spatial masks) and ``serve-victim`` (expose a victim
over HTTP). Exit codes: 0 success, 2 the attack itself failed, 1 bad
configuration or IO.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    BENCH_VARIANTS,
    CONFIG_ENV_VAR,
    ExperimentConfig,
    attack_config_from,
    config_from_dict,
    dataset_spec_from,
    load_config,
    resolve_dataset,
    resolve_victim,
)
from .dataset import generate_dataset, load_dataset, save_dataset
from .driver import attack
from .errors import (
    CleanSampleMisclassified,
    ConfigError,
    DatasetError,
    EmptyBatch,
    InsufficientCandidates,
    NoViableInitialization,
    RemoteUnavailable,
    SparsevidError,
)
from .metrics import aggregate, summary_report, write_rows_csv
from .saliency import spatial_mask, spectral_residual
from .server import serve_victim
from .tensors import VideoTensor, read_video, write_tensor
from .victim import QuerySession

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ATTACK_FAILED = 2


def _eprint(*parts):
    print(*parts, file=sys.stderr)


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _load_config_or_default(path: str | None) -> ExperimentConfig:
    import os

    if path is None and os.environ.get(CONFIG_ENV_VAR) is None:
        return config_from_dict({"schema": 1})
    return load_config(path)


def _purpose_breakdown(session: QuerySession) -> dict | None:
    if session.purpose_log is None:
        return None
    counts = Counter(session.purpose_log)
    total = sum(counts.values())
    breakdown = {tag: counts[tag] for tag in sorted(counts)}
    key_frame = counts["ranking"] + counts["prune"] + counts["init"]
    return {
        "counts": breakdown,
        "total": total,
        "key_frame_share": (key_frame / total) if total else 0.0,
    }


def _apply_attack_overrides(section: dict, args) -> dict:
    merged = dict(section)
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.goal is not None:
        merged["goal"] = args.goal
    if args.target_label is not None:
        merged["target_label"] = args.target_label
    if args.perturbation_bound is not None:
        merged["perturbation_bound"] = args.perturbation_bound
    if args.salient_ratio is not None:
        merged["salient_ratio"] = args.salient_ratio
    if args.candidates is not None:
        merged["candidates"] = args.candidates
    if args.no_temporal:
        merged["enable_temporal"] = False
    if args.no_spatial:
        merged["enable_spatial"] = False
    if args.clamp:
        merged["clamp"] = True
    optimizer = dict(merged.get("optimizer", {}))
    if args.iterations is not None:
        optimizer["max_iterations"] = args.iterations
    if args.budget is not None:
        optimizer["query_budget"] = args.budget
    merged["optimizer"] = optimizer
    return merged


def _attack_config_doc(cfg) -> dict:
    return {
        "goal": cfg.goal.describe(),
        "perturbation_bound": cfg.perturbation_bound,
        "salient_ratio": cfg.salient_ratio,
        "candidates": cfg.candidates,
        "seed": cfg.seed,
        "enable_temporal": cfg.enable_temporal,
        "enable_spatial": cfg.enable_spatial,
        "clamp": cfg.clamp,
        "boundary_tolerance": cfg.boundary_tolerance,
        "optimizer": {
            "smoothing": cfg.optimizer.smoothing,
            "gradient_samples": cfg.optimizer.gradient_samples,
            "step_size": cfg.optimizer.step_size,
            "min_step_size": cfg.optimizer.min_step_size,
            "min_smoothing": cfg.optimizer.min_smoothing,
            "max_iterations": cfg.optimizer.max_iterations,
            "query_budget": cfg.optimizer.query_budget,
            "target_distance": cfg.optimizer.target_distance,
        },
    }


def cmd_attack(args) -> int:
    config = _load_config_or_default(args.config)
    x = read_video(args.input)
    dataset, dataset_victim = resolve_dataset(config)
    victim = resolve_victim(config, dataset_victim, x.dims)
    attack_section = _apply_attack_overrides(config.attack_raw, args)
    attack_cfg = attack_config_from(attack_section, args.label,
                                    classes=dataset.classes,
                                    target_offset=config.bench.target_offset)
    session = QuerySession(victim, log_purposes=config.log_queries or args.log_queries)

    outdir = Path(args.output or config.output)
    outdir.mkdir(parents=True, exist_ok=True)

    try:
        result = attack(session, x, args.label, attack_cfg, dataset)
    except (CleanSampleMisclassified, NoViableInitialization,
            InsufficientCandidates, RemoteUnavailable) as exc:
        _eprint(f"attack errored: {exc}")
        _write_json(outdir / "report.json", {
            "schema": 1,
            "config": _attack_config_doc(attack_cfg),
            "status": "errored",
            "error": str(exc),
            "queries": session.count,
            "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        })
        return EXIT_ATTACK_FAILED

    export = result.x_adv
    if attack_cfg.clamp:
        export = VideoTensor._wrap(np.clip(result.x_adv.data, 0.0, 255.0))
    write_tensor(outdir / "x_adv.vbt", export)
    write_tensor(outdir / "mask.vbt", result.mask)

    trace_rows = result.trace.to_rows()
    with open(outdir / "trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "distance", "current_distance", "queries",
                         "step_size", "smoothing", "accepted"])
        for r in trace_rows:
            writer.writerow([r["iteration"], f"{r['distance']:.6f}",
                             f"{r['current_distance']:.6f}", r["queries"],
                             f"{r['step_size']:.6g}", f"{r['smoothing']:.6g}",
                             int(r["accepted"])])

    report = {
        "schema": 1,
        "config": _attack_config_doc(attack_cfg),
        "status": "ok",
        "success": result.success,
        "queries": result.queries,
        "map": result.map,
        "map_masked": result.map_masked,
        "sparsity": result.sparsity,
        "distance_init": result.distance_init,
        "distance_final": result.distance_final,
        "key_frames": result.key_frames,
        "candidates_tried": result.candidates_tried,
        "init_attempts": result.init_attempts,
        "budget_exhausted": result.budget_exhausted,
        "clamped_label": result.clamped_label,
        "files": {"x_adv": "x_adv.vbt", "mask": "mask.vbt", "trace_csv": "trace.csv"},
        "trace": trace_rows,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    breakdown = _purpose_breakdown(session)
    if breakdown is not None:
        report["query_breakdown"] = breakdown
        with open(outdir / "queries.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "purpose"])
            for i, tag in enumerate(session.purpose_log):
                writer.writerow([i, tag])
    _write_json(outdir / "report.json", report)

    if not args.no_figures:
        from .figures import render_trace_figure

        render_trace_figure(trace_rows, outdir / "trace.png")

    print(f"success={result.success} queries={result.queries} "
          f"map={result.map:.4f} sparsity={result.sparsity:.4f}")
    return EXIT_OK if result.success else EXIT_ATTACK_FAILED


@dataclass
class _FailedAttempt:
    """Attempted attack with no viable start: zero perturbation, full sparsity."""

    success: bool
    queries: int
    map: float = 0.0
    map_masked: float = 0.0
    sparsity: float = 1.0


def _sample_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence((base_seed, index)).generate_state(1)[0])


def run_bench(config: ExperimentConfig, *, jobs: int | None = None,
              limit: int | None = None, variants=None):
    """Run the benchmark and return ``(variant_reports, comparison, errors)``.

    Every variant attacks the same videos with the same per-sample seeds, so
    differences come from the sparsity machinery alone. Errored attacks
    (misclassified clean samples, remote failures) are excluded from the
    aggregation and reported separately.
    """
    dataset, dataset_victim = resolve_dataset(config)
    if not dataset.items:
        raise EmptyBatch("dataset holds no videos")
    dims = dataset.items[0].video.dims
    victim = resolve_victim(config, dataset_victim, dims)

    bench = config.bench
    jobs = jobs if jobs is not None else bench.jobs
    limit = limit if limit is not None else bench.limit
    variants = tuple(variants) if variants is not None else bench.variants
    targets = dataset.items[:limit] if limit is not None else dataset.items
    if not targets:
        raise EmptyBatch("video limit leaves nothing to attack")

    base_seed = int(config.attack_raw.get("seed", 0))
    variant_reports: dict[str, dict] = {}
    errors: list[dict] = []

    for variant in variants:
        enable_temporal, enable_spatial = BENCH_VARIANTS[variant]

        def run_one(indexed):
            index, item = indexed
            section = dict(config.attack_raw)
            section["enable_temporal"] = enable_temporal
            section["enable_spatial"] = enable_spatial
            section["seed"] = _sample_seed(base_seed, index)
            cfg = attack_config_from(section, item.label, classes=dataset.classes,
                                     target_offset=bench.target_offset)
            session = QuerySession(victim, log_purposes=config.log_queries)
            try:
                result = attack(session, item.video, item.label, cfg, dataset)
            except (NoViableInitialization, InsufficientCandidates) as exc:
                return index, _FailedAttempt(False, session.count), None, str(exc)
            except (CleanSampleMisclassified, RemoteUnavailable) as exc:
                return index, None, None, str(exc)
            return index, result, _purpose_breakdown(session), None

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(run_one, enumerate(targets)))
        else:
            outcomes = [run_one(pair) for pair in enumerate(targets)]
        outcomes.sort(key=lambda o: o[0])

        results, ids = [], []
        breakdown_total: Counter = Counter()
        for index, result, breakdown, error in outcomes:
            item = targets[index]
            if result is None:
                errors.append({"variant": variant, "id": item.sample_id, "error": error})
                continue
            results.append(result)
            ids.append(item.sample_id)
            if breakdown:
                breakdown_total.update(breakdown["counts"])
        if not results:
            raise EmptyBatch(f"variant {variant!r}: every attack errored")

        summary = aggregate(results, ids)
        config_doc = {
            "variant": variant,
            "enable_temporal": enable_temporal,
            "enable_spatial": enable_spatial,
            "videos": len(targets),
            "seed": base_seed,
            "goal": config.attack_raw.get("goal", "untargeted"),
        }
        report = summary_report(summary, config_doc)
        if breakdown_total:
            total = sum(breakdown_total.values())
            report["query_breakdown"] = {
                "counts": dict(sorted(breakdown_total.items())),
                "total": total,
                "key_frame_share": (breakdown_total["ranking"] + breakdown_total["prune"]
                                    + breakdown_total["init"]) / total,
            }
        variant_reports[variant] = report

    comparison = None
    if "baseline" in variant_reports and len(variant_reports) > 1:
        base_mq = variant_reports["baseline"]["summary"]["mq"]
        comparison = {"baseline_mq": base_mq, "query_reduction": {}}
        for variant, report in variant_reports.items():
            if variant == "baseline":
                continue
            mq = report["summary"]["mq"]
            comparison["query_reduction"][variant] = (
                1.0 - mq / base_mq if base_mq else None
            )
    return variant_reports, comparison, errors


def cmd_bench(args) -> int:
    config = _load_config_or_default(args.config)
    variants = args.variants.split(",") if args.variants else None
    if variants:
        for v in variants:
            if v not in BENCH_VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; pick from {sorted(BENCH_VARIANTS)}")
    variant_reports, comparison, errors = run_bench(
        config, jobs=args.jobs, limit=args.limit, variants=variants)

    outdir = Path(args.output or config.output)
    outdir.mkdir(parents=True, exist_ok=True)
    for variant, report in variant_reports.items():
        _write_json(outdir / f"report_{variant}.json", report)
        write_rows_csv(outdir / f"report_{variant}.csv", report["rows"],
                       extra_columns={"variant": variant})

    bench_doc = {
        "schema": 1,
        "variants": variant_reports,
        "comparison": comparison,
        "errors": errors,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    _write_json(outdir / "bench.json", bench_doc)

    with open(outdir / "rows.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "id", "success", "queries", "map", "map_masked", "sparsity"])
        for variant, report in variant_reports.items():
            for row in report["rows"]:
                writer.writerow([variant, row["id"], int(row["success"]), row["queries"],
                                 f"{row['map']:.6f}", f"{row['map_masked']:.6f}",
                                 f"{row['sparsity']:.6f}"])

    if not args.no_figures:
        from .figures import render_bench_figures

        render_bench_figures(variant_reports, outdir)

    for variant, report in variant_reports.items():
        s = report["summary"]
        print(f"{variant}: fr={s['fr']:.2f} mq={s['mq']:.1f} "
              f"map={s['map'] if s['map'] is None else round(s['map'], 4)} "
              f"s={s['s'] if s['s'] is None else round(s['s'], 4)}")
    if comparison:
        for variant, reduction in comparison["query_reduction"].items():
            if reduction is not None:
                print(f"query reduction {variant} vs baseline: {reduction:.2%}")
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    config = _load_config_or_default(args.config)
    section = dict(config.dataset.get("generate", {}))
    for key in ("seed", "classes", "samples_per_class", "frames", "width",
                "height", "channels"):
        value = getattr(args, key)
        if value is not None:
            section[key] = value
    if args.oblivious_frames is not None:
        section["oblivious_frames"] = [int(f) for f in args.oblivious_frames.split(",") if f]
    spec = dataset_spec_from(section)
    dataset, victim = generate_dataset(spec)
    outdir = Path(args.output or config.output)
    save_dataset(dataset, victim, outdir)
    print(f"wrote {len(dataset)} videos over {spec.classes} classes to {outdir} "
          f"(victim accuracy verified at 100%)")
    return EXIT_OK


def cmd_saliency(args) -> int:
    if not 0.0 < args.ratio <= 1.0:
        raise ConfigError(f"salient ratio must be in (0, 1], got {args.ratio}")
    video = read_video(args.input)
    maps = [spectral_residual(video.data[t]) for t in range(video.frames)]
    mask = spatial_mask(video, args.ratio)

    outdir = Path(args.output or "out")
    outdir.mkdir(parents=True, exist_ok=True)
    scores = np.stack([m.values for m in maps])[:, :, :, None]
    write_tensor(outdir / "saliency.vbt", VideoTensor._wrap(scores))
    write_tensor(outdir / "mask.vbt", mask)
    if not args.no_figures:
        from .figures import render_saliency_figure

        render_saliency_figure(video, maps, mask, outdir / "saliency.png")
    degenerate = sum(1 for m in maps if m.degenerate)
    print(f"wrote saliency maps and mask for {video.frames} frames to {outdir}"
          + (f" ({degenerate} degenerate frames)" if degenerate else ""))
    return EXIT_OK


def cmd_serve_victim(args) -> int:
    config = _load_config_or_default(args.config)
    dims = None
    dataset_victim = None
    if args.dataset or "path" in config.dataset or "generate" in config.dataset:
        if args.dataset:
            dataset, dataset_victim = load_dataset(args.dataset)
        else:
            dataset, dataset_victim = resolve_dataset(config)
        if dataset.items:
            dims = dataset.items[0].video.dims
    if args.dims:
        dims = tuple(int(d) for d in args.dims.split(","))
    victim = resolve_victim(config, dataset_victim, dims)
    server = serve_victim(victim, host=args.host, port=args.port, background=False)
    print(f"serving victim on {server.url} (POST /v1/classify)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsevid",
        description="Query-efficient hard-label black-box attacks on video tensors",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help=f"experiment config JSON (default ${CONFIG_ENV_VAR})")
        p.add_argument("--output", help="output directory (overrides config)")

    p = sub.add_parser("attack", help="attack one video")
    add_common(p)
    p.add_argument("--input", required=True, help="clean video as a VBT1 file")
    p.add_argument("--label", required=True, type=int, help="true label of the input")
    p.add_argument("--goal", choices=["untargeted", "targeted"])
    p.add_argument("--target-label", type=int, dest="target_label")
    p.add_argument("--seed", type=int)
    p.add_argument("--candidates", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--budget", type=int, help="absolute query budget for optimization")
    p.add_argument("--perturbation-bound", type=float, dest="perturbation_bound")
    p.add_argument("--salient-ratio", type=float, dest="salient_ratio")
    p.add_argument("--no-temporal", action="store_true")
    p.add_argument("--no-spatial", action="store_true")
    p.add_argument("--clamp", action="store_true",
                   help="clip the exported example to [0,255] and report its label")
    p.add_argument("--log-queries", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", help="benchmark sparsity variants over a dataset")
    add_common(p)
    p.add_argument("--jobs", type=int, help="concurrent attacks")
    p.add_argument("--limit", type=int, help="attack only the first N videos")
    p.add_argument("--variants", help="comma-separated subset of "
                                      f"{sorted(BENCH_VARIANTS)}")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-dataset", help="generate a synthetic dataset and victim")
    add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--samples-per-class", type=int, dest="samples_per_class")
    p.add_argument("--frames", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--oblivious-frames", dest="oblivious_frames",
                   help="comma-separated frame indices the victim ignores")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("saliency", help="export saliency maps and the spatial mask")
    add_common(p)
    p.add_argument("--input", required=True, help="video as a VBT1 file")
    p.add_argument("--ratio", required=True, type=float,
                   help="fraction of pixels to keep per frame, in (0, 1]")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("serve-victim", help="serve a victim over HTTP")
    add_common(p)
    p.add_argument("--dataset", help="dataset directory providing the victim")
    p.add_argument("--dims", help="expected dims t,w,h,c for builtin victims")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve_victim)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, EmptyBatch) as exc:
        _eprint(f"error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _eprint(f"io error: {exc}")
        return EXIT_CONFIG
    except SparsevidError as exc:
        _eprint(f"attack error: {exc}")
        return EXIT_ATTACK_FAILED


if __name__ == "__main__":
    sys.exit(main())
