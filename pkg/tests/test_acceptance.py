"""Acceptance suite: one test per verification criterion, each printing a
PASS line (run with ``pytest -s tests/test_acceptance.py`` to see them).

Every expected value is either exact arithmetic, a closed-form oracle
computed in the test, or a constant frozen from an independent oracle run
recorded in the comment next to it.
"""

import json
import math
import time
from collections import Counter

import numpy as np
import pytest

from sparsevid import (
    AttackConfig,
    AttackGoal,
    BinaryMask,
    Direction,
    FrameObliviousVictim,
    LinearSoftmaxVictim,
    OptimizerConfig,
    QuerySession,
    RemoteVictim,
    VideoTensor,
    aggregate,
    attack,
    boundary_distance,
    estimate_gradient,
    key_frame_count,
    mean_abs_perturbation,
    mean_abs_perturbation_masked,
    optimize_direction,
    prune_frames,
    rank_frames,
    select_salient,
    serve_victim,
    sparsity,
    spectral_residual,
)
from sparsevid.config import config_from_dict
from sparsevid.cli import run_bench
from sparsevid.dataset import DatasetSpec, LabeledVideo, VideoDataset, generate_dataset
from conftest import philox


def report(name: str, detail: str = ""):
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {name}: PASS{suffix}")


# ---------------------------------------------------------------------------
# 1. Boundary oracle


def test_boundary_oracle_against_hyperplanes():
    started = time.monotonic()
    dims = (16, 32, 32, 3)
    n = int(np.prod(dims))
    rng = philox(81)
    victim = LinearSoftmaxVictim.random(dims, classes=2, seed=81)
    session = QuerySession(victim)

    base = rng.uniform(40, 215, dims)
    y = victim.classify(VideoTensor(base)).label
    dw = victim.weights[y] - victim.weights[1 - y]
    dwu = dw / np.linalg.norm(dw)
    margin0 = float(dw.ravel() @ base.ravel()) + float(victim.biases[y] - victim.biases[1 - y])
    # place the clean point a controlled margin from the boundary so a good
    # share of random directions cross within the search cap
    target_margin = 0.02
    x = VideoTensor(base - (margin0 - target_margin) / np.linalg.norm(dw) * dwu)
    assert victim.classify(x).label == y
    goal = AttackGoal.untargeted(y)
    margin = float(dw.ravel() @ x.data.ravel()) + float(victim.biases[y] - victim.biases[1 - y])

    checked = 0
    for _ in range(100):
        theta = rng.standard_normal(dims)
        unit = theta / np.linalg.norm(theta)
        rate = float(dw.ravel() @ unit.ravel())
        if rate >= 0:
            continue
        analytic = -margin / rate
        if analytic > 8000.0:
            continue
        result = boundary_distance(session, x, goal, theta)
        assert abs(result.distance - analytic) <= 0.02, (
            f"direction off by {abs(result.distance - analytic)}"
        )
        checked += 1
    elapsed = time.monotonic() - started
    assert checked >= 25
    assert elapsed < 30.0
    report("boundary-oracle", f"{checked} crossing directions, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. Gradient estimator


def test_gradient_estimator_single_draw_and_cosine():
    dims = (4, 4, 4, 1)  # 64 dimensions
    rng = philox(123)
    a = rng.standard_normal(dims)
    theta = rng.standard_normal(dims)

    def objective(direction, hint=None):
        arr = direction.data if isinstance(direction, Direction) else np.asarray(direction)
        return float(np.vdot(a, arr))

    single = estimate_gradient(objective, Direction(theta), 0.005, 1, philox(99))
    u = philox(99).standard_normal(dims)
    expected = float(np.vdot(a, u)) * u
    assert np.allclose(single.data, expected, rtol=1e-10, atol=1e-12)

    # ORACLE_P5: 5th percentile of cosine(ghat, a) over 400 independent
    # Monte-Carlo replications of the averaged estimator at d=64, n=2000
    # (Philox seed 20240501). Oracle computed before this test was written;
    # observed distribution: min 0.9754, p5 0.98044, median 0.98495.
    ORACLE_P5 = 0.9804
    est = estimate_gradient(objective, Direction(theta), 0.005, 2000, philox(5))
    cos = float(np.vdot(est.data, a) / (np.linalg.norm(est.data) * np.linalg.norm(a)))
    assert cos > ORACLE_P5
    report("gradient-estimator", f"cosine {cos:.5f} > oracle p5 {ORACLE_P5}")


# ---------------------------------------------------------------------------
# 3. Optimizer convergence


def test_optimizer_converges_to_analytic_minimum():
    started = time.monotonic()
    dims = (16, 8, 8, 1)
    n = int(np.prod(dims))
    rng = philox(2024)
    w0 = rng.standard_normal(dims) / (255.0 * math.sqrt(n))
    w1 = rng.standard_normal(dims) / (255.0 * math.sqrt(n))
    victim = LinearSoftmaxVictim(np.stack([w0, w1]), np.zeros(2))
    base = rng.uniform(60, 195, dims)
    y = victim.classify(VideoTensor(base)).label
    dw = victim.weights[y] - victim.weights[1 - y]
    dwu = dw / np.linalg.norm(dw)
    margin0 = float(dw.ravel() @ base.ravel()) / np.linalg.norm(dw)
    x = VideoTensor(base + (320.0 - margin0) * dwu)
    assert victim.classify(x).label == y
    # analytic minimum over all directions: the point-to-hyperplane distance
    d_star = float(dw.ravel() @ x.data.ravel()) / np.linalg.norm(dw)
    goal = AttackGoal.untargeted(y)

    noise = philox(31).standard_normal(dims)
    noise /= np.linalg.norm(noise)
    theta0 = Direction((-dwu).reshape(dims) + 0.7 * noise)
    config = OptimizerConfig(max_iterations=200)

    runs = []
    for _ in range(2):
        session = QuerySession(victim)
        theta, best, trace = optimize_direction(session, x, goal, theta0, config,
                                                rng=philox(77))
        runs.append((theta.data, best, tuple(r.distance for r in trace.records),
                     session.count))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1]
    assert runs[0][2] == runs[1][2]
    assert runs[0][3] == runs[1][3]

    best = runs[0][1]
    assert best <= 1.05 * d_star, f"g* {best:.2f} vs analytic {d_star:.2f}"
    elapsed = time.monotonic() - started
    assert elapsed < 120.0
    report("optimizer-convergence",
           f"g*/d* = {best / d_star:.4f}, {runs[0][3]} queries, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 4. Temporal pruning oracle


def test_temporal_pruning_drops_ignored_frames():
    dims = (16, 8, 8, 1)
    ignored = (1, 3, 5, 7, 9, 11, 13, 15)
    n = int(np.prod(dims))
    rng = philox(61)
    weights = rng.standard_normal((2, *dims)) / (255.0 * math.sqrt(n))
    victim = FrameObliviousVictim(LinearSoftmaxVictim(weights, np.zeros(2)), ignored)
    x = VideoTensor(rng.uniform(40, 215, dims))
    y = victim.classify(x).label
    goal = AttackGoal.untargeted(y)

    # candidate from the other side of the boundary: cross along the
    # effective (visible-frame) normal, plus content on the ignored frames
    # that pruning should strip away
    visible = np.ones(dims)
    visible[list(ignored)] = 0.0
    dw_eff = (weights[y] - weights[1 - y]) * visible
    margin = float(dw_eff.ravel() @ x.data.ravel())
    x_hat_data = x.data - 2.0 * margin / float(np.sum(dw_eff * dw_eff)) * dw_eff
    x_hat_data = x_hat_data + (1.0 - visible) * rng.uniform(-40, 40, dims)
    x_hat = VideoTensor(x_hat_data)
    assert victim.classify(x_hat).label != y
    p = VideoTensor(x_hat.data - x.data)
    assert all(np.any(p.data[t] != 0.0) for t in ignored)

    session = QuerySession(victim)
    mask = BinaryMask.ones(dims)
    ranking = rank_frames(session, x, p, mask, goal)
    pruned, direction = prune_frames(session, x, p, mask, ranking, math.inf, goal)

    excluded = [t for t in ignored if np.all(pruned.data[t] == 0.0)]
    assert len(excluded) >= 6, f"only {len(excluded)} of 8 ignored frames pruned"
    report("temporal-pruning-oracle",
           f"{len(excluded)}/8 ignored frames pruned, "
           f"{key_frame_count(pruned)} key frames kept")


# ---------------------------------------------------------------------------
# 5. Saliency oracle


def test_saliency_square_oracle():
    frame = np.full((64, 64, 3), 80.0)
    frame[28:36, 28:36, :] = 220.0
    selected = select_salient(spectral_residual(frame), 0.1).astype(bool)
    assert selected.sum() == 410  # ceil(0.1 * 64 * 64) exactly
    region = np.zeros((64, 64), dtype=bool)
    region[22:42, 22:42] = True  # the 8x8 square dilated by 6 pixels per side
    fraction = (selected & region).sum() / selected.sum()
    # measured 87.8% when frozen
    assert fraction >= 0.80
    report("saliency-oracle", f"{fraction:.1%} of 410 selected pixels in the dilation")


# ---------------------------------------------------------------------------
# 6. Metric identities


def test_metric_identities_exact():
    zeros = VideoTensor(np.zeros((2, 2, 2, 1)))
    assert mean_abs_perturbation(zeros) == 0.0
    assert mean_abs_perturbation(VideoTensor(np.full((2, 2, 2, 1), -2.0))) == 2.0
    half = np.zeros((2, 2, 2, 1))
    half.ravel()[:4] = 4.0
    assert mean_abs_perturbation(VideoTensor(half)) == 2.0

    full = BinaryMask.ones((2, 2, 2, 1))
    p = VideoTensor(philox(3).standard_normal((2, 2, 2, 1)))
    assert mean_abs_perturbation_masked(p, full) == mean_abs_perturbation(p)
    single_p, single_m = np.zeros((2, 2, 2, 1)), np.zeros((2, 2, 2, 1))
    single_p[1, 0, 1, 0], single_m[1, 0, 1, 0] = 8.0, 1.0
    assert mean_abs_perturbation_masked(VideoTensor(single_p), BinaryMask(single_m)) == 8.0

    assert sparsity(BinaryMask.ones((4, 2, 2, 2))) == 0.0
    four = np.zeros((16, 2, 2, 1))
    four[:4] = 1.0
    assert sparsity(BinaryMask(four)) == 0.75
    # every frame 40% filled => sparsity exactly 0.60
    uniform = np.zeros((16, 4, 5, 1))
    uniform.reshape(16, -1)[:, :8] = 1.0
    assert sparsity(BinaryMask(uniform)) == 0.6

    even = aggregate([type("R", (), dict(success=True, queries=q, map=1.0,
                                         map_masked=1.0, sparsity=0.0))()
                      for q in (10, 20, 30, 40)])
    assert even.median_queries == 25.0
    report("metric-identities")


# ---------------------------------------------------------------------------
# 7. Query-reduction analog


def test_query_reduction_on_seeded_bench():
    config = config_from_dict({
        "schema": 1,
        "dataset": {"generate": {"seed": 11, "classes": 4, "samples_per_class": 5,
                                 "frames": 8, "width": 8, "height": 8, "channels": 1,
                                 "oblivious_frames": [1, 3, 5, 7]}},
        "attack": {"goal": "untargeted", "seed": 9, "candidates": 5,
                   "perturbation_bound": "inf",
                   "optimizer": {"max_iterations": 25, "gradient_samples": 20,
                                 "target_distance": 470.0}},
        "bench": {"variants": ["baseline", "temporal_spatial"], "jobs": 4},
    })
    reports, comparison, errors = run_bench(config)
    assert errors == []
    base = reports["baseline"]["summary"]
    sparse = reports["temporal_spatial"]["summary"]
    assert base["fr"] == 1.0
    assert sparse["fr"] == 1.0
    assert sparse["mq"] < base["mq"]
    reduction = comparison["query_reduction"]["temporal_spatial"]
    # recorded, not asserted against any full-scale number
    report("query-reduction-analog",
           f"MQ {base['mq']:.0f} -> {sparse['mq']:.0f}, reduction {reduction:.1%}")


# ---------------------------------------------------------------------------
# 8. Query accounting


def test_query_accounting_matches_independent_simulation():
    dims = (4, 2, 2, 1)
    n = int(np.prod(dims))
    level = 100.0
    seed = 12345
    tol = 0.01
    bound = 20.0
    iterations, draws = 2, 3

    victim = LinearSoftmaxVictim.mean_threshold(dims, level=level)
    gen = philox(900)
    x = VideoTensor(gen.uniform(60, 90, dims))
    items = [LabeledVideo(f"c1_{j}", 1, VideoTensor(gen.uniform(120, 160, dims)))
             for j in range(3)]
    items.append(LabeledVideo("c0_0", 0, VideoTensor(gen.uniform(60, 90, dims))))
    dataset = VideoDataset(items, classes=2)

    cfg = AttackConfig.for_goal(
        AttackGoal.untargeted(0), seed=seed, candidates=1,
        enable_spatial=False, enable_temporal=True, perturbation_bound=bound,
        optimizer=OptimizerConfig(max_iterations=iterations, gradient_samples=draws))
    session = QuerySession(victim, log_purposes=True)
    result = attack(session, x, 0, cfg, dataset)
    tags = Counter(session.purpose_log)

    # hand-derivable components first
    assert tags["ranking"] == dims[0]  # one leave-one-frame-out probe per frame
    assert tags["init"] == 1           # one candidate gate query
    assert tags["verify"] == 2         # clean-sample gate plus final verification

    # full independent re-derivation of the query schedule: same float
    # arithmetic, same rng streams, but no attack-engine code
    counter = {"n": 0}
    wflat = np.stack([np.zeros(dims), np.full(dims, 1.0 / n)]).reshape(2, -1)
    biases = np.array([0.0, -level])

    def classify(probe):
        counter["n"] += 1
        scores = wflat @ probe.ravel() + biases
        label = int(np.argmax(scores))
        z = scores - scores.max()
        e = np.exp(z)
        return label, float(e[label] / e.sum())

    def goal_met(probe):
        return classify(probe)[0] != 0

    class NoCrossing(Exception):
        pass

    def distance(theta, hint):
        norm = float(np.linalg.norm(theta.ravel()))
        unit = theta / norm
        cap = 10.0 * hint if hint is not None else 1e4
        start = min(hint if hint is not None else norm, cap)
        floor = tol * 1e-3
        base = x.data
        if goal_met(base + start * unit):
            hi, lo = start, start / 2.0
            while lo > floor and goal_met(base + lo * unit):
                hi, lo = lo, lo / 2.0
            if lo <= floor:
                lo = 0.0
        else:
            if start >= cap:
                raise NoCrossing
            lo, hi = start, min(start * 2.0, cap)
            while True:
                if goal_met(base + hi * unit):
                    break
                if hi >= cap:
                    raise NoCrossing
                lo, hi = hi, min(hi * 2.0, cap)
        while hi - lo > tol:
            mid = (lo + hi) / 2.0
            if mid <= lo or mid >= hi:
                break
            if goal_met(base + mid * unit):
                hi = mid
            else:
                lo = mid
        return hi

    assert classify(x.data)[0] == 0  # clean gate

    cand_rng = philox(seed, 0)
    admissible = [i for i in items if i.label != 0]
    candidate = admissible[cand_rng.permutation(len(admissible))[0]]
    p = candidate.video.data - x.data
    p_norm = float(np.linalg.norm(p.ravel()))
    mask = np.ones(dims)
    assert goal_met(x.data + p * mask)  # temporal gate

    scores = []
    for t in range(dims[0]):
        m = mask.copy()
        m[t] = 0.0
        label, prob = classify(x.data + p * m)
        if label != 0:
            scores.append((t, prob))
    scores.sort(key=lambda s: (-s[1], s[0]))

    def frames_with_content(m):
        return int(np.any(m.reshape(dims[0], -1) != 0.0, axis=1).sum())

    current_mask = mask
    masked = p * current_mask
    inc_norm = float(np.linalg.norm(masked.ravel()))
    incumbent = masked / inc_norm
    inc_value = None
    for t, _prob in scores:
        cand_mask = current_mask.copy()
        cand_mask[t] = 0.0
        p_hat = p * cand_mask
        if not goal_met(x.data + p_hat):
            continue
        norm = float(np.linalg.norm(p_hat.ravel()))
        if norm == 0.0:
            continue
        theta = p_hat / norm
        value = distance(theta, norm) * float(np.mean(np.abs(theta)))
        if value <= bound:
            accept = frames_with_content(cand_mask) < frames_with_content(current_mask)
        else:
            if inc_value is None:
                inc_value = distance(incumbent, inc_norm) * float(np.mean(np.abs(incumbent)))
            accept = value < inc_value
        if accept:
            current_mask, incumbent, inc_norm, inc_value = cand_mask, theta, norm, value

    g_init = distance(incumbent, p_norm)

    opt_rng = philox(seed, 1)
    theta = incumbent.copy()
    best_theta, best, current = theta, g_init, g_init
    step, base_smoothing, smoothing, rejects = 0.2, 0.005, 0.005, 0

    def probe_value(direction, hint):
        try:
            return distance(direction, hint)
        except NoCrossing:
            return math.inf

    for _ in range(iterations):
        baseline = distance(theta, current)
        total = np.zeros(dims)
        valid = 0
        for _ in range(draws):
            u = opt_rng.standard_normal(dims) * current_mask
            value = probe_value(theta + smoothing * u, baseline)
            if math.isinf(value):
                continue
            total += ((value - baseline) / smoothing) * u
            valid += 1
        accepted = False
        if valid == 0:
            current = baseline
        else:
            grad = total / valid
            if np.any(grad):
                candidate_dir = theta - step * grad
                value = probe_value(candidate_dir, baseline)
                if value < baseline:
                    bt, bv, bs = candidate_dir, value, step
                    while True:
                        nxt = theta - bs * 2.0 * grad
                        nv = probe_value(nxt, bv)
                        if nv < bv:
                            bt, bv, bs = nxt, nv, bs * 2.0
                        else:
                            break
                    theta, current, step, accepted = bt, bv, bs, True
                else:
                    eta = step / 2.0
                    while eta >= 1e-4:
                        candidate_dir = theta - eta * grad
                        value = probe_value(candidate_dir, baseline)
                        if value < baseline:
                            theta, current, step, accepted = candidate_dir, value, eta, True
                            break
                        eta /= 2.0
                    if not accepted:
                        current, step = baseline, 1e-4
            else:
                current = baseline
        if accepted:
            rejects, smoothing = 0, base_smoothing
        else:
            rejects += 1
            smoothing = max(base_smoothing * 10.0 ** (-rejects), 5e-6)
        if current < best:
            best, best_theta = current, theta

    classify(x.data + best * best_theta / np.linalg.norm(best_theta))  # final verify

    assert counter["n"] == result.queries, (
        f"simulated {counter['n']} queries, session counted {result.queries}"
    )
    report("query-accounting",
           f"{result.queries} queries match the simulation exactly "
           f"(ranking {tags['ranking']}, prune {tags['prune']}, "
           f"g-eval {tags['g-eval']}, verify {tags['verify']})")


# ---------------------------------------------------------------------------
# 9. Support invariant fuzz


def test_support_invariant_fuzz_50_attacks():
    dims = (6, 8, 8, 1)
    runs = 0
    for ds_seed in range(5):
        spec = DatasetSpec(seed=200 + ds_seed, classes=3, samples_per_class=4,
                           frames=dims[0], width=dims[1], height=dims[2],
                           channels=dims[3],
                           oblivious_frames=(1, 4) if ds_seed % 2 else ())
        dataset, victim = generate_dataset(spec)
        for k in range(10):
            item = dataset.items[k % len(dataset.items)]
            cfg = AttackConfig.for_goal(
                AttackGoal.untargeted(item.label),
                seed=1000 + 10 * ds_seed + k,
                candidates=2,
                enable_temporal=bool(k % 2),
                enable_spatial=bool((k // 2) % 2),
                perturbation_bound=math.inf if k % 3 == 0 else 5.0,
                optimizer=OptimizerConfig(max_iterations=2, gradient_samples=3))
            session = QuerySession(victim)
            result = attack(session, item.video, item.label, cfg, dataset)
            delta = result.x_adv.data - item.video.data
            off_mask = result.mask.data == 0.0
            assert np.all(delta[off_mask] == 0.0), "perturbation leaked off-mask"
            runs += 1
    assert runs == 50
    report("support-invariant-fuzz", "50 seeded attacks, exact zeros off-mask")


# ---------------------------------------------------------------------------
# 10. Transport transparency


def test_transport_transparency_50_tensors():
    dims = (4, 6, 6, 2)
    victim = LinearSoftmaxVictim.random(dims, classes=3, seed=55)
    server = serve_victim(victim, port=0)
    try:
        local = QuerySession(victim)
        remote = QuerySession(RemoteVictim(server.url, dims=dims))
        rng = philox(4242)
        start = server.request_count
        for _ in range(50):
            x = VideoTensor(rng.uniform(-50, 300, dims))
            a = local.query(x)
            b = remote.query(x)
            assert a.label == b.label
            assert a.probability == b.probability
        assert remote.count == 50
        assert server.request_count - start == 50
    finally:
        server.shutdown()
        server.server_close()
    report("transport-transparency", "50 tensors, identical responses, counts agree")
