"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line; conftest prints them all in the
terminal summary. The benchmark criteria run the shipped configs in
``configs/`` through the CLI, so this module takes several minutes.
"""

import csv
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import oracles
from taskloss import gradcheck
from taskloss.autodiff import Tape, Tensor, backward
from taskloss.cli import main
from taskloss.config import ExperimentConfig
from taskloss.criteria import optimize_threshold, revenue_rewards
from taskloss.data import gen_revenue, to_arrays
from taskloss.engine import TrainConfig, _streams, baseline_train, topnet_train
from taskloss.nn import Adam
from taskloss.surrogate import LearnedSurrogate, discrepancy, heuristic_revenue_terms
from taskloss.tasks import make_task

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
LINES = []


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    LINES.append(line)
    print(line)
    return ok


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def pooled_gap(a, b):
    """(mean difference a - b, twice the pooled standard error)."""
    diff = float(a["mean_reward"]) - float(b["mean_reward"])
    return diff, 2.0 * math.hypot(float(a["stderr"]), float(b["stderr"]))


def run_benchmark(config, out):
    t0 = time.perf_counter()
    code = main(["benchmark", "--config", str(config), "--out", str(out)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    return {r["model"]: r for r in read_rows(out / "benchmark.csv")}, elapsed


@pytest.fixture(scope="module")
def revenue_bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("revenue_a")
    rows, elapsed = run_benchmark(CONFIGS / "revenue_benchmark.json", out)
    return rows, elapsed, out


@pytest.fixture(scope="module")
def credit_bench(tmp_path_factory):
    rows, elapsed = run_benchmark(CONFIGS / "credit_benchmark.json", tmp_path_factory.mktemp("credit"))
    return rows, elapsed


def test_criterion_1_gradcheck():
    t0 = time.perf_counter()
    results = gradcheck.run_suite(h=1e-5)
    elapsed = time.perf_counter() - t0
    worst = max(results, key=lambda r: r[1])
    bad = gradcheck.failures(results, tol=1e-4)
    ok = report(1, not bad and elapsed < 30, f"{len(results)} checks, worst {worst[0]} {worst[1]:.2e} < 1e-4, {elapsed:.1f}s < 30s")
    assert ok, bad


def test_criterion_2_bound_chain():
    rng = np.random.default_rng(2)
    task = make_task("revenue")
    sur = LearnedSurrogate(4, rng).fit_standardizer(rng.normal(size=(256, 4)), target_scale=7.22)
    t0 = time.perf_counter()
    pointwise = jensen = True
    worst = -math.inf
    for _ in range(1000):
        pred, label = rng.standard_t(3, size=64), rng.standard_t(3, size=64)
        groups = rng.integers(0, 4, size=64)
        pm = np.array(oracles.group_median_per_sample(pred, groups))
        lm = np.array(oracles.group_median_per_sample(label, groups))
        t_loss = -revenue_rewards(pred, label, pm, lm, task.params)
        tape = Tape()
        ctx = Tensor(np.column_stack([pred - pm, label - lm]))
        s_loss = sur.evaluate(tape, Tensor(pred.reshape(-1, 1)), label, ctx).data[:, 0]
        delta = s_loss - t_loss
        # exact in real arithmetic; one rounding of s + |delta| may land an ulp low
        pointwise &= bool(np.all(t_loss <= s_loss + np.abs(delta) + 1e-12))
        gap = np.mean(np.abs(delta)) - math.sqrt(np.mean(delta**2))
        worst = max(worst, gap)
        jensen &= gap <= 1e-12
    elapsed = time.perf_counter() - t0
    ok = report(2, pointwise and jensen and elapsed < 5,
                f"pointwise={pointwise}, max(mean|d| - rms d)={worst:.2e} <= 1e-12, {elapsed:.2f}s < 5s")
    assert ok


def frozen_predictor_ratio(seed, train, held, steps=2000, batch=64, lr=3e-3):
    """Train only the estimator against a frozen random predictor.

    Returns held-out mean squared discrepancy over the held-out variance of the
    true task loss.
    """
    task = make_task("revenue").fit(train)
    rng_pred, rng_est, rng_batch = _streams(seed)
    model = task.build_predictor(train, TrainConfig(), rng_pred)
    p_train, p_held = task.predict_all(model, train), task.predict_all(model, held)

    sur = LearnedSurrogate(task.n_estimator_inputs, rng_est)
    sur.fit_standardizer(task.reference_features(train, p_train), target_scale=task.loss_scale(train))
    opt = Adam(sur.parameters(), lr=lr)

    def batch_terms(tape, arrays, p, idx):
        ctx = task.batch_context(p[idx], arrays, idx)
        t_loss = task.true_losses(p[idx], arrays, idx, ctx)
        pt = Tensor(p[idx].reshape(-1, 1))
        s = sur.evaluate(tape, pt, arrays.labels[idx], task.estimator_context(tape, pt, arrays, idx, ctx))
        return s, t_loss

    for _ in range(steps):
        idx = rng_batch.choice(len(train), batch, replace=False)
        tape = Tape()
        s, t_loss = batch_terms(tape, train, p_train, idx)
        backward(tape, discrepancy(tape, "square", s, t_loss.reshape(-1, 1)))
        opt.step()

    task.fit(held)  # held-out label medians
    sq, losses = [], []
    for start in range(0, len(held) - batch + 1, batch):
        idx = np.arange(start, start + batch)
        s, t_loss = batch_terms(Tape(), held, p_held, idx)
        sq.append((s.data[:, 0] - t_loss) ** 2)
        losses.append(t_loss)
    return float(np.mean(np.concatenate(sq)) / np.var(np.concatenate(losses)))


@pytest.mark.slow
def test_criterion_3_estimator_fits_frozen_predictor():
    arrays = to_arrays(gen_revenue(250, 12, steps=5, features=4, seed=0))
    perm = np.random.default_rng(0).permutation(len(arrays))
    train, held = arrays.take(perm[:2000]), arrays.take(perm[2000:])
    t0 = time.perf_counter()
    ratios = [frozen_predictor_ratio(seed, train, held) for seed in range(5)]
    elapsed = time.perf_counter() - t0
    mean = float(np.mean(ratios))
    ok = report(3, mean < 0.15 and elapsed < 120,
                f"held-out discrepancy / var(true loss) = {mean:.3f} < 0.15 over 5 seeds, {elapsed:.0f}s < 120s")
    assert ok, ratios


@pytest.mark.slow
def test_criterion_4_revenue_topnet_beats_mse(revenue_bench):
    rows, elapsed, _ = revenue_bench
    diff, bar = pooled_gap(rows["topnet_mae"], rows["mse"])
    ok = report(4, diff > bar and elapsed < 600,
                f"topnet_mae - mse = {diff:.4f} > 2*pooled SE {bar:.4f}, {elapsed:.0f}s < 600s")
    assert ok


@pytest.mark.slow
def test_criterion_5_credit_topnet_beats_bce_and_heuristic(credit_bench):
    rows, elapsed = credit_bench
    diff, bar = pooled_gap(rows["topnet_bce"], rows["bce"])
    top, heur = float(rows["topnet_bce"]["mean_reward"]), float(rows["heuristic"]["mean_reward"])
    ok = report(5, diff > bar and top >= heur and elapsed < 600,
                f"topnet_bce - bce = {diff:.2f} > {bar:.2f}; topnet_bce {top:.2f} >= heuristic {heur:.2f}; {elapsed:.0f}s < 600s")
    assert ok


@pytest.mark.slow
def test_criterion_6_warmup_helps(revenue_bench):
    rows = revenue_bench[0]
    warm, cold = float(rows["topnet_mae"]["mean_reward"]), float(rows["topnet_nowarmup"]["mean_reward"])
    ok = report(6, warm >= cold, f"topnet_mae {warm:.4f} >= topnet_nowarmup {cold:.4f}")
    assert ok


def test_criterion_7_threshold_matches_brute_force():
    rng = np.random.default_rng(7)
    cases = []
    for i in range(1000):
        n = int(rng.integers(1, 1001))
        p = rng.random(n)
        if i % 2:
            p = np.round(p, 2)  # duplicates and exact endpoints
        cases.append((p, rng.integers(-1000, 1001, size=n).astype(np.float64)))
    t0 = time.perf_counter()
    got = [optimize_threshold(p, profit) for p, profit in cases]
    elapsed = time.perf_counter() - t0
    mismatches = sum(
        (t.p_d, total) != oracles.brute_force_threshold_table(p, profit) for (t, total), (p, profit) in zip(got, cases)
    )
    ok = report(7, mismatches == 0 and elapsed < 10, f"{mismatches} mismatches in 1000 instances, {elapsed:.2f}s < 10s")
    assert ok


def test_criterion_8_heuristic_gap_shrinks_with_k():
    rng = np.random.default_rng(8)
    delta = 0.01
    pred, label = [], []
    while sum(map(len, pred)) < 10_000:
        p, y = rng.normal(scale=2.0, size=20_000), rng.normal(scale=2.0, size=20_000)
        # stay delta away from both indicator boundaries (medians are zero)
        keep = (np.abs(p * y) > delta) & (np.abs(np.abs(y - p) - 0.5 * np.abs(y)) > delta)
        pred.append(p[keep])
        label.append(y[keep])
    pred, label = np.concatenate(pred)[:10_000], np.concatenate(label)[:10_000]
    zero = np.zeros_like(pred)
    truth = revenue_rewards(pred, label, zero, zero)
    t0 = time.perf_counter()
    gaps = []
    for k in (1, 10, 100, 1000):
        smooth = heuristic_revenue_terms(Tape(), Tensor(pred.reshape(-1, 1)), label, zero, zero, k=k).data[:, 0]
        gaps.append(float(np.max(np.abs(smooth - truth))))
    elapsed = time.perf_counter() - t0
    decreasing = all(a > b for a, b in zip(gaps, gaps[1:]))
    ok = report(8, decreasing and elapsed < 5,
                "max gap over k=1,10,100,1000: " + ", ".join(f"{g:.3g}" for g in gaps) + f"; {elapsed:.2f}s < 5s")
    assert ok


@pytest.mark.slow
def test_criterion_9_benchmark_is_reproducible(revenue_bench, tmp_path):
    _, _, first = revenue_bench
    run_benchmark(CONFIGS / "revenue_benchmark.json", tmp_path)
    same = {name: (first / name).read_bytes() == (tmp_path / name).read_bytes()
            for name in ("results.csv", "benchmark.csv", "epochs.csv")}
    ok = report(9, all(same.values()), "two revenue benchmark runs, byte-identical: " + str(same))
    assert ok


@pytest.mark.slow
def test_criterion_10_full_warmup_equals_baseline():
    identical = True
    for name, loss in (("revenue_benchmark.json", "mae"), ("credit_benchmark.json", "bce")):
        cfg = ExperimentConfig.load(CONFIGS / name)
        splits = cfg.make_splits()
        train = replace(cfg.train, epochs=2, warmup_loss=loss)
        per_epoch = len(splits.train) // train.batch_size
        train = replace(train, n_train_iters=2 * per_epoch, n_pre_iters=2 * per_epoch)
        a = topnet_train(train, splits, cfg.make_task(), seed=0)
        b = baseline_train(train, splits, cfg.make_task(), loss, seed=0)
        identical &= all(p.data.tobytes() == q.data.tobytes()
                         for p, q in zip(a.predictor.parameters(), b.predictor.parameters()))
        identical &= a.test_reward == b.test_reward
    ok = report(10, identical, "topnet with n_pre = n_train bit-identical to baseline (revenue/mae, credit/bce)")
    assert ok
