"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary (see ``conftest.py``). A test
fails exactly when its criterion fails, so the pytest result and the summary
line always agree.

Criteria 6, 7, 8 and 11 share one full training run per environment with the
shipped configs (5 seeds, baseline and ESA); expect about 20 minutes on one core.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from esarl import envs as E
from esarl.approx import (GaussianPolicyHead, backward, forward, gaussian_logprob, gaussian_logprob_grad,
                          init_mlp)
from esarl.baselines import queries_to_level, run_search_gradient
from esarl.bench.commands import cmd_ablation, cmd_esc_demo, cmd_scan_q, cmd_train
from esarl.bench.config import esc_params, load_config
from esarl.esa import EsaConfig
from esarl.esc import (EscParams, Objective, esc_run, example_objective, example_static, fit_decay_rate,
                       predicted_rate)
from esarl.filters import HIGH_PASS, LOW_PASS, FilterState, analytic_gain, filter_sequence
from esarl.rl import PpoConfig, train

from conftest import finite_diff_check, record, sine_response, steady_amplitude

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _mean_queries(values):
    # a seed that never reaches the level counts as infinitely many queries
    return float(np.mean([math.inf if v is None else v for v in values]))


def test_criterion_01_static_query_efficiency():
    cfg = load_config(CONFIGS / "esc_demo.yaml", out="unused")
    t0 = time.perf_counter()
    obj = example_objective(dynamic=False)
    tr = esc_run(esc_params(cfg), obj, cfg["esc"]["v0"], int(cfg["esc"]["static_steps"]))
    esc_q = queries_to_level(np.array([example_static(v) for v in tr.v]), cfg["level"], 1)
    search = cfg["search"]
    per_batch = {}
    for b in (1, 10, 100):
        for seed in range(5):
            s = run_search_gradient(example_objective(dynamic=False), cfg["esc"]["v0"], search["sigma"], b,
                                    search["lr"], search["query_budget"] // b, seed=seed)
            per_batch.setdefault(b, []).append(queries_to_level(s.j, cfg["level"], b))
    elapsed = time.perf_counter() - t0
    mean = {b: _mean_queries(v) for b, v in per_batch.items()}
    esc_ok = esc_q is not None and esc_q < mean[100]
    order_ok = mean[1] > mean[100] and mean[10] > mean[100]
    passed = esc_ok and order_ok and elapsed < 10.0
    record(1, passed, f"ESC {esc_q} queries; mean search queries-to-level b1 {mean[1]:g}, b10 {mean[10]:g}, "
                      f"b100 {mean[100]:g}; {elapsed:.1f}s")
    assert esc_ok, "ESC must beat batch-100 search gradient"
    assert mean[1] > mean[100], "batch 1 must be worse than batch 100"
    assert mean[10] > mean[100], "batch 10 must be worse than batch 100"
    assert elapsed < 10.0


def test_criterion_02_dynamic_tracking():
    cfg = load_config(CONFIGS / "esc_demo.yaml", out="unused")
    t0 = time.perf_counter()
    tr = esc_run(esc_params(cfg), example_objective(dynamic=True), cfg["esc"]["v0"],
                 int(cfg["esc"]["dynamic_steps"]))
    elapsed = time.perf_counter() - t0
    err = np.linalg.norm(tr.v - np.column_stack([0.1 * tr.time, 0.5 * tr.time]), axis=1)
    window = (tr.time >= 4.0) & (tr.time <= 10.0)
    worst = float(err[window].max())
    passed = tr.time[-1] >= 10.0 and worst < 0.1 and elapsed < 10.0
    record(2, passed, f"max tracking error on t in [4, 10] = {worst:.4f}; {elapsed:.2f}s")
    assert passed


def test_criterion_03_averaged_rate():
    alpha, K = 2.0, 0.2
    t0 = time.perf_counter()
    ratios = []
    for curvature in (1.0, 2.0, 4.0):
        p = EscParams(K=[K], omega=[40.0], alpha=alpha, dt=0.01)
        rate = predicted_rate(alpha, K, curvature)
        tr = esc_run(p, Objective(lambda u, t, c=curvature: 0.5 * c * (u[0] - 1.0) ** 2), [2.0],
                     int(3.0 / rate / p.dt))
        fitted, _ = fit_decay_rate(tr.time, np.abs(tr.v[:, 0] - 1.0), discard=0.1)
        ratios.append(fitted / rate)
    elapsed = time.perf_counter() - t0
    passed = all(abs(r - 1.0) <= 0.3 for r in ratios) and elapsed < 10.0
    record(3, passed, "fitted/predicted rate " + ", ".join(f"{r:.3f}" for r in ratios) + f"; {elapsed:.2f}s")
    assert passed


def test_criterion_04_filter_responses():
    cutoff = 2.0
    t0 = time.perf_counter()
    worst = 0.0
    for kind in (HIGH_PASS, LOW_PASS):
        for ratio in (0.1, 1.0, 10.0, 100.0):
            omega = ratio * cutoff
            dt = 0.05 / omega
            n = int(10.0 / (cutoff * dt)) + int(6 * 2 * np.pi / (omega * dt))
            y = sine_response(FilterState(kind, cutoff, dt), omega, dt, n)
            expected = float(analytic_gain(kind, cutoff, omega))
            worst = max(worst, abs(steady_amplitude(y, omega, dt) / expected - 1.0))
    hp_dc = filter_sequence(FilterState(HIGH_PASS, cutoff, 0.01), np.full(2000, 3.0))[-1]
    lp_dc = filter_sequence(FilterState(LOW_PASS, cutoff, 0.01), np.full(2000, 3.0))[-1]
    elapsed = time.perf_counter() - t0
    dc_ok = abs(hp_dc) < 1e-6 and abs(lp_dc - 3.0) < 1e-6
    passed = worst < 0.02 and dc_ok and elapsed < 5.0
    record(4, passed, f"worst relative gain error {worst:.2e} over 8 probes; DC high-pass {hp_dc:.1e}, "
                      f"low-pass {lp_dc:.6f}; {elapsed:.2f}s")
    assert passed


def test_criterion_05_gradients():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        sizes = [int(rng.integers(1, 6))] + [int(rng.integers(2, 8)) for _ in range(rng.integers(1, 3))] \
            + [int(rng.integers(1, 4))]
        p = init_mlp(sizes, rng)
        x = rng.standard_normal(sizes[0])
        up = rng.standard_normal(sizes[-1])
        grads, dx = backward(p, x, up)
        f = lambda: float(up @ forward(p, x))
        worst = max(worst, finite_diff_check(f, p.arrays(), grads), finite_diff_check(f, [x], [dx]))
    rng = np.random.default_rng(99)
    head = GaussianPolicyHead(init_mlp([3, 7, 2], rng, out_scale=1.0), rng.normal(0, 0.5, 2))
    S, A, w = rng.standard_normal((6, 3)), rng.standard_normal((6, 2)), rng.standard_normal(6)
    _, grads = gaussian_logprob_grad(head, S, A, w)
    worst = max(worst, finite_diff_check(lambda: float(np.sum(w * gaussian_logprob(head, S, A))),
                                         head.arrays(), grads))
    elapsed = time.perf_counter() - t0
    passed = worst < 1e-4 and elapsed < 30.0
    record(5, passed, f"max relative finite-difference error {worst:.2e}; {elapsed:.2f}s")
    assert passed


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Full baseline and ESA runs for both environments with the shipped configs."""
    runs = {}
    for name in ("pendulum", "pointmass_circle"):
        out = tmp_path_factory.mktemp(name)
        cfg = load_config(CONFIGS / f"{name}.yaml", out=out)
        t0 = time.perf_counter()
        outcome = cmd_train(cfg)
        runs[name] = (cfg, outcome, out, time.perf_counter() - t0)
    return runs


LIMITS = {"pendulum": 150_000, "pointmass_circle": 400_000}


def test_criterion_06_baseline_learns(trained):
    parts, passed = [], True
    for name, (cfg, outcome, _, elapsed) in trained.items():
        spec = E.make_spec(cfg["env"]["name"])
        stts = outcome.data["medians"]["baseline"]["stt"]
        hits = sum(s <= LIMITS[name] for s in stts)
        ok = hits >= 3 and cfg["ppo"]["total_steps"] <= LIMITS[name]
        passed &= ok
        parts.append(f"{name} {hits}/5 seeds reach {spec.threshold:g} within {LIMITS[name]} steps "
                     f"(train command {elapsed / 60:.1f} min)")
    record(6, passed, "; ".join(parts))
    assert passed


def test_criterion_07_esa_not_slower(trained):
    parts, passed = [], True
    for name, (_, outcome, _, _) in trained.items():
        med = outcome.data["medians"]
        b, e = med["baseline"], med["esa"]
        if e["steps_to_threshold"] != b["steps_to_threshold"]:
            ok = e["steps_to_threshold"] < b["steps_to_threshold"]
        else:
            ok = e["final_return"] >= b["final_return"]
        passed &= ok
        parts.append(f"{name} median steps-to-threshold ESA {e['steps_to_threshold']:g} vs baseline "
                     f"{b['steps_to_threshold']:g}, final return {e['final_return']:.1f} vs {b['final_return']:.1f}")
    record(7, passed, "; ".join(parts))
    assert passed


def test_criterion_08_overhead(trained):
    parts, passed = [], True
    for name, (_, outcome, _, _) in trained.items():
        ratio = outcome.data["medians"]["esa"]["wall_clock_ratio"]
        passed &= ratio <= 1.5
        parts.append(f"{name} rollout wall-clock ratio {ratio:.2f}")
    record(8, passed, "; ".join(parts))
    assert passed


def test_criterion_09_zero_alpha_is_identity():
    results = []
    for name in ("pendulum", "pointmass_circle"):
        spec = E.make_spec(name)
        cfg = PpoConfig(total_steps=4096, epochs=2)
        n = spec.action_dim
        esa = EsaConfig(K=[0.2] * n, omega=[10 * math.pi * (1 + i / n) for i in range(n)], alpha=0.0)
        base = train(spec, cfg, seed=3)
        zero = train(spec, cfg, esa, seed=3)
        same_rows = [{k: r[k] for k in ("iteration", "env_steps", "mean_return", "std_return")}
                     for r in zero.rows] == base.rows
        same_params = all(np.array_equal(x, y) for x, y in
                          zip(base.learner.policy.arrays() + base.learner.value_net.arrays()
                              + base.learner.q_net.arrays(),
                              zero.learner.policy.arrays() + zero.learner.value_net.arrays()
                              + zero.learner.q_net.arrays()))
        results.append((name, same_rows and same_params and base.episode_returns == zero.episode_returns))
    passed = all(ok for _, ok in results)
    record(9, passed, ", ".join(f"{n} {'identical' if ok else 'DIFFERS'}" for n, ok in results))
    assert passed


def _csv_bytes(out: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv")) if not p.name.startswith("timing")}


def test_criterion_10_reruns_are_byte_identical(tmp_path):
    checks = {}
    for i in (0, 1):
        cmd_esc_demo(load_config(CONFIGS / "esc_demo.yaml", out=tmp_path / f"esc{i}"))
    checks["esc-demo"] = _csv_bytes(tmp_path / "esc0") == _csv_bytes(tmp_path / "esc1")
    for i in (0, 1):
        cfg = load_config(CONFIGS / "pendulum.yaml", out=tmp_path / f"train{i}", seed_list="0,1",
                          overrides=["ppo.total_steps=6144"])
        cmd_train(cfg)
    checks["train"] = _csv_bytes(tmp_path / "train0") == _csv_bytes(tmp_path / "train1")
    for i in (0, 1):
        cfg = load_config(CONFIGS / "ablation_K.yaml", out=tmp_path / f"abl{i}", seed_list="0",
                          overrides=["ppo.total_steps=2048"])
        cmd_ablation(cfg)
    checks["ablation"] = _csv_bytes(tmp_path / "abl0") == _csv_bytes(tmp_path / "abl1")
    for i in (0, 1):
        cfg = load_config(CONFIGS / "scan_q.yaml", out=tmp_path / f"scan{i}",
                          overrides=[f"scan.checkpoint={tmp_path / 'train0' / 'checkpoint_esa_0.txt'}"])
        cmd_scan_q(cfg)
    checks["scan-q"] = _csv_bytes(tmp_path / "scan0") == _csv_bytes(tmp_path / "scan1")
    counts = {k: len(_csv_bytes(tmp_path / d)) for k, d in
              (("esc-demo", "esc0"), ("train", "train0"), ("ablation", "abl0"), ("scan-q", "scan0"))}
    passed = all(checks.values()) and all(counts.values())
    record(10, passed, ", ".join(f"{k} {'identical' if ok else 'DIFFERS'} ({counts[k]} CSVs)"
                                 for k, ok in checks.items()))
    assert passed


def test_criterion_11_one_query_per_step(trained):
    parts, passed = [], True
    obj = example_objective(dynamic=False)
    cfg = load_config(CONFIGS / "esc_demo.yaml", out="unused")
    esc_run(esc_params(cfg), obj, cfg["esc"]["v0"], 400)
    passed &= obj.queries == 400
    parts.append(f"ESC {obj.queries} objective queries in 400 iterations")
    for name, (_, outcome, _, _) in trained.items():
        runs = [(v, s, r) for v, s, r in outcome.data["runs"] if v == "esa"]
        ok = all(r.esa_queries == r.env_steps for _, _, r in runs)
        passed &= ok
        parts.append(f"{name} ESA queries == env steps on {sum(r.esa_queries == r.env_steps for _, _, r in runs)}"
                     f"/{len(runs)} seeds")
    record(11, passed, "; ".join(parts))
    assert passed
