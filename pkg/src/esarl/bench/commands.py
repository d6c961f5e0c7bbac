"""The four experiment commands.

Every command takes a validated config dict, writes its artifacts into
``cfg["out"]`` and returns an exit status together with an in-memory result
that tests can inspect. CSV files start with a ``# config_hash=...`` comment
and contain nothing that depends on wall-clock time; timings go to separate
``timing_*.csv`` files.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import envs as E
from ..approx import GaussianPolicyHead, forward, load_checkpoint, save_checkpoint
from ..baselines import queries_to_level, run_gradient_descent, run_search_gradient
from ..esa import scan_filtered_q
from ..esc import esc_run, example_objective, example_static
from ..rl import TrainResult, steps_to_threshold, train
from . import svg
from .config import ConfigError, config_hash, env_spec, esa_config, esc_params, ppo_config


@dataclass
class Outcome:
    status: int
    files: list = field(default_factory=list)
    data: dict = field(default_factory=dict)


def _num(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    return repr(float(x))


def write_csv(path: Path, digest: str, header, rows) -> Path:
    buf = io.StringIO()
    buf.write(f"# config_hash={digest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        values = [row[h] for h in header] if isinstance(row, dict) else list(row)
        w.writerow([_num(v) for v in values])
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> list:
    """Rows of a CSV written by :func:`write_csv` as dicts of strings."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def thread_count() -> int:
    raw = os.environ.get("ESA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"ESA_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"ESA_THREADS must be a positive integer, got {raw!r}")
    return n


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- esc demo

def cmd_esc_demo(cfg: dict) -> Outcome:
    digest = config_hash(cfg)
    esc = cfg["esc"]
    search = cfg.get("search", {})
    gd = cfg.get("gd", {})
    level = float(cfg.get("level", 1e-2))
    seeds = cfg.get("seeds", [0])
    v0 = [float(x) for x in esc.get("v0", [2.0, 2.0])]
    params = esc_params(cfg)
    dt = params.dt
    sigma = float(search.get("sigma", 0.1))
    lr = float(search.get("lr", 0.45))
    budget = int(search.get("query_budget", 5000))
    batches = search.get("batches", [1, 10, 100])
    out = _out_dir(cfg)
    files = []
    summary = []

    # static objective
    obj = example_objective(dynamic=False)
    tr = esc_run(params, obj, v0, int(esc["static_steps"]))
    jv = np.array([example_static(v) for v in tr.v])
    esc_q = queries_to_level(jv, level, 1)
    (out / "trace_esc_static.csv").write_text(tr.to_csv(f"config_hash={digest}"))
    files.append(out / "trace_esc_static.csv")
    summary.append(["esc", 1, seeds[0], esc_q, obj.queries])
    static_panel = svg.Panel("static objective", "objective queries", "J(v)", log_y=True)
    static_panel.series.append(svg.Series("ESC", np.arange(len(jv)), jv))
    sg_static = {}
    for b in batches:
        curves = []
        for seed in seeds:
            sobj = example_objective(dynamic=False)
            str_ = run_search_gradient(sobj, v0, sigma, b, lr, max(1, budget // b), seed=seed)
            q = queries_to_level(str_.j, level, b)
            sg_static.setdefault(b, []).append(q)
            summary.append(["search_gradient", b, seed, q, sobj.queries])
            name = f"trace_search_b{b}_s{seed}_static.csv"
            (out / name).write_text(str_.to_csv(f"config_hash={digest}"))
            files.append(out / name)
            curves.append(str_.j)
        med = np.median(np.array(curves), axis=0)
        static_panel.series.append(svg.Series(f"search gradient, batch {b}", np.arange(len(med)) * b, med))
    gtr = run_gradient_descent(v0, float(gd.get("lr", 0.1)), int(gd.get("steps", 100)))
    (out / "trace_gd_static.csv").write_text(gtr.to_csv(f"config_hash={digest}"))
    files.append(out / "trace_gd_static.csv")
    summary.append(["gradient_descent", 0, seeds[0], queries_to_level(gtr.j, level, 1), 0])
    static_panel.series.append(svg.Series("gradient descent (per gradient)", np.arange(len(gtr.j)), gtr.j))

    # time-varying objective: every method advances time by dt per iteration
    steps = int(esc["dynamic_steps"])
    dobj = example_objective(dynamic=True)
    dtr = esc_run(params, dobj, v0, steps)
    (out / "trace_esc_dynamic.csv").write_text(dtr.to_csv(f"config_hash={digest}"))
    files.append(out / "trace_esc_dynamic.csv")

    def tracking(trace):
        c = np.column_stack([0.1 * trace.time, 0.5 * trace.time])
        return np.linalg.norm(trace.v - c, axis=1)

    err = tracking(dtr)
    window = (dtr.time >= 4.0) & (dtr.time <= 10.0)
    dyn_panel = svg.Panel("time-varying objective", "time", "tracking error", log_y=True)
    dyn_panel.series.append(svg.Series("ESC", dtr.time, err))
    dynamic = {"esc": float(err[window].max()) if window.any() else math.nan}
    for b in batches:
        sobj = example_objective(dynamic=True)
        s = run_search_gradient(sobj, v0, sigma, b, lr, steps, seed=seeds[0], dt=dt, time_varying=True)
        name = f"trace_search_b{b}_dynamic.csv"
        (out / name).write_text(s.to_csv(f"config_hash={digest}"))
        files.append(out / name)
        e = tracking(s)
        dynamic[f"search_b{b}"] = float(e[window].max()) if window.any() else math.nan
        dyn_panel.series.append(svg.Series(f"search gradient, batch {b}", s.time, e))
    g = run_gradient_descent(v0, float(gd.get("lr", 0.1)), steps, dt=dt, time_varying=True)
    (out / "trace_gd_dynamic.csv").write_text(g.to_csv(f"config_hash={digest}"))
    files.append(out / "trace_gd_dynamic.csv")
    e = tracking(g)
    dynamic["gradient_descent"] = float(e[window].max()) if window.any() else math.nan
    dyn_panel.series.append(svg.Series("gradient descent", g.time, e))

    files.append(write_csv(out / "summary.csv", digest,
                           ["method", "batch", "seed", "queries_to_level", "total_queries"], summary))
    files.append(write_csv(out / "summary_dynamic.csv", digest, ["method", "max_error_t4_t10"],
                           sorted(dynamic.items())))
    (out / "plot_esc_demo.svg").write_text(svg.render([static_panel, dyn_panel]))
    files.append(out / "plot_esc_demo.svg")
    data = {"esc_queries": esc_q, "esc_total_queries": obj.queries, "search_queries": sg_static,
            "esc_max_tracking_error": dynamic["esc"], "dynamic": dynamic}
    return Outcome(0, files, data)


# ---------------------------------------------------------------- training

def _run_one(args):
    spec, ppo, esa, seed = args
    return train(spec, ppo, esa, seed)


def run_matrix(jobs: list) -> list:
    """Run ``(spec, ppo, esa, seed)`` jobs, in parallel up to ``ESA_THREADS``."""
    n = min(thread_count(), len(jobs))
    if n <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_one, jobs))


CURVE_BASE = ["iteration", "env_steps", "mean_return", "std_return"]
CURVE_ESA = ["mean_abs_v", "mean_abs_filtered_q"]
TIMING = ["iteration", "steps", "rollout_s", "update_s", "approx_kl", "clip_frac", "policy_loss",
          "value_loss", "q_loss"]


def rollout_seconds_per_2048(res: TrainResult) -> float:
    """Mean rollout wall-clock scaled to a 2048-step rollout."""
    rows = [r for r in res.timing if r["steps"] > 0]
    if not rows:
        return math.nan
    return float(np.mean([r["rollout_s"] * 2048.0 / r["steps"] for r in rows]))


def _median_iqr(curves: list):
    n = min(len(c) for c in curves)
    arr = np.array([c[:n] for c in curves])
    return np.percentile(arr, 25, axis=0), np.median(arr, axis=0), np.percentile(arr, 75, axis=0)


def _finish_runs(cfg, out: Path, digest: str, spec, labelled: list, title: str, plot_name: str):
    """Write per-run curves, timings and checkpoints plus the summary and plot.

    ``labelled`` holds ``(variant, seed, TrainResult)`` triples.
    """
    files = []
    summary, timing_summary = [], []
    panel = svg.Panel(title, "environment steps", "mean episodic return (trailing 10)")
    variants = list(dict.fromkeys(v for v, _, _ in labelled))
    status = 0
    per_variant = {}
    for variant, seed, res in labelled:
        header = CURVE_BASE + (CURVE_ESA if res.rows and "mean_abs_v" in res.rows[0] else [])
        files.append(write_csv(out / f"curves_{variant}_{seed}.csv", digest, header, res.rows))
        timing_path = out / f"timing_{variant}_{seed}.csv"
        write_csv(timing_path, digest, TIMING, res.timing)
        files.append(timing_path)
        ck = out / f"checkpoint_{variant}_{seed}.txt"
        save_checkpoint(ck, {"policy": res.learner.policy, "value": res.learner.value_net,
                             "q": res.learner.q_net})
        files.append(ck)
        stt = steps_to_threshold(res.rows, spec.threshold)
        final = res.rows[-1]["mean_return"] if res.rows else math.nan
        ok = res.aborted is None
        if not ok:
            status = 1
        summary.append([variant, str(seed), stt, final, "ok" if ok else f"aborted: {res.aborted}",
                        res.esa_queries, res.env_steps])
        per_variant.setdefault(variant, []).append((seed, stt, final, res))
    medians = {}
    for variant in variants:
        runs = per_variant[variant]
        stts = np.array([r[1] for r in runs])
        finals = np.array([r[2] for r in runs])
        done = sum(r[3].aborted is None for r in runs)
        med_stt, med_final = float(np.median(stts)), float(np.median(finals))
        medians[variant] = {"steps_to_threshold": med_stt, "final_return": med_final,
                            "stt": [float(x) for x in stts], "final": [float(x) for x in finals]}
        summary.append([variant, "median", med_stt, med_final, f"{done}/{len(runs)} completed",
                        int(np.median([r[3].esa_queries for r in runs])),
                        int(np.median([r[3].env_steps for r in runs]))])
        roll = float(np.mean([rollout_seconds_per_2048(r[3]) for r in runs]))
        per_iter = float(np.mean([np.mean([t["rollout_s"] + t["update_s"] for t in r[3].timing])
                                  for r in runs if r[3].timing]))
        medians[variant]["rollout_s_per_2048"] = roll
        timing_summary.append([variant, roll, per_iter])
        curves = [[row["mean_return"] for row in r[3].rows] for r in runs if r[3].rows]
        if curves:
            lo, mid, hi = _median_iqr(curves)
            x = [row["env_steps"] for row in runs[0][3].rows][:len(mid)]
            panel.series.append(svg.Series(variant, x, mid, lo, hi))
    files.append(write_csv(out / "summary.csv", digest,
                           ["variant", "seed", "steps_to_threshold", "final_return", "status",
                            "esa_queries", "env_steps"], summary))
    if "baseline" in medians:
        base = medians["baseline"]["rollout_s_per_2048"]
        for variant in variants:
            if variant != "baseline":
                ratio = medians[variant]["rollout_s_per_2048"] / base
                medians[variant]["wall_clock_ratio"] = ratio
                timing_summary.append([f"{variant}/baseline", ratio, ""])
    timing_path = out / "timing_summary.csv"
    write_csv(timing_path, digest, ["variant", "rollout_s_per_2048", "wall_clock_s_per_iteration"],
              timing_summary)
    files.append(timing_path)
    (out / plot_name).write_text(svg.render([panel], width=720))
    files.append(out / plot_name)
    return Outcome(status, files, {"medians": medians, "runs": labelled})


def cmd_train(cfg: dict) -> Outcome:
    digest = config_hash(cfg)
    spec = env_spec(cfg)
    ppo = ppo_config(cfg)
    esa = esa_config(cfg, spec)
    seeds = cfg.get("seeds", [0])
    out = _out_dir(cfg)
    variants = [("baseline", None)] + ([("esa", esa)] if esa is not None else [])
    jobs = [(spec, ppo, e, s) for _, e in variants for s in seeds]
    labels = [(v, s) for v, _ in variants for s in seeds]
    results = run_matrix(jobs)
    labelled = [(v, s, r) for (v, s), r in zip(labels, results)]
    return _finish_runs(cfg, out, digest, spec, labelled, f"{spec.name}: baseline vs ESA", "plot_curves.svg")


def sweep_label(param: str, value) -> str:
    if param == "K":
        return f"K{float(value):g}"
    if param == "omega":
        return f"omega{float(value) / math.pi:g}pi"
    if isinstance(value, dict):
        name = value.get("decay", "none")
        extra = value.get("decay_end") if name == "linear" else value.get("decay_rate")
        return f"decay-{name}" + (f"{extra:g}" if extra is not None else "")
    return f"decay-{value}"


def sweep_section(esa: dict, param: str, value) -> dict:
    esa = dict(esa)
    if param == "decay":
        if isinstance(value, dict):
            esa.update(value)
        else:
            esa["decay"] = value
    else:
        esa[param] = value
    return esa


def cmd_ablation(cfg: dict) -> Outcome:
    digest = config_hash(cfg)
    spec = env_spec(cfg)
    ppo = ppo_config(cfg)
    seeds = cfg.get("seeds", [0])
    sweep = cfg["sweep"]
    param = sweep["param"]
    settings = []
    for value in sweep["values"]:
        section = sweep_section(cfg["esa"], param, value)
        try:
            settings.append((sweep_label(param, value), esa_config(cfg, spec, section)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sweep value {value!r}: {exc}") from None
    if sweep.get("include_baseline", False):
        settings.insert(0, ("baseline", None))
    out = _out_dir(cfg)
    jobs = [(spec, ppo, e, s) for _, e in settings for s in seeds]
    labels = [(v, s) for v, _ in settings for s in seeds]
    results = run_matrix(jobs)
    labelled = [(v, s, r) for (v, s), r in zip(labels, results)]
    return _finish_runs(cfg, out, digest, spec, labelled, f"{spec.name}: {param} sweep",
                        f"plot_ablation_{param}.svg")


# ---------------------------------------------------------------- Q scan

def cmd_scan_q(cfg: dict) -> Outcome:
    digest = config_hash(cfg)
    spec = env_spec(cfg)
    scan = cfg["scan"]
    path = Path(scan["checkpoint"])
    if not path.is_file():
        raise ConfigError(f"checkpoint {path} does not exist")
    nets = load_checkpoint(path)
    if "q" not in nets:
        raise ConfigError(f"checkpoint {path} has no 'q' network")
    q_net = nets["q"]
    if q_net.layer_sizes[0] != spec.obs_dim + spec.action_dim:
        raise ConfigError(f"checkpoint Q-network expects {q_net.layer_sizes[0]} inputs, "
                          f"env {spec.name} provides {spec.obs_dim + spec.action_dim}")
    state = scan.get("state")
    if state is None:
        _, obs = E.reset(spec, int(cfg.get("seeds", [0])[0]))
    else:
        obs = np.asarray(state, dtype=float)
        if obs.shape != (spec.obs_dim,):
            raise ConfigError(f"scan.state needs {spec.obs_dim} entries")
    center = scan.get("a_center")
    policy = nets.get("policy")
    if center is None:
        center = forward(policy.mean_net, obs) if isinstance(policy, GaussianPolicyHead) \
            else np.zeros(spec.action_dim)
    center = np.asarray(center, dtype=float)
    dim = int(scan.get("dim", 0))
    if not 0 <= dim < spec.action_dim:
        raise ConfigError(f"scan.dim must be in [0, {spec.action_dim})")
    q = lambda s, a: forward(q_net, np.concatenate([s, a]))[0]
    table = scan_filtered_q(q, obs, center, dim, float(scan.get("half_width", 1.0)),
                            int(scan.get("steps", 201)), float(scan.get("hp_cutoff", 1.0)),
                            float(scan.get("dt", 1.0)))
    out = _out_dir(cfg)
    files = [write_csv(out / "scan_q.csv", digest, ["a", "q_raw", "q_filtered"], table)]
    panel = svg.Panel(f"Q along action {dim + 1}", f"action {dim + 1}", "Q")
    panel.series.append(svg.Series("raw Q", table[:, 0], table[:, 1]))
    panel.series.append(svg.Series("high-pass filtered Q", table[:, 0], table[:, 2]))
    (out / "plot_scan_q.svg").write_text(svg.render([panel]))
    files.append(out / "plot_scan_q.svg")
    return Outcome(0, files, {"table": table, "state": obs})


COMMANDS = {"esc_demo": cmd_esc_demo, "train": cmd_train, "ablation": cmd_ablation, "scan_q": cmd_scan_q}
