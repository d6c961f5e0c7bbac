"""Experiment configuration: YAML files, dotted overrides, hashing and validation."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import fields
from pathlib import Path

import yaml

from .. import envs as E
from ..esa import EsaConfig, default_v_clip
from ..esc import EscParams, default_frequencies
from ..rl import PpoConfig

MODES = ("esc_demo", "train", "ablation", "scan_q")
_PI = re.compile(r"^\s*([-+]?\d*\.?\d*(?:[eE][-+]?\d+)?)\s*\*?\s*pi\s*$")


class ConfigError(ValueError):
    pass


def _pi_numbers(node):
    """Allow values such as ``10pi`` or ``2*pi`` in config files."""
    if isinstance(node, dict):
        return {k: _pi_numbers(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_pi_numbers(v) for v in node]
    if isinstance(node, str):
        m = _PI.match(node)
        if m:
            coef = m.group(1)
            return (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
    return node


def parse_override(text: str) -> tuple[list, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    return key.split("."), value


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for text in overrides or ():
        path, value = parse_override(text)
        node = cfg
        for part in path[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = node[part] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {text!r}: {part!r} is not a section")
            node = nxt
        node[path[-1]] = value
    return _pi_numbers(cfg)


def load_config(path, overrides=(), seed_list=None, out=None) -> dict:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg = apply_overrides(_pi_numbers(raw), overrides)
    if seed_list is not None:
        cfg["seeds"] = parse_seed_list(seed_list)
    if out is not None:
        cfg["out"] = str(out)
    validate(cfg)
    return cfg


def parse_seed_list(text: str) -> list:
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def config_hash(cfg: dict) -> str:
    """SHA-256 of the resolved config; the output directory does not count."""
    content = {k: v for k, v in cfg.items() if k != "out"}
    text = json.dumps(content, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _known(section: dict, allowed, where: str) -> None:
    extra = sorted(set(section) - set(allowed))
    _need(not extra, f"{where}: unknown keys {extra}")


def _positive(section: dict, keys, where: str) -> None:
    for k in keys:
        if k in section:
            v = section[k]
            _need(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0,
                  f"{where}.{k} must be a positive number, got {v!r}")


PPO_KEYS = [f.name for f in fields(PpoConfig)]
ESA_KEYS = [f.name for f in fields(EsaConfig)]


def validate(cfg: dict) -> None:
    mode = cfg.get("mode")
    _need(mode in MODES, f"mode must be one of {MODES}, got {mode!r}")
    _need(isinstance(cfg.get("out"), str) and cfg["out"], "out: output directory is required")
    seeds = cfg.get("seeds", [0])
    _need(isinstance(seeds, list) and len(seeds) > 0 and all(isinstance(s, int) and s >= 0 for s in seeds),
          "seeds must be a non-empty list of non-negative integers")
    if mode in ("train", "ablation", "scan_q"):
        env = cfg.get("env")
        _need(isinstance(env, dict) and "name" in env, "env.name is required")
        try:
            env_spec(cfg)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"env: {exc}") from None
    if mode in ("train", "ablation"):
        ppo = cfg.get("ppo", {})
        _need(isinstance(ppo, dict), "ppo must be a mapping")
        _known(ppo, PPO_KEYS, "ppo")
        _positive(ppo, ["total_steps", "rollout_steps", "epochs", "minibatch", "lr", "q_lr", "reward_scale"], "ppo")
        for k in ("gamma", "lam"):
            if k in ppo:
                _need(0 <= ppo[k] <= 1, f"ppo.{k} must lie in [0, 1]")
        try:
            ppo_config(cfg)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"ppo: {exc}") from None
        esa = cfg.get("esa")
        _need(esa is None or isinstance(esa, dict), "esa must be a mapping")
        if esa is not None:
            _known(esa, ESA_KEYS, "esa")
            try:
                esa_config(cfg, env_spec(cfg))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"esa: {exc}") from None
    if mode == "ablation":
        sweep = cfg.get("sweep")
        _need(isinstance(sweep, dict), "ablation needs a sweep section")
        _need(sweep.get("param") in ("K", "omega", "decay"), "sweep.param must be K, omega or decay")
        values = sweep.get("values")
        _need(isinstance(values, list) and values, "sweep.values must be a non-empty list")
        _need(cfg.get("esa") is not None, "ablation needs an esa section to sweep")
    if mode == "esc_demo":
        esc = cfg.get("esc")
        _need(isinstance(esc, dict), "esc section is required")
        _positive(esc, ["alpha", "dt", "omega_base", "static_steps", "dynamic_steps"], "esc")
        search = cfg.get("search", {})
        _positive(search, ["sigma", "lr", "query_budget"], "search")
        batches = search.get("batches", [1, 10, 100])
        _need(isinstance(batches, list) and all(isinstance(b, int) and b >= 1 for b in batches),
              "search.batches must be a list of positive integers")
        _positive(cfg.get("gd", {}), ["lr", "steps"], "gd")
        _need(cfg.get("level", 1e-2) > 0, "level must be positive")
        try:
            esc_params(cfg)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"esc: {exc}") from None
    if mode == "scan_q":
        scan = cfg.get("scan")
        _need(isinstance(scan, dict), "scan section is required")
        _need(isinstance(scan.get("checkpoint"), str), "scan.checkpoint path is required")
        _positive(scan, ["half_width", "steps", "hp_cutoff", "dt"], "scan")


def env_spec(cfg: dict) -> E.EnvSpec:
    env = dict(cfg["env"])
    return E.make_spec(env.pop("name"), **env)


def esc_params(cfg: dict) -> EscParams:
    esc = cfg["esc"]
    n = len(esc.get("v0", [2.0, 2.0]))
    return EscParams(K=_vector(esc.get("K", 0.2), n), omega=default_frequencies(float(esc["omega_base"]), n),
                     alpha=float(esc["alpha"]), dt=float(esc["dt"]))


def ppo_config(cfg: dict) -> PpoConfig:
    return PpoConfig(**cfg.get("ppo", {}))


def esa_config(cfg: dict, spec: E.EnvSpec, section=None):
    esa = cfg.get("esa") if section is None else section
    if esa is None:
        return None
    kw = dict(esa)
    kw.setdefault("dt_esa", spec.dt)
    kw.setdefault("v_clip", default_v_clip(spec.action_low, spec.action_high))
    n = spec.action_dim
    kw["K"] = _vector(kw.get("K"), n)
    kw["omega"] = _omegas(kw.get("omega"), n)
    kw["alpha"] = _vector(kw.get("alpha"), n)
    return EsaConfig(**kw)


def _vector(v, n):
    if isinstance(v, list):
        if len(v) != n:
            raise ValueError(f"expected {n} entries, got {len(v)}")
        return [float(x) for x in v]
    return [float(v)] * n


def _omegas(v, n):
    # a scalar frequency is spread over the action dimensions so they stay distinct
    if isinstance(v, list):
        return _vector(v, n)
    base = float(v)
    return [base * (1.0 + i / n) for i in range(n)]
