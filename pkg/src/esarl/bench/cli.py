"""``esarl-bench`` command line."""
from __future__ import annotations

import argparse
import sys

from .commands import COMMANDS
from .config import ConfigError, load_config

SUBCOMMANDS = {"esc-demo": "esc_demo", "train": "train", "ablation": "ablation", "scan-q": "scan_q"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="esarl-bench", description="Run extremum-seeking experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH", help="YAML experiment file")
        p.add_argument("--seed-list", help="comma separated seeds, ranges allowed (0-4)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a dotted config key, e.g. ppo.total_steps=50000 (repeatable)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    mode = SUBCOMMANDS[args.command]
    try:
        cfg = load_config(args.config, args.override, args.seed_list, args.out)
        if cfg["mode"] != mode:
            raise ConfigError(f"config mode {cfg['mode']!r} does not match subcommand {args.command!r}")
        outcome = COMMANDS[mode](cfg)
    except ConfigError as exc:
        print(f"esarl-bench: error: {exc}", file=sys.stderr)
        return 2
    for path in outcome.files:
        print(path)
    if outcome.status:
        print("esarl-bench: some seeds aborted, see summary.csv", file=sys.stderr)
    return outcome.status
