"""Command line entry point: stream an action file through an engine and write the result tables."""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Mapping, Optional, Sequence

import ml_confs
import yaml
from tqdm import tqdm

from SUBIM.engine import EmissionSchedule, SubscriptionEngine, run_stream
from SUBIM.influence import DecayParams
from SUBIM.io import LoadReport, load_actions, load_profiles, load_subscriptions, prefetch, stats_path, write_results, write_stats
from SUBIM.oracle import NaiveMultiSieve
from SUBIM.utils import ContractViolation

DEFAULTS = Path(__file__).parent / "configs.yaml"
ENGINES = ("prefix", "naive", "eager")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subim",
        description="Influential users per keyword subscription over a time-decaying action stream",
    )
    parser.add_argument("--actions", required=True, help="JSONL action stream")
    parser.add_argument("--profiles", help="JSONL user profiles")
    parser.add_argument("--subscriptions", help="JSONL keyword subscriptions")
    parser.add_argument("--output", help="result CSV, stdout when omitted; stats go to <output>.stats.json")
    parser.add_argument("--config", help="YAML file overriding the packaged defaults")
    parser.add_argument("--k", type=int)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--base", type=float)
    parser.add_argument("--tau-f", dest="tau_f", type=float)
    parser.add_argument("--tau-d", dest="tau_d", type=float)
    parser.add_argument("--emit-every", dest="emit_every", type=int)
    parser.add_argument("--emit-on-ts-change", dest="emit_on_ts_change", action="store_const", const=True)
    parser.add_argument("--pruning3", choices=["on", "off"])
    parser.add_argument("--engine", choices=ENGINES)
    parser.add_argument("--prefetch", type=int, help="parse on a background thread with this queue size")
    parser.add_argument("--progress", action="store_const", const=True)
    parser.add_argument("--verbose", action="store_true")
    return parser


def load_configs(overrides: Optional[Mapping] = None, path: Optional[str] = None) -> ml_confs.Configs:
    """Packaged defaults, then the YAML file at ``path``, then ``overrides`` (``None`` values ignored)."""
    with open(DEFAULTS, "r") as f:
        merged = yaml.safe_load(f)
    if path:
        with open(path, "r") as f:
            user = yaml.safe_load(f) or {}
        unknown = set(user) - set(merged)
        if unknown:
            raise ValueError(f"Unknown configuration fields: {', '.join(sorted(unknown))}")
        merged.update(user)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    return ml_confs.from_dict(merged)


def decay_params(configs: ml_confs.Configs) -> DecayParams:
    return DecayParams(
        lam=configs.lam,
        tau_f=configs.tau_f,
        tau_d=configs.tau_d,
        epsilon=configs.epsilon,
        k=configs.k,
    )


def validate_configs(configs: ml_confs.Configs):
    decay_params(configs)
    if not configs.base > 0:
        raise ValueError(f"base must be positive, got {configs.base}")
    if configs.emit_every < 0:
        raise ValueError(f"emit_every must be non-negative, got {configs.emit_every}")
    if configs.prefetch < 0:
        raise ValueError(f"prefetch must be non-negative, got {configs.prefetch}")
    if configs.engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}, got {configs.engine!r}")
    if not configs.actions:
        raise ValueError("actions path is required")


def make_engine(configs: ml_confs.Configs, profiles, subscriptions):
    params = decay_params(configs)
    schedule = EmissionSchedule(configs.emit_every, configs.emit_on_ts_change)
    if configs.engine == "prefix":
        return SubscriptionEngine(
            params, profiles, subscriptions, base=configs.base, schedule=schedule, pruning3=configs.pruning3
        )
    return NaiveMultiSieve(
        params, profiles, subscriptions, base=configs.base, schedule=schedule, eager=configs.engine == "eager"
    )


def run(configs: ml_confs.Configs) -> int:
    """Stream the configured action file; returns the process exit status."""
    reports = {name: LoadReport() for name in ("actions", "profiles", "subscriptions")}
    try:
        profiles = load_profiles(configs.profiles, reports["profiles"]) if configs.profiles else {}
        subscriptions = (
            load_subscriptions(configs.subscriptions, reports["subscriptions"]) if configs.subscriptions else {}
        )
        engine = make_engine(configs, profiles, subscriptions)
        actions = (action for action, _ in load_actions(configs.actions, reports["actions"]))
        if configs.prefetch:
            actions = prefetch(actions, configs.prefetch)
        if configs.progress:
            actions = tqdm(actions, desc="Actions", unit="act")
        start = time.perf_counter()
        records = run_stream(engine, actions)
        elapsed = time.perf_counter() - start
    except OSError as e:
        logging.error(f"Cannot read input: {e}")
        return 2
    except ContractViolation as e:
        logging.error(f"Run aborted: {e}")
        return 1

    if configs.output:
        write_results(records, configs.output)
    else:
        write_results(records, sys.stdout)

    stats = engine.stats.as_dict()
    stats.update(
        engine=configs.engine,
        actions_skipped=reports["actions"].skipped,
        profiles_skipped=reports["profiles"].skipped,
        subscriptions_skipped=reports["subscriptions"].skipped + reports["subscriptions"].duplicates,
        elapsed_seconds=elapsed,
        throughput=engine.stats.actions / elapsed if elapsed > 0 else 0.0,
    )
    if configs.output:
        write_stats(stats, stats_path(configs.output))
    logging.info(
        f"{stats['actions']} actions in {elapsed:.2f}s ({stats['throughput']:.0f} act/s), "
        f"{stats['marginal_evaluations']} marginal evaluations, {stats['rebases']} rebases"
    )
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    overrides = {key: value for key, value in vars(args).items() if key not in ("config", "verbose")}
    if overrides["pruning3"] is not None:
        overrides["pruning3"] = overrides["pruning3"] == "on"
    try:
        configs = load_configs(overrides, args.config)
        validate_configs(configs)
    except (OSError, ValueError) as e:
        logging.error(f"Invalid configuration: {e}")
        return 2
    if args.verbose:
        configs.tabulate()
    return run(configs)


if __name__ == "__main__":
    sys.exit(main())
