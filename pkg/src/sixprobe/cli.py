"""Command-line surface: mine -> graph -> campaign -> report, plus scenario
generation for simulated verification runs.

Every output file starts with a reproducibility header: a hash of the
effective configuration, the root RNG seed, and digests of the input files.
Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from ._hashing import digest_file, digest_text
from .addrspace import (
    IngestError,
    ingest_hitlist,
    map_seeds,
    read_prefix_file,
    seed_truncate,
)
from .bandit import BanditParams, ProbeFailure
from .generic import (
    construct_dependency,
    degrade_all,
    filter_shared,
    read_generic_file,
    read_graph_file,
    write_generic_file,
    write_graph_file,
)
from .mining import mine_patterns, write_pattern_file
from .orchestrator import CampaignConfig, run_campaign
from .prober import (
    ProberError,
    ScannerProber,
    ScenarioSpec,
    SimulatedNetwork,
    generate_scenario,
    read_scenario,
    write_scenario,
)
from .report import CampaignReport

_USAGE_ERROR = 2
_RUNTIME_ERROR = 1

_BANDIT_KEYS = {f.name for f in fields(BanditParams)}
_CAMPAIGN_KEYS = {"initial_wildcards", "max_concurrent", "budget", "seed", "mode"}


class UsageError(Exception):
    pass


def _header_lines(args_dict: dict, seed, input_paths: list) -> list[str]:
    config_text = json.dumps(
        {k: str(v) for k, v in sorted(args_dict.items())}, sort_keys=True
    )
    digests = {}
    for p in input_paths:
        if p:
            digests[Path(p).name] = digest_file(p)
    return [
        f"config-hash: {digest_text(config_text)}",
        f"seed: {seed}",
        "inputs: " + ",".join(f"{k}={v}" for k, v in sorted(digests.items())),
    ]


def _read_config_file(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line (want key=value): {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def _build_campaign_config(args) -> CampaignConfig:
    settings: dict = {}
    if args.config:
        settings.update(_read_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        settings[key.strip()] = value.strip()
    # explicit flags override the config file
    if args.budget is not None:
        settings["budget"] = args.budget
    if args.seed is not None:
        settings["seed"] = args.seed
    if args.mode:
        settings["mode"] = args.mode
    if args.policy:
        settings["policy"] = args.policy
    bandit_kwargs, campaign_kwargs = {}, {}
    for key, value in settings.items():
        value = _coerce(str(value))
        if key in _BANDIT_KEYS:
            bandit_kwargs[key] = value
        elif key in _CAMPAIGN_KEYS:
            campaign_kwargs[key] = value
        else:
            raise UsageError(f"unknown config key {key!r}")
    try:
        return CampaignConfig(
            bandit=BanditParams(**bandit_kwargs), **campaign_kwargs
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad configuration: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_mine(args) -> int:
    corpus = ingest_hitlist(args.hitlist)
    if not corpus.seeds:
        print("error: no seeds in hitlist", file=sys.stderr)
        return _USAGE_ERROR
    if corpus.malformed_count:
        print(
            f"warning: {corpus.malformed_count} malformed hitlist lines skipped",
            file=sys.stderr,
        )
    prefixes = read_prefix_file(args.prefixes)
    aliases = (
        [p for p, _ in read_prefix_file(args.alias_list)]
        if args.alias_list else []
    )
    mapped = map_seeds(corpus, prefixes, aliases)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = _header_lines(
        {"min_cluster": args.min_cluster, "assume_live": args.assume_live},
        seed="-",
        input_paths=[args.hitlist, args.prefixes, args.alias_list],
    )
    if not mapped.seeds:
        print(
            "warning: every seed fell under alias prefixes or matched no "
            "announced prefix; emitting zero patterns",
            file=sys.stderr,
        )
        write_pattern_file(out_dir / "patterns.txt", [], header)
        write_generic_file(out_dir / "generic_patterns.tsv", [], header)
        return 0
    tails, tail_to_prefix = seed_truncate(mapped)
    patterns = mine_patterns(tails, min_cluster=args.min_cluster)
    generics = filter_shared(
        degrade_all(patterns, tail_to_prefix, mapped.as_of_prefix)
    )
    write_pattern_file(out_dir / "patterns.txt", patterns, header)
    write_generic_file(out_dir / "generic_patterns.tsv", generics, header)
    print(
        f"mined {len(patterns)} patterns -> {len(generics)} shared generic "
        f"patterns from {len(mapped.seeds)} seeds"
    )
    return 0


def cmd_graph(args) -> int:
    generics = read_generic_file(args.generics)
    graph = construct_dependency(generics)
    header = _header_lines({}, seed="-", input_paths=[args.generics])
    write_graph_file(args.out, graph, header)
    print(f"graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges")
    return 0


def cmd_campaign(args) -> int:
    config = _build_campaign_config(args)
    generics = read_generic_file(args.generics)
    graph = read_graph_file(args.graph, generics)
    if args.sim_scenario:
        records, sim_seed = read_scenario(args.sim_scenario)
        prober = SimulatedNetwork(records, seed=sim_seed)
        default_targets = [r.prefix for r in records]
    elif args.scanner_cmd:
        prober = ScannerProber(args.scanner_cmd)
        default_targets = None
    else:
        raise UsageError("need --sim-scenario or --scanner-cmd")
    if args.unseeded:
        unseeded = [p for p, _ in read_prefix_file(args.unseeded)]
    elif default_targets is not None:
        unseeded = default_targets
    else:
        raise UsageError("--unseeded is required with --scanner-cmd")
    header_pairs = _header_lines(
        {
            "budget": config.budget,
            "mode": config.mode,
            "policy": config.bandit.policy,
        },
        seed=config.seed,
        input_paths=[args.generics, args.graph, args.sim_scenario,
                     args.unseeded],
    )
    header = {
        "config_hash": header_pairs[0].split(": ", 1)[1],
        "inputs": header_pairs[2].split(": ", 1)[1],
    }
    try:
        report = run_campaign(unseeded, generics, graph, config, prober, header)
    except ProbeFailure as exc:
        if exc.partial is not None:
            exc.partial.to_jsonl(args.out)
            print(
                f"error: {exc}; partial report written to {args.out}",
                file=sys.stderr,
            )
        else:
            print(f"error: {exc}", file=sys.stderr)
        return _RUNTIME_ERROR
    report.to_jsonl(args.out)
    summary = report.compute_summary()
    print(
        f"campaign: {summary['probes']} probes, {summary['actives']} actives, "
        f"non-aliased hit rate {summary['non_aliased_hit_rate']:.4f}"
        + (" (partial)" if report.partial else "")
    )
    return 0


def cmd_simulate_gen(args) -> int:
    spec = ScenarioSpec(
        prefix_count=args.prefix_count,
        alias_fraction=args.alias_fraction,
        density_min=args.density_min,
        density_max=args.density_max,
        chain_depth=args.chain_depth,
        prefix_length=args.prefix_length,
        seed=args.seed,
    )
    library = read_generic_file(args.generics) if args.generics else None
    graph = (
        read_graph_file(args.graph, library)
        if args.graph and library else None
    )
    records = generate_scenario(spec, library=library, graph=graph)
    header = _header_lines(
        {k: getattr(args, k) for k in (
            "prefix_count", "alias_fraction", "density_min", "density_max",
            "chain_depth", "prefix_length",
        )},
        seed=args.seed,
        input_paths=[args.generics, args.graph],
    )
    write_scenario(args.out, records, seed=args.seed, header_lines=header)
    n_alias = sum(1 for r in records if r.alias)
    print(f"scenario: {len(records)} prefixes, {n_alias} alias")
    return 0


def cmd_report(args) -> int:
    report, stored = CampaignReport.from_jsonl(args.file)
    if args.verify:
        problems = report.verify_file(stored)
        if problems:
            for p in problems:
                print(f"mismatch: {p}", file=sys.stderr)
            return _RUNTIME_ERROR
        print("report summary consistent with per-round records")
        return 0
    print(json.dumps(stored or report.compute_summary(), sort_keys=True))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sixprobe",
        description=(
            "Discover active IPv6 addresses in prefixes without seed data: "
            "mine allocation patterns from a hitlist, then explore them with "
            "per-prefix UCB bandits."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", help="hitlist -> patterns + generic patterns")
    p.add_argument("--hitlist", required=True)
    p.add_argument("--prefixes", required=True,
                   help="announced prefixes, one CIDR per line (optional AS)")
    p.add_argument("--alias-list", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-cluster", type=int, default=16)
    p.add_argument("--assume-live", action="store_true",
                   help="acknowledge the hitlist is pre-filtered for liveness")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("graph", help="generic patterns -> dependency graph")
    p.add_argument("--generics", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("campaign", help="run the probing campaign")
    p.add_argument("--generics", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--unseeded", default=None,
                   help="target prefixes; defaults to the scenario's prefixes")
    p.add_argument("--sim-scenario", default=None)
    p.add_argument("--scanner-cmd", default=None,
                   help="external scanner template with {input} and {output}")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=["parallel", "sequential"], default=None)
    p.add_argument("--policy", choices=["ucb", "cycle"], default=None)
    p.add_argument("--config", default=None, help="key=value settings file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one setting")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("simulate-gen", help="generate a simulated scenario")
    p.add_argument("--prefix-count", type=int, default=100)
    p.add_argument("--alias-fraction", type=float, default=0.2)
    p.add_argument("--density-min", type=float, default=0.3)
    p.add_argument("--density-max", type=float, default=0.6)
    p.add_argument("--chain-depth", type=int, default=3)
    p.add_argument("--prefix-length", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--generics", default=None,
                   help="plant patterns from this library")
    p.add_argument("--graph", default=None,
                   help="dependency graph for chain planting")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate_gen)

    p = sub.add_parser("report", help="inspect or verify a campaign report")
    p.add_argument("file")
    p.add_argument("--verify", action="store_true",
                   help="recompute the summary from the per-round records")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USAGE_ERROR
    except (IngestError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USAGE_ERROR
    except (ProberError, ProbeFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _RUNTIME_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
