"""Pattern-guided active IPv6 address discovery.

Pipeline: ingest a seed hitlist, cluster the 80-bit address tails into
patterns, degrade them into generic zero/wildcard patterns shared across
prefixes, connect them into a dependency graph, then explore unseeded
prefixes with per-prefix multi-armed bandits that follow the graph toward
larger scan spaces as patterns prove effective.
"""

from .addrspace import (
    IngestError,
    Prefix,
    SeedCorpus,
    derive_unseeded,
    ingest_hitlist,
    map_seeds,
    non_aliased_hit_rate,
    parse_address,
    parse_prefix,
    render_address,
    seed_truncate,
)
from .bandit import BanditInstance, BanditParams, ProbeFailure, run_bandit
from .generic import (
    DependencyGraph,
    GenericPattern,
    construct_dependency,
    degrade_all,
    filter_shared,
    is_sub_pattern,
)
from .mining import Pattern, PatternMiner, mine_patterns
from .orchestrator import CampaignConfig, run_campaign
from .prober import (
    ProberError,
    ScannerProber,
    ScenarioSpec,
    SimulatedNetwork,
    generate_scenario,
)
from .report import CampaignReport

__all__ = [
    "BanditInstance",
    "BanditParams",
    "CampaignConfig",
    "CampaignReport",
    "DependencyGraph",
    "GenericPattern",
    "IngestError",
    "Pattern",
    "PatternMiner",
    "Prefix",
    "ProbeFailure",
    "ProberError",
    "ScannerProber",
    "ScenarioSpec",
    "SeedCorpus",
    "SimulatedNetwork",
    "construct_dependency",
    "degrade_all",
    "derive_unseeded",
    "filter_shared",
    "generate_scenario",
    "ingest_hitlist",
    "is_sub_pattern",
    "map_seeds",
    "mine_patterns",
    "non_aliased_hit_rate",
    "parse_address",
    "parse_prefix",
    "render_address",
    "run_bandit",
    "run_campaign",
    "seed_truncate",
]

__version__ = "0.1.0"
