"""Campaign driver: per-prefix pattern-queue progression over many bandits.

Each target prefix runs a sequence of bandit rounds; effective patterns pull
their dependency-graph successors into the next round's arm set. In parallel
mode every live bandit proposes one batch per global round and the batches
are merged into a single probe, then routed back; this only batches
transport, so sequential execution gives identical per-prefix results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._hashing import derive_seed
from .addrspace import Prefix
from .bandit import (
    Arm,
    BanditInstance,
    BanditParams,
    ProbeBatch,
    ProbedAddressMap,
    ProbeFailure,
)
from .generic import DependencyGraph, GenericPattern, merge_duplicates
from .prober import Prober, _random_addresses
from .report import CampaignReport


class NoInitialArms(Exception):
    """The pattern library has nothing simple enough to start a prefix with."""


@dataclass
class CampaignConfig:
    bandit: BanditParams = field(default_factory=BanditParams)
    initial_wildcards: int = 3
    max_concurrent: int = 0  # 0 = unlimited
    budget: int = 1_000_000
    seed: int = 0
    mode: str = "parallel"  # or "sequential"

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.max_concurrent < 0:
            raise ValueError("max_concurrent must be >= 0")
        if self.mode not in ("parallel", "sequential"):
            raise ValueError(f"unknown mode {self.mode!r}")


def initial_arms(
    generics: list[GenericPattern],
    prefix: Prefix,
    params: BanditParams,
    initial_wildcards: int = 3,
) -> list[Arm]:
    """First-round arms: singletons at the starting wildcard count plus one
    composite arm aggregating everything smaller."""
    singles = sorted(
        (g for g in generics if g.wildcard_count == initial_wildcards),
        key=lambda g: g.key(),
    )
    small = sorted(
        (g for g in generics if g.wildcard_count < initial_wildcards),
        key=lambda g: g.key(),
    )
    arms = [Arm([g], prefix, params) for g in singles]
    if small:
        arms.append(Arm(small, prefix, params))
    if not arms:
        raise NoInitialArms(f"no initial arms for {prefix}")
    return arms


class AddressFilter:
    """Routes merged probe results back to the proposing bandits."""

    def __init__(self, slices: list[tuple[object, int, int]]):
        self._slices = slices

    def route(self, responsive: np.ndarray):
        for owner, start, end in self._slices:
            yield owner, responsive[start:end]

    def owner_of(self, his: np.ndarray, los: np.ndarray, index: int):
        for owner, start, end in self._slices:
            if start <= index < end:
                return owner
        raise IndexError(index)


def aggregate_round(
    proposals: list[tuple[object, ProbeBatch]],
) -> tuple[np.ndarray, np.ndarray, AddressFilter]:
    """Merge per-bandit batches for one unified probe.

    A duplicate target across bandits means two bandits claim overlapping
    prefixes, which the campaign forbids.
    """
    his_parts, los_parts, slices = [], [], []
    pos = 0
    for owner, batch in proposals:
        his_parts.append(batch.his)
        los_parts.append(batch.los)
        slices.append((owner, pos, pos + len(batch)))
        pos += len(batch)
    if not his_parts:
        empty = np.empty(0, dtype=np.uint64)
        return empty, empty.copy(), AddressFilter([])
    his = np.concatenate(his_parts)
    los = np.concatenate(los_parts)
    order = np.lexsort((los, his))
    dup = (np.diff(his[order]) == 0) & (np.diff(los[order]) == 0)
    if dup.any():
        raise ValueError("duplicate target across bandits; prefixes overlap")
    return his, los, AddressFilter(slices)


class PrefixCampaign:
    """Bandit-round progression and bookkeeping for one target prefix."""

    def __init__(self, prefix: Prefix, library, graph, config, probed, root_seed):
        self.prefix = prefix
        self.library = library
        self.graph = graph
        self.config = config
        self.probed = probed
        self.rng = np.random.default_rng(
            derive_seed(root_seed, "prefix", str(prefix))
        )
        self.queue: list[GenericPattern] = []
        self.explored: set[int] = set()
        self.bandit: BanditInstance | None = None
        self.round = 0
        self.records: list[dict] = []
        self.actives: set[int] = set()
        self.effective: list[str] = []
        self.probes_used = 0
        self.status = "pending"

    def start(self) -> None:
        try:
            arms = initial_arms(
                self.library, self.prefix, self.config.bandit,
                self.config.initial_wildcards,
            )
        except NoInitialArms:
            self.status = "no-initial-arms"
            return
        for arm in arms:
            for p in arm.patterns:
                self.explored.add(p.mask)
        self._launch(arms)
        self.status = "running"

    def _launch(self, arms: list[Arm]) -> None:
        self.round += 1
        self.bandit = BanditInstance(
            arms, self.prefix, self.config.bandit, self.probed, self.rng
        )

    def next_batch(self) -> ProbeBatch | None:
        while True:
            if self.bandit is None:
                if not self.queue:
                    if self.status == "running":
                        self.status = "done"
                    return None
                patterns = self.queue
                self.queue = []
                self._launch(
                    [Arm([g], self.prefix, self.config.bandit) for g in patterns]
                )
            batch = self.bandit.propose_batch()
            if batch is not None:
                return batch
            self._finish_round()

    def _finish_round(self) -> None:
        bandit = self.bandit
        self.bandit = None
        self._record_round(bandit, final=True)
        effective = bandit.effective_patterns()
        for pattern in effective:
            key = pattern.key()
            if key not in self.effective:
                self.effective.append(key)
            if not self.graph.has_node(pattern):
                continue
            for succ in self.graph.successors(pattern):
                if succ.mask not in self.explored:
                    self.explored.add(succ.mask)
                    self.queue.append(succ)

    def _record_round(self, bandit: BanditInstance, final: bool) -> None:
        responsive = len(bandit.actives)
        self.records.append(
            {
                "prefix": str(self.prefix),
                "round": self.round,
                "arms": [
                    "+".join(p.key() for p in arm.patterns)
                    for arm in bandit.arms
                ],
                "probes": bandit.probes_used,
                "actives": responsive,
                "aliased_hits": 0,
                "final": final,
            }
        )
        self.actives.update(bandit.actives)
        self.probes_used += bandit.probes_used

    def flush_partial(self) -> None:
        """Record the in-flight bandit of an interrupted campaign."""
        if self.bandit is not None:
            self._record_round(self.bandit, final=False)
            self.bandit = None
            self.status = "interrupted"

    def summary(self) -> dict:
        return {
            "prefix": str(self.prefix),
            "status": self.status,
            "rounds": self.round,
            "probes": self.probes_used,
            "actives": len(self.actives),
            "effective": sorted(self.effective),
        }


def run_campaign(
    unseeded: list[Prefix],
    generics: list[GenericPattern],
    graph: DependencyGraph,
    config: CampaignConfig,
    prober: Prober,
    header: dict | None = None,
) -> CampaignReport:
    """Screen prefixes for aliasing, then run bandit rounds to the budget."""
    report = CampaignReport(header=dict(header or {}))
    report.header.setdefault("seed", config.seed)
    report.header.setdefault("mode", config.mode)
    report.header.setdefault("budget", config.budget)

    library = merge_duplicates(generics)
    probed = ProbedAddressMap()
    budget = config.budget
    states = [
        PrefixCampaign(p, library, graph, config, probed, config.seed)
        for p in sorted(set(unseeded))
    ]
    try:
        if config.mode == "sequential":
            budget = _run_sequential(states, config, prober, budget, report)
        else:
            budget = _run_parallel(states, config, prober, budget, report)
    except ProbeFailure as exc:
        for state in states:
            state.flush_partial()
        report.partial = True
        _finalize(states, report)
        exc.partial = report
        raise
    _finalize(states, report)
    return report


def _screen_record(state: PrefixCampaign, n_responsive: int, aliased: bool) -> dict:
    state.status = "alias-screened" if aliased else state.status
    state.probes_used += 10
    return {
        "prefix": str(state.prefix),
        "round": 0,
        "arms": [],
        "probes": 10,
        "actives": n_responsive,
        "aliased_hits": n_responsive if aliased else 0,
        "final": True,
    }


def _prescan_pair(state: PrefixCampaign, root_seed: int):
    rng = np.random.default_rng(
        derive_seed(root_seed, "prescan", str(state.prefix))
    )
    return _random_addresses(state.prefix, 10, rng)


def _run_parallel(states, config, prober, budget, report):
    # stage 0: one merged alias pre-scan round over every prefix
    screened: list[PrefixCampaign] = []
    proposals = []
    for state in states:
        if budget < 10:
            state.status = "unscreened"
            report.partial = True
            continue
        budget -= 10
        his, los = _prescan_pair(state, config.seed)
        proposals.append(
            (state, ProbeBatch(state.prefix, his, los, arm_index=-1))
        )
    if proposals:
        his, los, filt = aggregate_round(proposals)
        responsive = _probe(prober, his, los)
        total = int(responsive.sum())
        aliased_total = 0
        for state, part in filt.route(responsive):
            n_resp = int(part.sum())
            aliased = bool(part.any())
            state.records.append(_screen_record(state, n_resp, aliased))
            if aliased:
                aliased_total += n_resp
            else:
                screened.append(state)
        report.series.append(
            {
                "round": 0,
                "probes": len(his),
                "actives": total,
                "aliased_hits": aliased_total,
            }
        )

    waiting = list(screened)
    active: list[PrefixCampaign] = []
    round_no = 0
    while True:
        limit = config.max_concurrent or len(states)
        while waiting and len(active) < limit:
            state = waiting.pop(0)
            state.start()
            if state.status == "running":
                active.append(state)
        proposals = []
        still_active = []
        for state in active:
            batch = state.next_batch()
            if batch is None:
                continue
            proposals.append((state, batch))
            still_active.append(state)
        active = still_active
        if not proposals and not waiting:
            break
        sendable = []
        for state, batch in proposals:
            if budget >= len(batch):
                budget -= len(batch)
                sendable.append((state, batch))
            else:
                report.partial = True
        if not sendable:
            if proposals:
                report.partial = True
                break
            continue
        round_no += 1
        his, los, filt = aggregate_round(sendable)
        responsive = _probe(prober, his, los)
        for state, part in filt.route(responsive):
            state.bandit.accept_results(part)
        report.series.append(
            {
                "round": round_no,
                "probes": len(his),
                "actives": int(responsive.sum()),
                "aliased_hits": 0,
            }
        )
    for state in active:
        state.flush_partial()
    return budget


def _run_sequential(states, config, prober, budget, report):
    round_no = 0
    for state in states:
        if budget < 10:
            state.status = "unscreened"
            report.partial = True
            continue
        budget -= 10
        his, los = _prescan_pair(state, config.seed)
        responsive = _probe(prober, his, los)
        n_resp = int(responsive.sum())
        aliased = bool(responsive.any())
        state.records.append(_screen_record(state, n_resp, aliased))
        round_no += 1
        report.series.append(
            {
                "round": round_no,
                "probes": len(his),
                "actives": n_resp,
                "aliased_hits": n_resp if aliased else 0,
            }
        )
        if aliased:
            continue
        state.start()
        if state.status != "running":
            continue
        while True:
            batch = state.next_batch()
            if batch is None:
                break
            if budget < len(batch):
                report.partial = True
                state.flush_partial()
                return budget
            budget -= len(batch)
            responsive = _probe(prober, batch.his, batch.los)
            state.bandit.accept_results(responsive)
            round_no += 1
            report.series.append(
                {
                    "round": round_no,
                    "probes": len(batch),
                    "actives": int(responsive.sum()),
                    "aliased_hits": 0,
                }
            )
    return budget


def _probe(prober, his, los) -> np.ndarray:
    try:
        return prober.probe_batch(his, los)
    except ProbeFailure:
        raise
    except Exception as exc:
        raise ProbeFailure(f"prober failed: {exc}") from exc


def _finalize(states, report: CampaignReport) -> None:
    for state in states:
        report.records.extend(state.records)
        report.prefix_summaries.append(state.summary())
    report.records.sort(key=lambda r: (r["prefix"], r["round"]))
    report.prefix_summaries.sort(key=lambda s: s["prefix"])
