"""Probing backends and alias pre-scan procedures.

Two backends share one interface: a deterministic simulated network used for
verification, and a batch-file adapter around an external high-rate scanner.
Responsiveness in the simulation is a pure function of (network seed,
address), so repeated probes of the same address always agree.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._hashing import address_coin, derive_seed
from .addrspace import Prefix, parse_address, parse_prefix, render_address
from .generic import GenericPattern, generic_from_string

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


class ProberError(Exception):
    """External scanner failure; raw output is preserved on the exception."""

    def __init__(self, message, raw_output=""):
        super().__init__(message)
        self.raw_output = raw_output


@dataclass(frozen=True)
class ProbeResult:
    target: int
    responsive: bool


@dataclass(frozen=True)
class AliasVerdict:
    subject: str  # prefix or pattern identifier
    aliased: bool
    evidence: tuple  # (address, responsive) pairs
    skipped: bool = False


class Prober:
    """Interface: implement probe_batch; probe() is derived from it."""

    def probe_batch(self, his: np.ndarray, los: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def probe(self, targets: list[int]) -> list[ProbeResult]:
        if not targets:
            return []
        his = np.array([t >> 64 for t in targets], dtype=np.uint64)
        los = np.array([t & _MASK64 for t in targets], dtype=np.uint64)
        responsive = self.probe_batch(his, los)
        return [
            ProbeResult(t, bool(r)) for t, r in zip(targets, responsive)
        ]


@dataclass(frozen=True)
class PlantedRecord:
    prefix: Prefix
    alias: bool
    patterns: tuple[tuple[GenericPattern, float], ...] = ()


class SimulatedNetwork(Prober):
    """Scenario-driven network: alias prefixes answer everything, planted
    patterns answer per-address Bernoulli coins at their density."""

    def __init__(self, records: list[PlantedRecord], seed: int):
        self.records = list(records)
        self.seed = seed
        self.probe_counter = 0
        self.probes_by_prefix: dict[Prefix, int] = {}
        lengths = {r.prefix.length for r in records}
        self._uniform_length = lengths.pop() if len(lengths) == 1 else None
        if self._uniform_length is not None and self._uniform_length <= 64:
            shift = 64 - self._uniform_length
            keys = np.array(
                [r.prefix.network >> (64 + shift) for r in records],
                dtype=np.uint64,
            )
            order = np.argsort(keys, kind="stable")
            self._sorted_keys = keys[order]
            self._order = order
            self._key_shift = _U64(shift)
        else:
            self._sorted_keys = None
            from .addrspace import PrefixTrie

            self._trie = PrefixTrie(r.prefix for r in records)
            self._index_of = {r.prefix: i for i, r in enumerate(records)}

    def _match_records(self, his, los) -> np.ndarray:
        """Index of the owning scenario record per target, -1 if none."""
        n = len(his)
        if self._sorted_keys is not None:
            keys = his >> self._key_shift
            pos = np.searchsorted(self._sorted_keys, keys)
            pos = np.minimum(pos, len(self._sorted_keys) - 1)
            hit = self._sorted_keys[pos] == keys
            out = np.where(hit, self._order[pos], -1)
            return out.astype(np.int64)
        out = np.full(n, -1, dtype=np.int64)
        for j, (h, l) in enumerate(zip(his.tolist(), los.tolist())):
            prefix = self._trie.longest_match((h << 64) | l)
            if prefix is not None:
                out[j] = self._index_of[prefix]
        return out

    def probe_batch(self, his: np.ndarray, los: np.ndarray) -> np.ndarray:
        n = len(his)
        self.probe_counter += n
        responsive = np.zeros(n, dtype=bool)
        if n == 0:
            return responsive
        rec_idx = self._match_records(his, los)
        coins = None
        for ri in np.unique(rec_idx):
            if ri < 0:
                continue
            record = self.records[ri]
            sel = rec_idx == ri
            count = int(sel.sum())
            self.probes_by_prefix[record.prefix] = (
                self.probes_by_prefix.get(record.prefix, 0) + count
            )
            if record.alias:
                responsive[sel] = True
                continue
            if not record.patterns:
                continue
            if coins is None:
                coins = address_coin(his, los, self.seed)
            net = record.prefix.network
            net_hi48 = _U64((net >> 80) & 0xFFFFFFFFFFFF)
            top48 = his >> _U64(16)
            for pattern, density in record.patterns:
                zmask = pattern.zero_tail_mask
                zlo = _U64(zmask & _MASK64)
                zhi = _U64((zmask >> 64) & 0xFFFF)
                match = (
                    sel
                    & (top48 == net_hi48)
                    & ((los & zlo) == 0)
                    & ((his & zhi) == 0)
                )
                responsive |= match & (coins < density)
        return responsive

    def probes_into_alias_prefixes(self) -> int:
        return sum(
            c for p, c in self.probes_by_prefix.items()
            if any(r.alias for r in self.records if r.prefix == p)
        )


class ScannerProber(Prober):
    """Adapter around an external scanner invoked per probe round.

    The command template gets {input} and {output} placeholders; the input
    file lists one target per line and the output file must list the
    responsive addresses, one per line.
    """

    def __init__(self, command_template: str, workdir=None):
        if "{input}" not in command_template or "{output}" not in command_template:
            raise ValueError("command template needs {input} and {output}")
        self.command_template = command_template
        self.workdir = Path(workdir) if workdir else None
        self.probe_counter = 0

    def probe_batch(self, his: np.ndarray, los: np.ndarray) -> np.ndarray:
        targets = [
            (h << 64) | l for h, l in zip(his.tolist(), los.tolist())
        ]
        self.probe_counter += len(targets)
        if not targets:
            return np.zeros(0, dtype=bool)
        with tempfile.TemporaryDirectory(dir=self.workdir) as tmp:
            in_path = Path(tmp) / "targets.txt"
            out_path = Path(tmp) / "responsive.txt"
            in_path.write_text(
                "".join(render_address(t) + "\n" for t in targets)
            )
            cmd = self.command_template.format(
                input=shlex.quote(str(in_path)),
                output=shlex.quote(str(out_path)),
            )
            proc = subprocess.run(
                cmd, shell=True, capture_output=True, text=True
            )
            if proc.returncode != 0:
                raise ProberError(
                    f"scanner exited {proc.returncode}",
                    raw_output=proc.stdout + proc.stderr,
                )
            if not out_path.exists():
                raise ProberError(
                    "scanner produced no output file",
                    raw_output=proc.stdout + proc.stderr,
                )
            raw = out_path.read_text()
        responsive_set = set()
        for line in raw.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                responsive_set.add(parse_address(line))
            except ValueError as exc:
                raise ProberError(
                    f"malformed scanner output line {line!r}", raw_output=raw
                ) from exc
        return np.array([t in responsive_set for t in targets], dtype=bool)


# ---------------------------------------------------------------------------
# alias pre-scans


def _random_addresses(prefix: Prefix, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    host_mask = prefix.host_mask
    lo = rng.integers(0, 1 << 64, size=n, dtype=np.uint64) & _U64(
        host_mask & _MASK64
    )
    hi = rng.integers(0, 1 << 64, size=n, dtype=np.uint64) & _U64(
        (host_mask >> 64) & _MASK64
    )
    net = prefix.network
    return hi | _U64(net >> 64), lo | _U64(net & _MASK64)


def prescan_prefix_alias(prober: Prober, prefix: Prefix, rng_seed: int) -> AliasVerdict:
    """Probe 10 uniform-random addresses; any response marks the prefix alias."""
    rng = np.random.default_rng(rng_seed)
    his, los = _random_addresses(prefix, 10, rng)
    responsive = prober.probe_batch(his, los)
    evidence = tuple(
        ((h << 64) | l, bool(r))
        for h, l, r in zip(his.tolist(), los.tolist(), responsive.tolist())
    )
    return AliasVerdict(
        subject=str(prefix), aliased=bool(responsive.any()), evidence=evidence
    )


def prescan_pattern_alias(
    prober: Prober,
    pattern: GenericPattern,
    prefix: Prefix,
    rng_seed: int,
    probed=None,
) -> AliasVerdict:
    """Probe 5 addresses fitting the pattern; 5/5 responses flag aliasing.

    Pattern spaces smaller than 5 skip the check.
    """
    from .bandit import BanditParams, ProbedAddressMap, sample_targets

    if pattern.space_size < 5:
        return AliasVerdict(
            subject=pattern.key(), aliased=False, evidence=(), skipped=True
        )
    probed = probed if probed is not None else ProbedAddressMap()
    batch = sample_targets(
        pattern, prefix, 5, probed, rng_seed, BanditParams()
    )
    responsive = prober.probe_batch(batch.his, batch.los)
    probed.add_batch(batch.his, batch.los, responsive)
    evidence = tuple(
        (a, bool(r)) for a, r in zip(batch.addresses, responsive.tolist())
    )
    aliased = len(batch) == 5 and bool(responsive.all())
    return AliasVerdict(subject=pattern.key(), aliased=aliased, evidence=evidence)


# ---------------------------------------------------------------------------
# scenario files


def write_scenario(path, records: list[PlantedRecord], seed: int,
                   header_lines=()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(json.dumps({"kind": "scenario", "seed": seed}) + "\n")
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "prefix": str(r.prefix),
                        "alias": r.alias,
                        "patterns": [
                            [p.key(), d] for p, d in r.patterns
                        ],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_scenario(path) -> tuple[list[PlantedRecord], int]:
    records = []
    seed = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            obj = json.loads(line)
            if obj.get("kind") == "scenario":
                seed = int(obj["seed"])
                continue
            records.append(
                PlantedRecord(
                    prefix=parse_prefix(obj["prefix"]),
                    alias=bool(obj["alias"]),
                    patterns=tuple(
                        (generic_from_string(key), float(d))
                        for key, d in obj.get("patterns", [])
                    ),
                )
            )
    if seed is None:
        raise ValueError(f"scenario file {path} has no header record")
    return records, seed


@dataclass
class ScenarioSpec:
    """Knobs for synthetic scenario generation."""

    prefix_count: int = 100
    alias_fraction: float = 0.2
    density_min: float = 0.3
    density_max: float = 0.6
    chain_depth: int = 3
    prefix_length: int = 32
    seed: int = 0


def generate_scenario(
    spec: ScenarioSpec,
    library: list[GenericPattern] | None = None,
    graph=None,
) -> list[PlantedRecord]:
    """Build disjoint prefixes, an alias share, and one planted pattern each.

    With a pattern library and its dependency graph, the planted pattern is
    the end of a random walk of up to chain_depth steps starting from a
    low-wildcard library pattern; otherwise a random pattern is invented.
    """
    rng = np.random.default_rng(derive_seed(spec.seed, "scenario"))
    n = spec.prefix_count
    n_alias = round(n * spec.alias_fraction)
    tops = rng.choice(1 << 16, size=n, replace=False)
    prefixes = [
        Prefix(network=(0x2001 << 112) | (int(x) << 96), length=spec.prefix_length)
        for x in sorted(tops.tolist())
    ]
    alias_flags = np.zeros(n, dtype=bool)
    if n_alias:
        alias_flags[rng.choice(n, size=n_alias, replace=False)] = True
    starts = None
    if library:
        min_wc = min(g.wildcard_count for g in library)
        starts = [g for g in library if g.wildcard_count == min_wc]
    records = []
    for i, prefix in enumerate(prefixes):
        if alias_flags[i]:
            records.append(PlantedRecord(prefix=prefix, alias=True))
            continue
        density = float(
            rng.uniform(spec.density_min, spec.density_max)
        )
        if starts:
            node = starts[int(rng.integers(len(starts)))]
            depth = int(rng.integers(1, spec.chain_depth + 1))
            for _ in range(depth - 1):
                succ = graph.successors(node) if graph is not None else []
                succ = [s for s in succ if s.wildcard_count == node.wildcard_count + 1]
                if not succ:
                    break
                node = succ[int(rng.integers(len(succ)))]
            planted = GenericPattern(mask=node.mask)
        else:
            positions = rng.choice(20, size=3 + spec.chain_depth, replace=False)
            mask = 0
            for pos in positions.tolist():
                mask |= 1 << int(pos)
            planted = GenericPattern(mask=mask)
        records.append(
            PlantedRecord(
                prefix=prefix, alias=False, patterns=((planted, density),)
            )
        )
    return records
