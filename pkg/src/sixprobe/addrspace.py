"""IPv6 address and prefix arithmetic, hitlist ingestion and seed mapping.

Addresses are plain 128-bit ints. The low 80 bits (nibbles 12..31) are the
"tail": the subnet-ID plus interface-ID region that pattern mining works on.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field

ADDR_BITS = 128
NIBBLES = 32
TAIL_NIBBLES = 20
TAIL_BITS = 80
TAIL_MASK = (1 << TAIL_BITS) - 1
MAX_ADDR = (1 << ADDR_BITS) - 1


class IngestError(Exception):
    """Fatal problem with an input file."""


def parse_address(text: str) -> int:
    return int(ipaddress.IPv6Address(text.strip()))

def render_address(value: int) -> str:
    return str(ipaddress.IPv6Address(value))


def nibble(value: int, index: int) -> int:
    """Hex digit of an address, index 0..31 most-significant first."""
    if not 0 <= index < NIBBLES:
        raise IndexError(f"nibble index {index} out of range")
    return (value >> (4 * (NIBBLES - 1 - index))) & 0xF


def truncate_seed(value: int) -> int:
    """Zero the top 48 bits, keeping the 80-bit tail."""
    return value & TAIL_MASK


@dataclass(frozen=True, order=True)
class Prefix:
    """A CIDR prefix with the host bits of ``network`` zeroed."""

    network: int
    length: int

    def __post_init__(self):
        if not 1 <= self.length <= ADDR_BITS:
            raise ValueError(f"prefix length {self.length} out of range")
        if self.network & self.host_mask:
            raise ValueError("prefix network has nonzero host bits")

    @property
    def host_mask(self) -> int:
        return (1 << (ADDR_BITS - self.length)) - 1

    def contains(self, addr: int) -> bool:
        return (addr & ~self.host_mask) == self.network

    def covers(self, other: "Prefix") -> bool:
        """True when every address of ``other`` falls inside this prefix."""
        return self.length <= other.length and self.contains(other.network)

    def __str__(self) -> str:
        return f"{render_address(self.network)}/{self.length}"


def parse_prefix(text: str) -> Prefix:
    net = ipaddress.IPv6Network(text.strip(), strict=True)
    return Prefix(int(net.network_address), net.prefixlen)


class PrefixTrie:
    """Binary trie over address bits supporting longest-prefix match."""

    __slots__ = ("_root",)

    def __init__(self, prefixes=()):
        # node: [zero-child, one-child, prefix-or-None]
        self._root = [None, None, None]
        for p in prefixes:
            self.insert(p)

    def insert(self, prefix: Prefix) -> None:
        node = self._root
        for i in range(prefix.length):
            bit = (prefix.network >> (ADDR_BITS - 1 - i)) & 1
            if node[bit] is None:
                node[bit] = [None, None, None]
            node = node[bit]
        node[2] = prefix

    def longest_match(self, addr: int) -> Prefix | None:
        node = self._root
        best = node[2]
        for i in range(ADDR_BITS):
            node = node[((addr >> (ADDR_BITS - 1 - i)) & 1)]
            if node is None:
                break
            if node[2] is not None:
                best = node[2]
        return best

    def all_matches(self, addr: int) -> list[Prefix]:
        """Every inserted prefix containing ``addr``, shortest first."""
        out = []
        node = self._root
        if node[2] is not None:
            out.append(node[2])
        for i in range(ADDR_BITS):
            node = node[((addr >> (ADDR_BITS - 1 - i)) & 1)]
            if node is None:
                break
            if node[2] is not None:
                out.append(node[2])
        return out


@dataclass(frozen=True)
class SeedCorpus:
    """Deduplicated seed addresses plus their prefix / AS attribution."""

    seeds: frozenset[int]
    seed_to_prefix: dict[int, Prefix] = field(default_factory=dict)
    as_of_prefix: dict[Prefix, int] = field(default_factory=dict)
    malformed_count: int = 0

    def __len__(self) -> int:
        return len(self.seeds)


def ingest_hitlist(path) -> SeedCorpus:
    """Read one address per line; '#' comments allowed; dedup; count bad lines.

    More than 50% malformed lines is treated as a wrong-file mistake and is
    fatal, as is an unreadable file.
    """
    seeds = set()
    malformed = 0
    considered = 0
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                considered += 1
                try:
                    seeds.add(parse_address(line))
                except (ValueError, ipaddress.AddressValueError):
                    malformed += 1
    except OSError as exc:
        raise IngestError(f"cannot read hitlist {path}: {exc}") from exc
    if considered and malformed * 2 > considered:
        raise IngestError(
            f"{malformed}/{considered} lines malformed in {path}; wrong file?"
        )
    return SeedCorpus(seeds=frozenset(seeds), malformed_count=malformed)


def read_prefix_file(path) -> list[tuple[Prefix, int | None]]:
    """One CIDR per line, optionally followed by an origin AS number."""
    out = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.replace(",", " ").split()
                prefix = parse_prefix(parts[0])
                asn = int(parts[1]) if len(parts) > 1 else None
                out.append((prefix, asn))
    except OSError as exc:
        raise IngestError(f"cannot read prefix file {path}: {exc}") from exc
    except ValueError as exc:
        raise IngestError(f"bad line in prefix file {path}: {exc}") from exc
    return out


def map_seeds(
    corpus: SeedCorpus,
    prefixes: list[tuple[Prefix, int | None]],
    alias_prefixes: list[Prefix] = (),
) -> SeedCorpus:
    """Attribute each seed to its longest-matching announced prefix.

    Seeds under alias prefixes and seeds matching no announced prefix are
    dropped.
    """
    trie = PrefixTrie(p for p, _ in prefixes)
    alias_trie = PrefixTrie(alias_prefixes) if alias_prefixes else None
    as_map = {p: asn for p, asn in prefixes if asn is not None}
    seed_to_prefix = {}
    for seed in corpus.seeds:
        if alias_trie is not None and alias_trie.longest_match(seed) is not None:
            continue
        match = trie.longest_match(seed)
        if match is not None:
            seed_to_prefix[seed] = match
    return SeedCorpus(
        seeds=frozenset(seed_to_prefix),
        seed_to_prefix=seed_to_prefix,
        as_of_prefix=as_map,
        malformed_count=corpus.malformed_count,
    )


def derive_unseeded(
    prefixes: list[Prefix],
    corpus: SeedCorpus,
    alias_prefixes: list[Prefix] = (),
) -> list[Prefix]:
    """Announced prefixes holding no seed and not covered by an alias prefix."""
    trie = PrefixTrie(prefixes)
    seeded: set[Prefix] = set()
    for seed in corpus.seeds:
        seeded.update(trie.all_matches(seed))
    out = []
    for prefix in prefixes:
        if prefix in seeded:
            continue
        if any(a.covers(prefix) for a in alias_prefixes):
            continue
        out.append(prefix)
    return out


def seed_truncate(corpus: SeedCorpus) -> tuple[set[int], dict[int, set[Prefix]]]:
    """Mask seeds to their 80-bit tails, accumulating source prefixes per tail."""
    if not corpus.seeds:
        raise ValueError("empty corpus")
    tails: set[int] = set()
    tail_to_prefix: dict[int, set[Prefix]] = {}
    for seed in corpus.seeds:
        tail = truncate_seed(seed)
        tails.add(tail)
        prefix = corpus.seed_to_prefix.get(seed)
        if prefix is not None:
            tail_to_prefix.setdefault(tail, set()).add(prefix)
    return tails, tail_to_prefix


def non_aliased_hit_rate(probes: int, actives: int, aliases: int) -> float:
    """(actives - aliases) / probes; the campaign quality metric."""
    if probes < 1:
        raise ValueError("hit rate undefined for zero probes")
    if not 0 <= aliases <= actives <= probes:
        raise ValueError("need 0 <= aliases <= actives <= probes")
    return (actives - aliases) / probes
