"""Generic patterns over {0, *} and the dependency graph between them.

A generic pattern is stored as a 20-bit wildcard mask (bit i set means
nibble i of the tail is a wildcard; i = 0 is most significant) plus the
prefixes and AS numbers it was observed in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .addrspace import Prefix, TAIL_NIBBLES
from .mining import Pattern, WILDCARD


def _zero_tail_mask(mask: int) -> int:
    """80-bit mask covering every nibble the pattern pins to zero."""
    out = 0
    for i in range(TAIL_NIBBLES):
        if not mask & (1 << i):
            out |= 0xF << (4 * (TAIL_NIBBLES - 1 - i))
    return out


@dataclass(frozen=True)
class GenericPattern:
    """20 cells of Zero or Wildcard with provenance of where it was seen."""

    mask: int  # bit i set => nibble i is a wildcard
    prefixes: frozenset[Prefix] = frozenset()
    as_numbers: frozenset[int] = frozenset()

    def __post_init__(self):
        if not 0 <= self.mask < (1 << TAIL_NIBBLES):
            raise ValueError("wildcard mask out of range")

    @property
    def wildcard_count(self) -> int:
        return self.mask.bit_count()

    @property
    def space_size(self) -> int:
        return 16 ** self.wildcard_count

    @property
    def wildcard_positions(self) -> tuple[int, ...]:
        return tuple(i for i in range(TAIL_NIBBLES) if self.mask & (1 << i))

    @property
    def zero_tail_mask(self) -> int:
        return _zero_tail_mask(self.mask)

    def matches_tail(self, tail: int) -> bool:
        return (tail & self.zero_tail_mask) == 0

    def key(self) -> str:
        chars = [
            "*" if self.mask & (1 << i) else "0" for i in range(TAIL_NIBBLES)
        ]
        return ":".join(
            "".join(chars[i : i + 4]) for i in range(0, TAIL_NIBBLES, 4)
        )

    def __str__(self) -> str:
        return self.key()


def generic_from_string(text: str, prefixes=frozenset(), as_numbers=frozenset()):
    chars = text.strip().replace(":", "")
    if len(chars) != TAIL_NIBBLES or any(ch not in "0*" for ch in chars):
        raise ValueError(f"bad generic pattern string: {text!r}")
    mask = 0
    for i, ch in enumerate(chars):
        if ch == "*":
            mask |= 1 << i
    return GenericPattern(
        mask=mask, prefixes=frozenset(prefixes), as_numbers=frozenset(as_numbers)
    )


def pattern_degrade(pattern: Pattern) -> GenericPattern:
    """Collapse a mined pattern: fixed zeros stay Zero, anything else widens."""
    mask = 0
    for i, cell in enumerate(pattern.cells):
        if cell is WILDCARD or cell != 0:
            mask |= 1 << i
    return GenericPattern(mask=mask)


def degrade_all(
    patterns: list[Pattern],
    tail_to_prefix: dict[int, set[Prefix]],
    as_of_prefix: dict[Prefix, int] | None = None,
) -> list[GenericPattern]:
    """Degrade each mined pattern, attaching prefix/AS provenance from seeds."""
    as_of_prefix = as_of_prefix or {}
    out = []
    for pattern in patterns:
        degraded = pattern_degrade(pattern)
        prefixes: set[Prefix] = set()
        for seed in pattern.seeds:
            prefixes.update(tail_to_prefix.get(seed, ()))
        as_numbers = {
            as_of_prefix[p] for p in prefixes if p in as_of_prefix
        }
        out.append(
            GenericPattern(
                mask=degraded.mask,
                prefixes=frozenset(prefixes),
                as_numbers=frozenset(as_numbers),
            )
        )
    return out


def merge_duplicates(generics: list[GenericPattern]) -> list[GenericPattern]:
    """Unify identical nibble strings, taking the union of provenances."""
    by_mask: dict[int, GenericPattern] = {}
    for g in generics:
        prev = by_mask.get(g.mask)
        if prev is None:
            by_mask[g.mask] = g
        else:
            by_mask[g.mask] = GenericPattern(
                mask=g.mask,
                prefixes=prev.prefixes | g.prefixes,
                as_numbers=prev.as_numbers | g.as_numbers,
            )
    return sorted(by_mask.values(), key=lambda g: (g.wildcard_count, g.key()))


def filter_shared(generics: list[GenericPattern]) -> list[GenericPattern]:
    """Keep patterns observed in at least two prefixes or two AS numbers."""
    merged = merge_duplicates(generics)
    return [
        g for g in merged if len(g.prefixes) >= 2 or len(g.as_numbers) >= 2
    ]


def is_sub_pattern(a: GenericPattern, b: GenericPattern) -> bool:
    """True iff a's address set is contained in b's (wildcards of a ⊆ b)."""
    return a.mask & ~b.mask == 0


def _provenance_intersects(a: GenericPattern, b: GenericPattern) -> bool:
    return bool(a.prefixes & b.prefixes) or bool(a.as_numbers & b.as_numbers)


@dataclass
class DependencyGraph:
    """DAG over generic patterns; edges point toward larger scan spaces."""

    nodes: list[GenericPattern] = field(default_factory=list)
    edges: set[tuple[int, int]] = field(default_factory=set)  # (mask, mask)
    _by_mask: dict[int, GenericPattern] = field(default_factory=dict)
    _succ: dict[int, list[int]] = field(default_factory=dict)

    def add_node(self, g: GenericPattern) -> None:
        if g.mask in self._by_mask:
            raise ValueError(f"duplicate node {g.key()}")
        self._by_mask[g.mask] = g
        self.nodes.append(g)
        self._succ[g.mask] = []

    def add_edge(self, a: GenericPattern, b: GenericPattern) -> None:
        if a.wildcard_count >= b.wildcard_count:
            raise ValueError("edges must strictly increase the wildcard count")
        if (a.mask, b.mask) not in self.edges:
            self.edges.add((a.mask, b.mask))
            self._succ[a.mask].append(b.mask)

    def node(self, mask: int) -> GenericPattern:
        return self._by_mask[mask]

    def has_node(self, g: GenericPattern) -> bool:
        return g.mask in self._by_mask

    def successors(self, g: GenericPattern) -> list[GenericPattern]:
        """Out-neighbors sorted by (wildcard count, nibble string)."""
        if g.mask not in self._by_mask:
            raise KeyError(f"unknown node {g.key()}")
        out = [self._by_mask[m] for m in self._succ[g.mask]]
        out.sort(key=lambda n: (n.wildcard_count, n.key()))
        return out


def construct_dependency(generics: list[GenericPattern]) -> DependencyGraph:
    """Link each pattern to related patterns with more wildcards.

    An edge a -> b exists when wc(a) < wc(b) and either the provenances
    intersect with a wildcard-count gap of exactly one, or a's space is a
    subset of b's (any gap).
    """
    graph = DependencyGraph()
    for g in generics:
        graph.add_node(g)
    ordered = sorted(generics, key=lambda g: (g.wildcard_count, g.key()))
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            if a.wildcard_count >= b.wildcard_count:
                continue
            gap = b.wildcard_count - a.wildcard_count
            if (gap == 1 and _provenance_intersects(a, b)) or is_sub_pattern(a, b):
                graph.add_edge(a, b)
    return graph


def successors(graph: DependencyGraph, g: GenericPattern) -> list[GenericPattern]:
    return graph.successors(g)


# ---------------------------------------------------------------------------
# file formats


def write_generic_file(path, generics, header_lines=()) -> None:
    """TSV: pattern string, comma-joined prefixes, comma-joined AS numbers."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for g in sorted(generics, key=lambda g: (g.wildcard_count, g.key())):
            prefixes = ",".join(sorted(str(p) for p in g.prefixes))
            asns = ",".join(str(a) for a in sorted(g.as_numbers))
            fh.write(f"{g.key()}\t{prefixes}\t{asns}\n")


def read_generic_file(path) -> list[GenericPattern]:
    from .addrspace import parse_prefix

    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            prefixes = frozenset(
                parse_prefix(tok) for tok in parts[1].split(",") if tok
            ) if len(parts) > 1 else frozenset()
            asns = frozenset(
                int(tok) for tok in parts[2].split(",") if tok
            ) if len(parts) > 2 else frozenset()
            out.append(generic_from_string(parts[0], prefixes, asns))
    return out


def write_graph_file(path, graph: DependencyGraph, header_lines=()) -> None:
    """Line-oriented FROM<TAB>TO pairs of pattern strings."""
    lines = sorted(
        (graph.node(a).key(), graph.node(b).key()) for a, b in graph.edges
    )
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for a, b in lines:
            fh.write(f"{a}\t{b}\n")


def read_graph_file(path, generics: list[GenericPattern]) -> DependencyGraph:
    graph = DependencyGraph()
    for g in merge_duplicates(generics):
        graph.add_node(g)
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            a_key, b_key = line.split("\t")
            a = generic_from_string(a_key)
            b = generic_from_string(b_key)
            graph.add_edge(graph.node(a.mask), graph.node(b.mask))
    return graph
