"""Divisive hierarchical clustering of seed tails into address patterns.

Splits recursively on the nibble with the lowest Shannon entropy among the
non-constant nibbles; each leaf is summarized into a pattern of fixed hex
digits and wildcards.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from sklearn.base import BaseEstimator

from .addrspace import TAIL_BITS, TAIL_MASK, TAIL_NIBBLES

WILDCARD = None  # pattern cell marker


def tail_nibble(tail: int, index: int) -> int:
    """Hex digit of an 80-bit tail, index 0..19 most-significant first."""
    return (tail >> (4 * (TAIL_NIBBLES - 1 - index))) & 0xF


@dataclass(frozen=True)
class Pattern:
    """A leaf cluster summary: 20 cells, each a fixed digit or a wildcard."""

    cells: tuple  # 20 entries of int 0..15 or None (wildcard)
    seeds: frozenset[int]

    def __post_init__(self):
        if len(self.cells) != TAIL_NIBBLES:
            raise ValueError("pattern must have 20 cells")

    @property
    def wildcard_count(self) -> int:
        return sum(1 for c in self.cells if c is WILDCARD)

    @property
    def space_size(self) -> int:
        return 16 ** self.wildcard_count

    def matches(self, tail: int) -> bool:
        return all(
            c is WILDCARD or tail_nibble(tail, i) == c
            for i, c in enumerate(self.cells)
        )

    def __str__(self) -> str:
        chars = ["*" if c is WILDCARD else f"{c:x}" for c in self.cells]
        return ":".join(
            "".join(chars[i : i + 4]) for i in range(0, TAIL_NIBBLES, 4)
        )


def pattern_from_string(text: str) -> Pattern:
    chars = text.strip().replace(":", "")
    if len(chars) != TAIL_NIBBLES:
        raise ValueError(f"pattern string must have 20 nibbles: {text!r}")
    cells = tuple(None if ch == "*" else int(ch, 16) for ch in chars)
    return Pattern(cells=cells, seeds=frozenset())


def nibble_entropy(tails, index: int) -> float:
    """Shannon entropy (bits) of the digit histogram at one nibble position."""
    if not 0 <= index < TAIL_NIBBLES:
        raise ValueError(f"nibble index {index} out of range")
    counts = Counter(tail_nibble(t, index) for t in tails)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("empty tail set")
    ent = 0.0
    for n in counts.values():
        p = n / total
        ent -= p * math.log2(p)
    return ent


@dataclass
class DhcNode:
    """One node of the clustering tree; children partition the members."""

    members: list[int]
    split_nibble: int | None = None
    children: list["DhcNode"] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.split_nibble is None


def _summarize(members) -> Pattern:
    cells = []
    for i in range(TAIL_NIBBLES):
        values = {tail_nibble(t, i) for t in members}
        cells.append(values.pop() if len(values) == 1 else WILDCARD)
    return Pattern(cells=tuple(cells), seeds=frozenset(members))


def build_dhc_tree(tails, min_cluster: int = 16) -> DhcNode:
    if min_cluster < 1:
        raise ValueError("min_cluster must be >= 1")
    members = sorted(set(tails))
    if not members:
        raise ValueError("empty tail set")
    if any(t < 0 or t > TAIL_MASK for t in members):
        raise ValueError(f"tails must be {TAIL_BITS}-bit values")
    root = DhcNode(members=members)
    stack = [root]
    while stack:
        node = stack.pop()
        if len(node.members) < min_cluster:
            continue
        best_index, best_entropy = None, None
        for i in range(TAIL_NIBBLES):
            values = {tail_nibble(t, i) for t in node.members}
            if len(values) < 2:
                continue
            ent = nibble_entropy(node.members, i)
            if best_entropy is None or ent < best_entropy:
                best_index, best_entropy = i, ent
        if best_index is None:  # all nibbles constant
            continue
        groups: dict[int, list[int]] = {}
        for t in node.members:
            groups.setdefault(tail_nibble(t, best_index), []).append(t)
        node.split_nibble = best_index
        node.children = [DhcNode(members=groups[v]) for v in sorted(groups)]
        stack.extend(node.children)
    return root


def mine_patterns(tails, min_cluster: int = 16) -> list[Pattern]:
    """Cluster tails and emit one pattern per leaf, in canonical order."""
    root = build_dhc_tree(tails, min_cluster=min_cluster)
    patterns = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            patterns.append(_summarize(node.members))
        else:
            stack.extend(node.children)
    patterns.sort(key=str)
    return patterns


class PatternMiner(BaseEstimator):
    """Estimator wrapper around the clustering, for pipeline-style use.

    fit(X) takes a sequence of 80-bit tails (ints) or 20-nibble hex strings;
    after fitting, ``patterns_`` holds the mined patterns and ``predict(X)``
    maps each tail to the index of the first pattern that matches it (-1 if
    none matches).
    """

    def __init__(self, min_cluster: int = 16):
        self.min_cluster = min_cluster

    @staticmethod
    def _as_tails(X) -> list[int]:
        tails = []
        for x in X:
            if isinstance(x, str):
                x = int(x.replace(":", ""), 16)
            x = int(x)
            if x < 0 or x > TAIL_MASK:
                raise ValueError(f"tail out of range: {x}")
            tails.append(x)
        return tails

    def fit(self, X, y=None):
        tails = self._as_tails(X)
        self.tree_ = build_dhc_tree(tails, min_cluster=self.min_cluster)
        self.patterns_ = mine_patterns(tails, min_cluster=self.min_cluster)
        self.n_leaves_ = len(self.patterns_)
        return self

    def predict(self, X) -> list[int]:
        if not hasattr(self, "patterns_"):
            raise RuntimeError("PatternMiner is not fitted")
        out = []
        for tail in self._as_tails(X):
            hit = -1
            for i, pattern in enumerate(self.patterns_):
                if pattern.matches(tail):
                    hit = i
                    break
            out.append(hit)
        return out


def write_pattern_file(path, patterns, header_lines=()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for p in patterns:
            fh.write(f"{p}\n")


def read_pattern_file(path) -> list[Pattern]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            out.append(pattern_from_string(line))
    return out
