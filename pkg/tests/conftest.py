"""Shared fixtures: a synthetic generic-pattern library with dependency
chains, and scenario helpers used by the end-to-end tests."""

from __future__ import annotations

import pytest

from sixprobe.addrspace import parse_prefix
from sixprobe.generic import GenericPattern, construct_dependency

N_CHAINS = 8


def chain_mask(chain: int, depth: int) -> int:
    """Wildcard mask of chain member ``depth`` (1..4; 4 is a dead tail).

    Chain c starts at wildcards {c, 18, 19}; each deeper member adds one
    wildcard at 17, 16, 15. Members of one chain are subsets of the deeper
    ones, and chains never contain each other.
    """
    mask = (1 << chain) | (1 << 18) | (1 << 19)
    for extra in (17, 16, 15)[: depth - 1]:
        mask |= 1 << extra
    return mask


def build_chain_library() -> list[GenericPattern]:
    """Eight subset chains of depth 3 plus one dead 6-wildcard tail each."""
    library = []
    for c in range(N_CHAINS):
        provenance = frozenset(
            {parse_prefix(f"2002:{2 * c}::/32"), parse_prefix(f"2002:{2 * c + 1}::/32")}
        )
        for depth in range(1, 5):
            library.append(
                GenericPattern(
                    mask=chain_mask(c, depth),
                    prefixes=provenance,
                    as_numbers=frozenset({64600 + c}),
                )
            )
    return library


@pytest.fixture(scope="session")
def chain_library():
    return build_chain_library()


@pytest.fixture(scope="session")
def chain_graph(chain_library):
    return construct_dependency(chain_library)
