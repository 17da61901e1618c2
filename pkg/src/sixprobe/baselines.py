"""Reference strategies the campaign is judged against."""

from __future__ import annotations

import numpy as np

from ._hashing import derive_seed
from .addrspace import Prefix, non_aliased_hit_rate
from .prober import Prober, _random_addresses


def uniform_random_baseline(
    prefixes: list[Prefix],
    budget: int,
    prober: Prober,
    seed: int = 0,
    batch_size: int = 4096,
    alias_prefixes=(),
) -> dict:
    """Spend the budget on uniform-random addresses, cycling the prefixes.

    Responses inside known alias prefixes count against the non-aliased
    metric, mirroring how the campaign's own hit rate is scored.
    """
    if not prefixes:
        return {"probes": 0, "actives": 0, "aliased_hits": 0, "hit_rate": 0.0}
    alias_set = set(alias_prefixes)
    probes = 0
    actives = 0
    aliased_hits = 0
    i = 0
    while probes < budget:
        prefix = prefixes[i % len(prefixes)]
        rng = np.random.default_rng(
            derive_seed(seed, "uniform-baseline", str(prefix), i)
        )
        n = min(batch_size, budget - probes)
        his, los = _random_addresses(prefix, n, rng)
        responsive = prober.probe_batch(his, los)
        probes += n
        hits = int(responsive.sum())
        actives += hits
        if prefix in alias_set:
            aliased_hits += hits
        i += 1
    rate = non_aliased_hit_rate(probes, actives, aliased_hits) if probes else 0.0
    return {
        "probes": probes,
        "actives": actives,
        "aliased_hits": aliased_hits,
        "hit_rate": rate,
    }
