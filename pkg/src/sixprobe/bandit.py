"""UCB bandit over generic-pattern arms for a single target prefix.

The instance is externally driven: propose_batch() hands out the next probe
batch, accept_results() feeds responses back. A driver (run_bandit or the
campaign orchestrator) sits between the instance and a prober, so many
instances can be interleaved and their batches merged into one probe round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .addrspace import ADDR_BITS, Prefix, TAIL_NIBBLES
from .generic import GenericPattern

_U64 = np.uint64
_MASK64 = (1 << 64) - 1
_BITMAP_LIMIT = 1 << 24  # spaces up to this size get an exact bitmap


class ProbeFailure(Exception):
    """Prober error; carries whatever the campaign had gathered so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class BanditParams:
    """Bandit loop parameters and their default operating point."""

    max_iter_per_arm: int = 100
    c_ucb: float = 50.0
    exit_threshold_k: float = 0.025
    budget_ratio_b: float = 0.1
    effective_threshold_r: float = 0.05
    alpha: float = 1.0
    b_min: int = 16
    b_max: int = 1024
    policy: str = "ucb"  # "ucb" or "cycle" (round-robin baseline)

    def __post_init__(self):
        if min(self.max_iter_per_arm, self.c_ucb, self.alpha,
               self.b_min, self.b_max) <= 0:
            raise ValueError("bandit parameters must be positive")
        for ratio in (self.exit_threshold_k, self.budget_ratio_b,
                      self.effective_threshold_r):
            if not 0 < ratio <= 1:
                raise ValueError("ratio parameters must lie in (0, 1]")
        if self.policy not in ("ucb", "cycle"):
            raise ValueError(f"unknown policy {self.policy!r}")

    def pull_size(self, space_size: int) -> int:
        b = math.ceil(self.budget_ratio_b * space_size)
        return min(max(b, self.b_min), self.b_max, space_size)


def reward(actives: int, aliased: bool, alpha: float) -> float:
    """Active count, negated and scaled by alpha when the probe hit aliases."""
    if actives < 0 or alpha <= 0:
        raise ValueError("need actives >= 0 and alpha > 0")
    return actives * (-alpha if aliased else 1.0)


def q_update(Q: float, N: int, R: float) -> float:
    """Incremental mean update; the caller increments N afterwards."""
    if N < 1:
        raise ValueError("q_update requires at least one prior sample")
    return (Q * N + R) / (N + 1)


def ucb_select(arms, t: int, c_ucb: float) -> int:
    """Index of the arm maximizing Q + c*sqrt(ln(t)/N); ties pick the lowest.

    ``arms`` is a sequence with Q and N attributes, all with N >= 1.
    """
    if not arms:
        raise ValueError("no arms to select from")
    if t < 1:
        raise ValueError("step must be >= 1")
    log_t = math.log(t)
    best, best_score = 0, -math.inf
    for i, arm in enumerate(arms):
        if arm.N < 1:
            raise ValueError("every arm needs a pre-scan sample (N >= 1)")
        score = arm.Q + c_ucb * math.sqrt(log_t / arm.N)
        if score > best_score:
            best, best_score = i, score
    return best


class ProbedAddressMap:
    """Append-only map of probed address -> active status for one campaign."""

    def __init__(self):
        self._status: dict[int, bool] = {}

    def __len__(self) -> int:
        return len(self._status)

    def __contains__(self, addr: int) -> bool:
        return addr in self._status

    def status(self, addr: int) -> bool:
        return self._status[addr]

    def add(self, addr: int, active: bool) -> None:
        self._status[addr] = active

    @staticmethod
    def _keys(his: np.ndarray, los: np.ndarray) -> list[int]:
        return [(h << 64) | l for h, l in zip(his.tolist(), los.tolist())]

    def contains_batch(self, his: np.ndarray, los: np.ndarray) -> np.ndarray:
        d = self._status
        return np.fromiter(
            (k in d for k in self._keys(his, los)), dtype=bool, count=len(his)
        )

    def add_batch(self, his, los, responsive: np.ndarray) -> None:
        self._status.update(zip(self._keys(his, los), responsive.tolist()))


@dataclass
class ProbeBatch:
    """Targets proposed by one arm pull, as parallel uint64 halves."""

    prefix: Prefix
    his: np.ndarray
    los: np.ndarray
    arm_index: int
    kind: str = "pull"  # "pull" or "alias_check"
    exhausted: bool = False

    def __len__(self) -> int:
        return len(self.his)

    @property
    def addresses(self) -> list[int]:
        return [
            (h << 64) | l for h, l in zip(self.his.tolist(), self.los.tolist())
        ]


class Arm:
    """One bandit arm: a generic pattern (or a merged set of small ones)
    sampled inside a fixed prefix, without replacement."""

    def __init__(self, patterns, prefix: Prefix, params: BanditParams):
        self.patterns: tuple[GenericPattern, ...] = tuple(patterns)
        if not self.patterns:
            raise ValueError("arm needs at least one pattern")
        self.prefix = prefix
        self.composite = len(self.patterns) > 1
        self.Q = 0.0
        self.N = 0
        self.aliased = False
        self.retired = False

        host_mask = prefix.host_mask
        net = prefix.network
        self._net_hi = _U64((net >> 64) & _MASK64)
        self._net_lo = _U64(net & _MASK64)
        self._host_hi = _U64((host_mask >> 64) & _MASK64)
        self._host_lo = _U64(host_mask & _MASK64)

        if self.composite:
            union: set[int] = set()
            for p in self.patterns:
                union.update(_enumerate_tails(p))
            self._candidates = sorted(union)
            self.space_size = len(self._candidates)
            self._consumed = np.zeros(self.space_size, dtype=bool)
        else:
            pattern = self.patterns[0]
            # tail bit offset of each wildcard nibble, low nibble of the
            # index mapping to the first (leftmost) wildcard position
            self._shifts = [
                4 * (TAIL_NIBBLES - 1 - pos)
                for pos in pattern.wildcard_positions
            ]
            self.space_size = pattern.space_size
            if self.space_size <= _BITMAP_LIMIT:
                self._consumed = np.zeros(self.space_size, dtype=bool)
            else:
                self._consumed = None
                self._consumed_set: set[int] = set()
        self._consumed_count = 0
        self.b_pull = params.pull_size(self.space_size)

    # -- index <-> address composition -------------------------------------

    def _compose(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map sample indices to masked (hi, lo) address halves."""
        n = len(idx)
        lo = np.zeros(n, dtype=np.uint64)
        hi = np.zeros(n, dtype=np.uint64)
        if self.composite:
            tails = [self._candidates[i] for i in idx.tolist()]
            lo[:] = np.array([t & _MASK64 for t in tails], dtype=np.uint64)
            hi[:] = np.array([t >> 64 for t in tails], dtype=np.uint64)
        else:
            for k, shift in enumerate(self._shifts):
                v = (idx >> _U64(4 * k)) & _U64(0xF)
                if shift < 64:
                    lo |= v << _U64(shift)
                else:
                    hi |= v << _U64(shift - 64)
        # keep targets inside the prefix even when it is longer than /48
        lo = (lo & self._host_lo) | self._net_lo
        hi = (hi & self._host_hi) | self._net_hi
        return hi, lo

    def _mark(self, idx: np.ndarray) -> None:
        if self._consumed is not None:
            self._consumed[idx] = True
        else:
            self._consumed_set.update(idx.tolist())
        self._consumed_count += len(idx)

    # -- sampling ----------------------------------------------------------

    def draw(self, n: int, probed: ProbedAddressMap, rng) -> ProbeBatch:
        """Up to n fresh targets; an empty batch flags an exhausted space."""
        remaining = self.space_size - self._consumed_count
        if self._consumed is not None and remaining <= 4 * n:
            his, los = self._draw_exhaustive(n, probed, rng)
        else:
            his, los = self._draw_rejection(n, probed, rng)
        batch = ProbeBatch(
            prefix=self.prefix, his=his, los=los, arm_index=-1,
            exhausted=(len(his) == 0),
        )
        return batch

    def _draw_exhaustive(self, n, probed, rng):
        free = np.nonzero(~self._consumed)[0].astype(np.uint64)
        if len(free) == 0:
            return _empty_pair()
        his, los = self._compose(free)
        fresh = ~probed.contains_batch(his, los)
        self._mark(free[~fresh])  # already probed elsewhere: never redrawn
        free, his, los = free[fresh], his[fresh], los[fresh]
        if len(free) > n:
            pick = rng.choice(len(free), size=n, replace=False)
            pick.sort()
            free, his, los = free[pick], his[pick], los[pick]
        self._mark(free)
        return his, los

    def _draw_rejection(self, n, probed, rng):
        if self.space_size >= (1 << 63):
            return self._draw_wide(n, probed, rng)
        out_hi, out_lo = [], []
        got = 0
        attempts = 0
        while got < n and attempts < 64:
            attempts += 1
            want = n - got
            cand = rng.integers(
                0, self.space_size, size=int(want * 1.4) + 8, dtype=np.uint64
            )
            cand = np.unique(cand)
            if self._consumed is not None:
                cand = cand[~self._consumed[cand]]
            else:
                taken = self._consumed_set
                keep = [i for i in cand.tolist() if i not in taken]
                cand = np.array(keep, dtype=np.uint64)
            if len(cand) == 0:
                continue
            cand = cand[:want] if len(cand) > want else cand
            his, los = self._compose(cand)
            fresh = ~probed.contains_batch(his, los)
            self._mark(cand)  # drawn indices never reused either way
            out_hi.append(his[fresh])
            out_lo.append(los[fresh])
            got += int(fresh.sum())
        if not out_hi:
            return _empty_pair()
        return np.concatenate(out_hi), np.concatenate(out_lo)

    def _draw_wide(self, n, probed, rng):
        """Spaces beyond 63 bits: draw per-nibble digits, dedup by address."""
        out_hi, out_lo = [], []
        got = 0
        attempts = 0
        while got < n and attempts < 64:
            attempts += 1
            want = n - got
            size = int(want * 1.2) + 4
            digits = rng.integers(
                0, 16, size=(size, len(self._shifts)), dtype=np.uint64
            )
            lo = np.zeros(size, dtype=np.uint64)
            hi = np.zeros(size, dtype=np.uint64)
            for k, shift in enumerate(self._shifts):
                if shift < 64:
                    lo |= digits[:, k] << _U64(shift)
                else:
                    hi |= digits[:, k] << _U64(shift - 64)
            lo = (lo & self._host_lo) | self._net_lo
            hi = (hi & self._host_hi) | self._net_hi
            taken = self._consumed_set
            keep = []
            for j, (h, l) in enumerate(zip(hi.tolist(), lo.tolist())):
                key = (h << 64) | l
                if key in taken or key in probed:
                    continue
                taken.add(key)
                keep.append(j)
                if len(keep) == want:
                    break
            self._consumed_count += len(keep)
            if keep:
                idx = np.array(keep)
                out_hi.append(hi[idx])
                out_lo.append(lo[idx])
                got += len(keep)
        if not out_hi:
            return _empty_pair()
        return np.concatenate(out_hi), np.concatenate(out_lo)


def _enumerate_tails(pattern: GenericPattern) -> list[int]:
    positions = pattern.wildcard_positions
    shifts = [4 * (TAIL_NIBBLES - 1 - pos) for pos in positions]
    out = []
    for idx in range(pattern.space_size):
        tail = 0
        for k, shift in enumerate(shifts):
            tail |= ((idx >> (4 * k)) & 0xF) << shift
        out.append(tail)
    return out


def _empty_pair():
    return np.empty(0, dtype=np.uint64), np.empty(0, dtype=np.uint64)


def sample_targets(
    pattern: GenericPattern,
    prefix: Prefix,
    n: int,
    probed: ProbedAddressMap,
    rng_seed: int,
    params: BanditParams | None = None,
) -> ProbeBatch:
    """Draw up to n distinct unprobed addresses from prefix + pattern space."""
    if n < 1:
        raise ValueError("n must be >= 1")
    params = params or BanditParams()
    arm = Arm([pattern], prefix, params)
    rng = np.random.default_rng(rng_seed)
    return arm.draw(n, probed, rng)


@dataclass
class BanditResult:
    effective: list[GenericPattern]
    actives: set[int]
    probes_used: int
    pulls: int
    pull_counts: list[int] = field(default_factory=list)
    arms: list[Arm] = field(default_factory=list)


class BanditInstance:
    """Step-driven UCB loop over a fixed arm set for one prefix."""

    ALIAS_CHECK_SIZE = 5

    def __init__(self, arms: list[Arm], prefix: Prefix, params: BanditParams,
                 probed: ProbedAddressMap, rng):
        if not arms:
            raise ValueError("bandit needs at least one arm")
        self.arms = arms
        self.prefix = prefix
        self.params = params
        self.probed = probed
        self.rng = rng
        self.t = 0
        self.probes_used = 0
        self.actives: set[int] = set()
        self.pull_counts = [0] * len(arms)
        self.done = False
        self._pending: ProbeBatch | None = None
        self._alias_queue = [
            i for i, a in enumerate(arms)
            if a.space_size >= self.ALIAS_CHECK_SIZE
        ]
        self._prescan_queue = list(range(len(arms)))
        self._cycle_next = 0
        self._cap = params.max_iter_per_arm * len(arms)

    # -- state inspection --------------------------------------------------

    def _enabled(self) -> list[int]:
        return [
            i for i, a in enumerate(self.arms)
            if not a.aliased and not a.retired and a.N >= 1
        ]

    def _mean_rate(self, enabled) -> float:
        return sum(
            self.arms[i].Q / self.arms[i].b_pull for i in enabled
        ) / len(enabled)

    def snapshot(self) -> list[dict]:
        """Serializable per-arm state table."""
        return [
            {
                "patterns": [p.key() for p in a.patterns],
                "Q": a.Q,
                "N": a.N,
                "aliased": a.aliased,
                "retired": a.retired,
            }
            for a in self.arms
        ]

    # -- step contract -----------------------------------------------------

    def propose_batch(self) -> ProbeBatch | None:
        """Next batch to probe, or None once the loop has terminated.

        The same batch is returned again until accept_results() consumes it,
        so a driver may postpone a bandit for a round without losing state.
        """
        if self._pending is not None:
            return self._pending
        while not self.done:
            if self._alias_queue:
                i = self._alias_queue[0]
                batch = self.arms[i].draw(
                    self.ALIAS_CHECK_SIZE, self.probed, self.rng
                )
                self._alias_queue.pop(0)
                if len(batch) < self.ALIAS_CHECK_SIZE:
                    # not enough fresh space for a meaningful verdict
                    if batch.exhausted:
                        self.arms[i].retired = True
                    continue
                batch.arm_index = i
                batch.kind = "alias_check"
                self._pending = batch
                return batch
            if self._prescan_queue:
                i = self._prescan_queue[0]
                arm = self.arms[i]
                self._prescan_queue.pop(0)
                if arm.aliased or arm.retired:
                    continue
                batch = arm.draw(arm.b_pull, self.probed, self.rng)
                if batch.exhausted:
                    arm.retired = True
                    continue
                batch.arm_index = i
                self._pending = batch
                return batch
            # main loop
            enabled = self._enabled()
            if not enabled or self.t >= self._cap:
                self.done = True
                return None
            if self._mean_rate(enabled) <= self.params.exit_threshold_k:
                self.done = True
                return None
            i = self._select(enabled)
            arm = self.arms[i]
            batch = arm.draw(arm.b_pull, self.probed, self.rng)
            if batch.exhausted:
                arm.retired = True
                continue
            batch.arm_index = i
            self._pending = batch
            return batch
        return None

    def _select(self, enabled) -> int:
        if self.params.policy == "cycle":
            i = enabled[self._cycle_next % len(enabled)]
            self._cycle_next += 1
            return i
        pick = ucb_select(
            [self.arms[i] for i in enabled], self.t, self.params.c_ucb
        )
        return enabled[pick]

    def accept_results(self, responsive: np.ndarray) -> None:
        batch = self._pending
        if batch is None:
            raise RuntimeError("no batch outstanding")
        if len(responsive) != len(batch):
            raise ValueError("result length does not match batch")
        self._pending = None
        self.probed.add_batch(batch.his, batch.los, responsive)
        self.probes_used += len(batch)
        arm = self.arms[batch.arm_index]
        n_active = int(responsive.sum())
        if n_active:
            active_his = batch.his[responsive]
            active_los = batch.los[responsive]
            self.actives.update(
                (h << 64) | l
                for h, l in zip(active_his.tolist(), active_los.tolist())
            )
        if batch.kind == "alias_check":
            if n_active == len(batch):  # every sampled address answered
                arm.aliased = True
                arm.Q = reward(n_active, True, self.params.alpha)
                arm.N = 1
                self.t += 1
            return
        r = reward(n_active, False, self.params.alpha)
        if arm.N == 0:
            arm.Q = r
            arm.N = 1
        else:
            arm.Q = q_update(arm.Q, arm.N, r)
            arm.N += 1
        self.pull_counts[batch.arm_index] += 1
        self.t += 1

    def effective_patterns(self) -> list[GenericPattern]:
        out = []
        for arm in self.arms:
            if arm.aliased or arm.N < 1:
                continue
            if arm.Q / arm.b_pull >= self.params.effective_threshold_r:
                out.extend(arm.patterns)
        return out

    def result(self) -> BanditResult:
        return BanditResult(
            effective=self.effective_patterns(),
            actives=self.actives,
            probes_used=self.probes_used,
            pulls=self.t,
            pull_counts=list(self.pull_counts),
            arms=self.arms,
        )


def run_bandit(
    arms,
    prefix: Prefix,
    params: BanditParams,
    prober,
    probed: ProbedAddressMap,
    rng_seed: int = 0,
) -> BanditResult:
    """Drive one bandit against a prober until its stop condition fires.

    ``arms`` may be GenericPattern objects (one singleton arm each) or
    pre-built Arm instances.
    """
    built = [
        a if isinstance(a, Arm) else Arm([a], prefix, params) for a in arms
    ]
    instance = BanditInstance(
        built, prefix, params, probed, np.random.default_rng(rng_seed)
    )
    while True:
        batch = instance.propose_batch()
        if batch is None:
            return instance.result()
        try:
            responsive = prober.probe_batch(batch.his, batch.los)
        except Exception as exc:
            raise ProbeFailure(
                f"prober failed mid-bandit: {exc}", partial=instance.result()
            ) from exc
        instance.accept_results(responsive)
