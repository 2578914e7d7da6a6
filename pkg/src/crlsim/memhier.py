"""Per-core L1/L2, shared LLC, and a bandwidth-limited DRAM model.

Timing is additive and blocking: a demand access stalls its core for the
latency of the serving level, plus DRAM queueing delay when the request
reaches memory. Prefetch fills complete asynchronously at a DRAM-determined
cycle and carry a provenance bit used for coverage accounting.
"""

from __future__ import annotations

import heapq
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable

from .trace import TraceRecord, interleave

L1, L2, LLC, DRAM = "l1", "l2", "llc", "dram"


@dataclass(frozen=True)
class CacheConfig:
    size_bytes: int
    associativity: int
    latency_cycles: int
    line_bytes: int = 64

    def __post_init__(self):
        if min(self.size_bytes, self.associativity, self.latency_cycles, self.line_bytes) <= 0:
            raise ValueError("all cache parameters must be positive")
        if self.size_bytes % (self.line_bytes * self.associativity) != 0:
            raise ValueError(
                f"size_bytes={self.size_bytes} not divisible by "
                f"line_bytes*associativity={self.line_bytes * self.associativity}"
            )

    @property
    def n_sets(self) -> int:
        return self.size_bytes // (self.line_bytes * self.associativity)


@dataclass(frozen=True)
class DramConfig:
    service_latency_cycles: int = 200
    min_gap_cycles: int = 10  # one new request may begin service every min_gap

    def __post_init__(self):
        if self.service_latency_cycles <= 0 or self.min_gap_cycles <= 0:
            raise ValueError("DRAM latencies must be positive")


@dataclass(frozen=True)
class MemHierConfig:
    l1: CacheConfig = CacheConfig(32 * 1024, 8, 4)
    l2: CacheConfig = CacheConfig(256 * 1024, 8, 14)
    llc: CacheConfig = CacheConfig(2 * 1024 * 1024, 16, 40)
    dram: DramConfig = DramConfig()
    prefetch_target: str = LLC  # "llc" or "l2"

    def __post_init__(self):
        if self.prefetch_target not in (LLC, L2):
            raise ValueError(f"prefetch_target must be 'llc' or 'l2', got {self.prefetch_target!r}")
        if not (self.l1.line_bytes == self.l2.line_bytes == self.llc.line_bytes):
            raise ValueError("all levels must share one line size")

    @property
    def line_bytes(self) -> int:
        return self.l1.line_bytes


class LineMeta:
    __slots__ = ("prefetched",)

    def __init__(self, prefetched: bool = False):
        self.prefetched = prefetched


class Cache:
    """One set-associative LRU cache array keyed by line number."""

    def __init__(self, cfg: CacheConfig, name: str):
        self.cfg = cfg
        self.name = name
        self.n_sets = cfg.n_sets
        self.assoc = cfg.associativity
        # per set: tag -> LineMeta, in recency order (LRU first)
        self.sets: list[OrderedDict[int, LineMeta]] = [OrderedDict() for _ in range(self.n_sets)]

    def lookup(self, line: int) -> LineMeta | None:
        """Return the line's metadata on a hit and refresh its recency."""
        s = self.sets[line % self.n_sets]
        tag = line // self.n_sets
        meta = s.get(tag)
        if meta is not None:
            s.move_to_end(tag)
        return meta

    def contains(self, line: int) -> bool:
        """Presence probe without touching recency."""
        return (line // self.n_sets) in self.sets[line % self.n_sets]

    def fill(self, line: int, prefetched: bool = False) -> tuple[int, LineMeta] | None:
        """Insert a line; returns (victim_line, victim_meta) when one is evicted.

        Filling a resident line refreshes recency and keeps its existing
        provenance bit.
        """
        set_idx = line % self.n_sets
        s = self.sets[set_idx]
        tag = line // self.n_sets
        if tag in s:
            s.move_to_end(tag)
            return None
        victim = None
        if len(s) >= self.assoc:
            vtag, vmeta = s.popitem(last=False)
            victim = (vtag * self.n_sets + set_idx, vmeta)
        s[tag] = LineMeta(prefetched)
        return victim

    def resident_lines(self) -> Iterable[tuple[int, LineMeta]]:
        for set_idx, s in enumerate(self.sets):
            for tag, meta in s.items():
                yield tag * self.n_sets + set_idx, meta


class DramModel:
    """Single-channel DRAM abstraction: fixed service latency, one request
    admitted every min_gap cycles."""

    def __init__(self, cfg: DramConfig):
        self.cfg = cfg
        self.next_free_cycle = 0
        self.requests = 0
        self.busy_cycles = 0

    def request(self, cycle: int) -> int:
        """Claim a service slot at or after `cycle`; returns completion cycle."""
        start = max(cycle, self.next_free_cycle)
        self.next_free_cycle = start + self.cfg.min_gap_cycles
        self.requests += 1
        self.busy_cycles += self.cfg.min_gap_cycles
        return start + self.cfg.service_latency_cycles

    def backlog_fraction(self, cycle: int) -> float:
        """Queue pressure in [0, 1]: backlog relative to one service time."""
        lag = self.next_free_cycle - cycle
        if lag <= 0:
            return 0.0
        return min(1.0, lag / self.cfg.service_latency_cycles)

    def reset_counters(self) -> None:
        self.requests = 0
        self.busy_cycles = 0


@dataclass(slots=True)
class AccessResult:
    serviced_level: str
    stall_cycles: int
    was_prefetch_covered: bool


class PendingFill:
    __slots__ = ("line", "completion", "core_id", "demand_claimed", "applied")

    def __init__(self, line: int, completion: int, core_id: int):
        self.line = line
        self.completion = completion
        self.core_id = core_id
        self.demand_claimed = False
        self.applied = False


def _new_counters() -> dict[str, int]:
    return {
        "duplicate_in_cache": 0,   # prefetch found the line already resident
        "mshr_merged": 0,          # prefetch found the line already in flight
        "demand_merged": 0,        # demand hit an in-flight prefetch (late)
        "prefetch_fills": 0,       # prefetch data transfers completed
        "useless_evictions": 0,    # prefetched lines evicted untouched
    }


class MemoryHierarchy:
    """Per-core L1/L2 over a shared LLC and one DRAM channel."""

    def __init__(self, cfg: MemHierConfig, n_cores: int):
        if n_cores < 1:
            raise ValueError("n_cores must be >= 1")
        self.cfg = cfg
        self.n_cores = n_cores
        self.l1 = [Cache(cfg.l1, f"l1.{c}") for c in range(n_cores)]
        self.l2 = [Cache(cfg.l2, f"l2.{c}") for c in range(n_cores)]
        self.llc = Cache(cfg.llc, "llc")
        self.dram = DramModel(cfg.dram)
        self.counters = _new_counters()
        self._pending: list[tuple[int, int, PendingFill]] = []  # (completion, tiebreak, fill)
        self._pending_by_line: dict[int, PendingFill] = {}
        self._pending_seq = 0
        # called as fill_listener(line, core_id, cycle) for every completed
        # prefetch fill; the engine hooks the evaluation queue's filled bit here
        self.fill_listener = None

    # -- address helpers ---------------------------------------------------

    def line_of(self, addr: int) -> int:
        return addr // self.cfg.line_bytes

    def _target_cache(self, core_id: int) -> Cache:
        return self.llc if self.cfg.prefetch_target == LLC else self.l2[core_id]

    # -- demand path ---------------------------------------------------------

    def demand_access(self, core_id: int, addr: int, cycle: int) -> AccessResult:
        """Walk L1 -> L2 -> LLC -> DRAM for one demand access.

        The serving level's latency is the stall; DRAM adds queueing delay.
        Fills propagate inclusively to every level on the walk path. A hit on
        a line whose prefetch bit is set reports covered and clears the bit.
        An in-flight prefetch whose transfer completes by the time the walk
        reaches the LLC serves the access as a covered LLC hit; one that is
        still in flight absorbs the demand (late prefetch) and the core waits
        out the remaining transfer time.
        """
        self.apply_fills_due(cycle)
        line = self.line_of(addr)
        l1 = self.l1[core_id]
        l2 = self.l2[core_id]

        meta = l1.lookup(line)
        if meta is not None:
            covered = meta.prefetched
            meta.prefetched = False
            return AccessResult(L1, self.cfg.l1.latency_cycles, covered)

        meta = l2.lookup(line)
        if meta is not None:
            covered = meta.prefetched
            meta.prefetched = False
            self._account_victim(l1.fill(line))
            return AccessResult(L2, self.cfg.l2.latency_cycles, covered)

        meta = self.llc.lookup(line)
        if meta is not None:
            covered = meta.prefetched
            meta.prefetched = False
            self._account_victim(l2.fill(line))
            self._account_victim(l1.fill(line))
            return AccessResult(LLC, self.cfg.llc.latency_cycles, covered)

        llc_lat = self.cfg.llc.latency_cycles
        pend = self._pending_by_line.get(line)
        if pend is not None:
            if pend.completion <= cycle + llc_lat:
                # Timely after all: the transfer lands before the walk reaches
                # the LLC, so the access is served as a covered hit and the
                # prefetched data is consumed on arrival.
                pend.applied = True
                del self._pending_by_line[line]
                self.counters["prefetch_fills"] += 1
                if self.fill_listener is not None:
                    self.fill_listener(line, pend.core_id, cycle)
                self._fill_demand_path(core_id, line)
                return AccessResult(LLC, llc_lat, True)
            # Late prefetch: wait out the remaining flight time instead of
            # issuing a second DRAM transfer.
            pend.demand_claimed = True
            self.counters["demand_merged"] += 1
            stall = llc_lat + max(0, pend.completion - (cycle + llc_lat))
        else:
            completion = self.dram.request(cycle + llc_lat)
            stall = completion - cycle
        self._fill_demand_path(core_id, line)
        return AccessResult(DRAM, stall, False)

    def _fill_demand_path(self, core_id: int, line: int) -> None:
        self._account_victim(self.llc.fill(line))
        self._account_victim(self.l2[core_id].fill(line))
        self._account_victim(self.l1[core_id].fill(line))

    def _account_victim(self, victim: tuple[int, LineMeta] | None) -> None:
        if victim is not None and victim[1].prefetched:
            self.counters["useless_evictions"] += 1

    # -- prefetch path -------------------------------------------------------

    def prefetch_fill(self, core_id: int, line: int, cycle: int) -> dict:
        """Request a prefetch of `line` into the configured target level.

        Returns {"status": "scheduled", "completion": c} when a DRAM transfer
        was started, or {"status": "duplicate_in_cache" | "merged_inflight"}
        when the request was absorbed without DRAM traffic.
        """
        if self._target_cache(core_id).contains(line):
            self.counters["duplicate_in_cache"] += 1
            return {"status": "duplicate_in_cache"}
        if line in self._pending_by_line:
            self.counters["mshr_merged"] += 1
            return {"status": "merged_inflight"}
        completion = self.dram.request(cycle)
        pend = PendingFill(line, completion, core_id)
        self._pending_seq += 1
        heapq.heappush(self._pending, (completion, self._pending_seq, pend))
        self._pending_by_line[line] = pend
        return {"status": "scheduled", "completion": completion}

    def apply_fills_due(self, cycle: int) -> list[tuple[int, int]]:
        """Install every pending prefetch whose completion is <= cycle.

        Returns the applied (line, core_id) pairs in completion order.
        """
        applied: list[tuple[int, int]] = []
        while self._pending and self._pending[0][0] <= cycle:
            _, _, pend = heapq.heappop(self._pending)
            if pend.applied:
                continue
            pend.applied = True
            self._pending_by_line.pop(pend.line, None)
            self.counters["prefetch_fills"] += 1
            if not pend.demand_claimed:
                target = self._target_cache(pend.core_id)
                self._account_victim(target.fill(pend.line, prefetched=True))
            if self.fill_listener is not None:
                self.fill_listener(pend.line, pend.core_id, cycle)
            applied.append((pend.line, pend.core_id))
        return applied

    def pending_count(self) -> int:
        return len(self._pending_by_line)

    def flush_prefetched_residue(self) -> int:
        """Count (and clear) lines still carrying the prefetch bit; used for
        end-of-run overprediction accounting."""
        n = 0
        caches = list(self.l2) if self.cfg.prefetch_target == L2 else [self.llc]
        for cache in caches:
            for _, meta in cache.resident_lines():
                if meta.prefetched:
                    meta.prefetched = False
                    n += 1
        return n

    def reset_counters(self) -> None:
        self.counters = _new_counters()
        self.dram.reset_counters()


def run_baseline_misses(per_core: list[list[TraceRecord]], cfg: MemHierConfig | None = None) -> int:
    """LLC demand miss count for a trace with prefetching disabled.

    This is the denominator for coverage and overprediction. Records are
    consumed round-robin, one per core per turn, matching the engine.
    """
    cfg = cfg or MemHierConfig()
    hier = MemoryHierarchy(cfg, len(per_core))
    misses = 0
    for rec in interleave(per_core):
        result = hier.demand_access(rec.core_id, rec.addr, 0)
        if result.serviced_level == DRAM:
            misses += 1
    return misses
