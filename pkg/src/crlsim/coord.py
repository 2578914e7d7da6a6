"""Multicore coordination: the shared learning repository facade, the global
state table, cross-core redundancy filtering, and batched Q commits.

The repository bundles the shared Q store and evaluation queue with the
structures that need a system-wide view: a bounded ring of recent accesses
(who touched which line, when), the set of prefetch lines currently in
flight, and a buffer of Q updates committed in batches to cut down on
synchronisation.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable

from . import rl
from .evalq import EvaluationQueue
from .rl import LearnParams, PrefetchAction, QVStore, StateVector

FILTER_REASONS = ("in_cache", "in_flight", "cross_core_window")


@dataclass(frozen=True)
class CoordConfig:
    enabled: bool = True
    gst_capacity: int = 1024
    window_cycles: int = 500
    batch_size: int = 8
    filter_prefetches: bool = True

    def __post_init__(self):
        if self.gst_capacity < 1:
            raise ValueError("gst_capacity must be >= 1")
        if self.window_cycles < 0:
            raise ValueError("window_cycles must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True, slots=True)
class GstEntry:
    pc: int
    line_addr: int
    core_id: int
    timestamp_cycle: int


class GlobalStateTable:
    """Bounded ring of (pc, line, core, cycle) records across all cores.

    The newest record per line is kept directly addressable so the redundancy
    filter's window test is O(1).
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._ring: deque[GstEntry] = deque()
        self._latest: dict[int, GstEntry] = {}

    def __len__(self) -> int:
        return len(self._ring)

    def record(self, pc: int, line_addr: int, core_id: int, cycle: int) -> None:
        if len(self._ring) >= self.capacity:
            old = self._ring.popleft()
            if self._latest.get(old.line_addr) is old:
                del self._latest[old.line_addr]
        entry = GstEntry(pc, line_addr, core_id, cycle)
        self._ring.append(entry)
        self._latest[line_addr] = entry

    def lookup(self, line_addr: int) -> GstEntry | None:
        """Newest record for a line, or None if it aged out of the ring."""
        return self._latest.get(line_addr)

    def recent_within(self, line_addr: int, cycle: int, window: int) -> bool:
        entry = self._latest.get(line_addr)
        return entry is not None and cycle - entry.timestamp_cycle <= window

    def entries(self) -> tuple[GstEntry, ...]:
        return tuple(self._ring)


def _new_suppressed() -> dict[str, int]:
    return {reason: 0 for reason in FILTER_REASONS}


class SharedRepository:
    """Shared learning area used by every core's agent.

    Holds the shared QVStore and EvaluationQueue plus: the global state
    table, the in-flight prefetch set, per-core latest decisions (for the
    on-policy successor pair), and the pending update batch.
    """

    def __init__(self, store: QVStore, eq: EvaluationQueue, cfg: CoordConfig,
                 params: LearnParams, regime: str = "exclusive",
                 on_update: Callable | None = None):
        self.store = store
        self.eq = eq
        self.cfg = cfg
        self.params = params
        self.gst = GlobalStateTable(cfg.gst_capacity)
        self.inflight: dict[int, tuple[int, int]] = {}  # line -> (core, cycle)
        self.pending_updates: list[tuple] = []
        self.last_decision: dict[int, tuple[StateVector, PrefetchAction]] = {}
        self.suppressed = _new_suppressed()
        self._lock = threading.Lock() if regime == "shared" else None
        self._on_update = on_update  # tracing hook, called per applied update

    # -- redundancy filter ---------------------------------------------------

    def filter_redundant(self, line: int, core_id: int, cycle: int,
                         resident: Callable[[int], bool]) -> tuple[bool, str | None]:
        """Decide whether a candidate prefetch line should be issued.

        Suppresses when the line is already resident at the prefetch target,
        already in flight, or (window permitting) any core touched or
        prefetched it recently. A zero window disables the history test.
        """
        if not self.cfg.filter_prefetches:
            return True, None
        if self._lock:
            with self._lock:
                return self._filter(line, core_id, cycle, resident)
        return self._filter(line, core_id, cycle, resident)

    def _filter(self, line, core_id, cycle, resident):
        if resident(line):
            self.suppressed["in_cache"] += 1
            return False, "in_cache"
        if line in self.inflight:
            self.suppressed["in_flight"] += 1
            return False, "in_flight"
        if self.cfg.window_cycles > 0:
            entry = self.gst.lookup(line)
            # only a different core's recent touch makes this cross-core
            # redundant; one's own window hits pass (the residency and
            # in-flight checks already caught the wasteful cases)
            if (entry is not None and entry.core_id != core_id
                    and cycle - entry.timestamp_cycle <= self.cfg.window_cycles):
                self.suppressed["cross_core_window"] += 1
                return False, "cross_core_window"
        return True, None

    def note_issued(self, line: int, core_id: int, cycle: int) -> None:
        self.inflight[line] = (core_id, cycle)

    def note_filled(self, line: int) -> None:
        self.inflight.pop(line, None)

    # -- batched updates -----------------------------------------------------

    def enqueue_update(self, args: tuple) -> int:
        """Buffer one Q update; the batch commits as soon as it is full.
        Returns how many updates were applied by this call."""
        if self._lock:
            with self._lock:
                self.pending_updates.append(args)
                if len(self.pending_updates) >= self.cfg.batch_size:
                    return self._commit()
                return 0
        self.pending_updates.append(args)
        if len(self.pending_updates) >= self.cfg.batch_size:
            return self._commit()
        return 0

    def _commit(self) -> int:
        applied = 0
        for s, a, r, s_next, a_next in self.pending_updates:
            rl.sarsa_update(self.store, s, a, r, s_next, a_next, self.params)
            if self._on_update is not None:
                self._on_update(r)
            applied += 1
        self.pending_updates.clear()
        return applied

    def reset_counters(self) -> None:
        self.suppressed = _new_suppressed()


def batch_commit(repo: SharedRepository, force: bool = False) -> int:
    """Apply pending updates in insertion order when the batch is full or a
    flush is forced (end of run). Returns the applied count."""
    if repo._lock:
        with repo._lock:
            if force or len(repo.pending_updates) >= repo.cfg.batch_size:
                return repo._commit()
            return 0
    if force or len(repo.pending_updates) >= repo.cfg.batch_size:
        return repo._commit()
    return 0
