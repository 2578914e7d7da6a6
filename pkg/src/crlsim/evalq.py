"""Evaluation queue: FIFO of recently taken prefetch actions awaiting reward.

A demand access to a queued prefetch address rewards the oldest unrewarded
matching entry (timely or late, depending on the filled bit). Entries that
fall off the FIFO without ever matching carry the inaccurate reward. Rewards
are write-once. Eviction is the point where an entry's (state, action,
reward) is handed back for the Q-value update.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

from .rl import PrefetchAction, StateVector


@dataclass(frozen=True)
class RewardScheme:
    """Reward levels: accurate-timely, accurate-late, inaccurate, and the two
    no-prefetch levels picked by memory pressure at insert time."""

    r_at: float = 20.0
    r_al: float = 12.0
    r_in: float = -14.0
    r_np_low: float = -2.0
    r_np_high: float = -4.0
    pressure_threshold: float = 0.75

    def __post_init__(self):
        if self.r_at < self.r_al:
            raise ValueError("timely reward must be >= late reward")
        if self.r_in >= 0:
            raise ValueError("inaccurate reward must be negative")
        if not 0.0 <= self.pressure_threshold <= 1.0:
            raise ValueError("pressure_threshold must lie in [0, 1]")

    def no_prefetch_reward(self, pressure: float) -> float:
        return self.r_np_high if pressure >= self.pressure_threshold else self.r_np_low


@dataclass(slots=True)
class EQEntry:
    state: StateVector
    action: PrefetchAction
    pf_addr: int | None  # prefetch line address; None for no-prefetch entries
    core_id: int
    insert_cycle: int
    filled: bool = False
    reward: float | None = None
    evicted: bool = False


def _new_counters() -> dict[str, int]:
    return {
        "inserted": 0,
        "evicted": 0,
        "rewards_timely": 0,
        "rewards_late": 0,
        "evict_default_inaccurate": 0,
        "marked_filled": 0,
    }


class EvaluationQueue:
    """Capacity-bounded FIFO with line-indexed lookups.

    regime "shared" makes each operation atomic under one lock; "exclusive"
    (the default deterministic mode) skips locking.
    """

    def __init__(self, capacity: int, scheme: RewardScheme, regime: str = "exclusive"):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if regime not in ("exclusive", "shared"):
            raise ValueError(f"unknown regime {regime!r}")
        self.capacity = capacity
        self.scheme = scheme
        self._fifo: deque[EQEntry] = deque()
        self._by_line: dict[int, deque[EQEntry]] = {}
        self._lock = threading.Lock() if regime == "shared" else None
        self.counters = _new_counters()

    def __len__(self) -> int:
        return len(self._fifo)

    def insert(self, entry: EQEntry) -> EQEntry | None:
        """Append an entry; returns the evicted entry when capacity was exceeded.

        No-prefetch (and out-of-page) entries arrive with their reward already
        assigned; prefetching entries arrive unrewarded.
        """
        if self._lock:
            with self._lock:
                return self._insert(entry)
        return self._insert(entry)

    def _insert(self, entry: EQEntry) -> EQEntry | None:
        self._fifo.append(entry)
        self.counters["inserted"] += 1
        if entry.pf_addr is not None:
            self._by_line.setdefault(entry.pf_addr, deque()).append(entry)
        if len(self._fifo) > self.capacity:
            return self._evict_oldest()
        return None

    def _evict_oldest(self) -> EQEntry:
        entry = self._fifo.popleft()
        entry.evicted = True
        self.counters["evicted"] += 1
        if entry.pf_addr is not None:
            dq = self._by_line.get(entry.pf_addr)
            if dq:
                # same-line entries are queued in FIFO order, so the global
                # oldest is also this deque's head
                dq.popleft()
                if not dq:
                    del self._by_line[entry.pf_addr]
        if entry.reward is None:
            entry.reward = self.scheme.r_in
            self.counters["evict_default_inaccurate"] += 1
        return entry

    def demand_lookup(self, line: int) -> tuple[EQEntry, float] | None:
        """Reward the oldest unrewarded entry whose prefetch address matches
        a demanded line: timely if its fill completed, late otherwise."""
        if self._lock:
            with self._lock:
                return self._demand_lookup(line)
        return self._demand_lookup(line)

    def _demand_lookup(self, line: int) -> tuple[EQEntry, float] | None:
        dq = self._by_line.get(line)
        if not dq:
            return None
        for entry in dq:
            if entry.reward is None:
                if entry.filled:
                    entry.reward = self.scheme.r_at
                    self.counters["rewards_timely"] += 1
                else:
                    entry.reward = self.scheme.r_al
                    self.counters["rewards_late"] += 1
                return entry, entry.reward
        return None

    def mark_filled(self, line: int) -> int:
        """Set the filled bit on the oldest matching unfilled entry; returns
        how many entries were marked (0 or 1). An already-assigned reward is
        never revisited."""
        if self._lock:
            with self._lock:
                return self._mark_filled(line)
        return self._mark_filled(line)

    def _mark_filled(self, line: int) -> int:
        dq = self._by_line.get(line)
        if not dq:
            return 0
        for entry in dq:
            if not entry.filled:
                entry.filled = True
                self.counters["marked_filled"] += 1
                return 1
        return 0

    def drain(self) -> list[EQEntry]:
        """Evict everything, oldest first, applying the usual eviction-default
        reward; used at end of run so every entry produces its one update."""
        if self._lock:
            with self._lock:
                return self._drain()
        return self._drain()

    def _drain(self) -> list[EQEntry]:
        out = []
        while self._fifo:
            out.append(self._evict_oldest())
        return out


def update_tuple(evicted: EQEntry,
                 successor: tuple[StateVector, PrefetchAction] | None):
    """Assemble the arguments of the Q update an eviction triggers.

    The successor is the evicting core's most recent (state, action) pair;
    with no successor the future term bootstraps to zero.
    """
    if evicted.reward is None:
        raise ValueError("evicted entry must carry a reward")
    s_next, a_next = successor if successor is not None else (None, None)
    return evicted.state, evicted.action, evicted.reward, s_next, a_next
