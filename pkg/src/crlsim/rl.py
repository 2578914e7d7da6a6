"""Tabular RL core: state features, the vault/plane Q-value store, epsilon-greedy
action selection, and the on-policy temporal-difference update.

A state's Q-value for an action is the SUM of one cell per (vault, plane),
each plane indexing the table through a fixed multiplicative hash of its own
feature subset. Updates spread the temporal-difference delta equally across
the contributing cells, so the aggregate lands exactly on the update target.
"""

from __future__ import annotations

import random
import threading
from collections import OrderedDict, deque
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_HASH_MULT = 0x9E3779B97F4A7C15

# in lines; action id 0 is the no-prefetch action
DEFAULT_ACTION_DELTAS = (0, 1, 2, 3, 4, 6, 8, 12, 16, 24, 32, -1, -2, -4, -8, 5)

STRIDE_NONE = 0
STRIDE_CONST_POS = 1
STRIDE_CONST_NEG = 2
STRIDE_IRREGULAR = 3


@dataclass(frozen=True, slots=True)
class StateVector:
    pc_sig: int
    delta_sig: int
    stride_sig: int
    hitmiss_sig: int
    reuse_sig: int
    core_id: int


@dataclass(frozen=True, slots=True)
class PrefetchAction:
    action_id: int
    delta_lines: int


class ActionTable:
    """Bijection between action ids and line deltas; exactly one zero delta."""

    def __init__(self, deltas: tuple[int, ...] = DEFAULT_ACTION_DELTAS):
        if len(set(deltas)) != len(deltas):
            raise ValueError("action deltas must be unique")
        if deltas.count(0) != 1:
            raise ValueError("exactly one no-prefetch (delta 0) action required")
        self._actions = tuple(PrefetchAction(i, d) for i, d in enumerate(deltas))

    def __len__(self) -> int:
        return len(self._actions)

    def action(self, action_id: int) -> PrefetchAction:
        return self._actions[action_id]

    @property
    def deltas(self) -> tuple[int, ...]:
        return tuple(a.delta_lines for a in self._actions)


@dataclass(frozen=True)
class QVStoreGeometry:
    n_vaults: int = 2
    planes_per_vault: int = 3
    feature_dim: int = 128
    action_dim: int = 16
    q_width_bits: int = 16

    def __post_init__(self):
        if min(self.n_vaults, self.planes_per_vault, self.feature_dim,
               self.action_dim, self.q_width_bits) <= 0:
            raise ValueError("all geometry dimensions must be positive")


@dataclass(frozen=True)
class LearnParams:
    alpha: float = 0.1
    gamma: float = 0.5
    epsilon: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")


@dataclass(frozen=True)
class RlConfig:
    params: LearnParams = LearnParams()
    geometry: QVStoreGeometry = QVStoreGeometry()
    action_deltas: tuple[int, ...] = DEFAULT_ACTION_DELTAS
    quantized: bool = False


# Feature subsets hashed by each (vault, plane), in row-major plane order.
# Exactly one plane mixes in core_id so core-specific knowledge coexists with
# cross-core sharing; two planes are PC-free so stride/delta behaviour
# transfers across instructions.
PLANE_FEATURES = (
    ("pc",),
    ("pc_xor_delta",),
    ("delta", "stride"),
    ("pc", "hitmiss"),
    ("reuse", "stride"),
    ("pc", "core"),
)

_PLANE_SALTS = (
    0x243F6A8885A308D3,
    0x13198A2E03707344,
    0xA4093822299F31D0,
    0x082EFA98EC4E6C89,
    0x452821E638D01377,
    0xBE5466CF34E90C6C,
)


def _feature_value(state: StateVector, name: str) -> int:
    if name == "pc":
        return state.pc_sig
    if name == "pc_xor_delta":
        return state.pc_sig ^ (state.delta_sig & 0xFFFFF)
    if name == "delta":
        return state.delta_sig
    if name == "stride":
        return state.stride_sig
    if name == "hitmiss":
        return state.hitmiss_sig
    if name == "reuse":
        return state.reuse_sig
    if name == "core":
        return state.core_id
    raise KeyError(name)


def plane_index(state: StateVector, vault: int, plane: int, geometry: QVStoreGeometry) -> int:
    """Deterministic index into one plane's feature dimension."""
    flat = vault * geometry.planes_per_vault + plane
    h = _PLANE_SALTS[flat % len(_PLANE_SALTS)]
    h ^= (vault * 0xFF51AFD7ED558CCD + plane * 0xC4CEB9FE1A85EC53) & _MASK64
    for name in PLANE_FEATURES[flat % len(PLANE_FEATURES)]:
        h = ((h ^ (_feature_value(state, name) & _MASK64)) * _HASH_MULT) & _MASK64
    return (h >> 17) % geometry.feature_dim


class QVStore:
    """Vault/plane-organised Q table.

    regime "exclusive" assumes a single owner; "shared" wraps every read and
    read-modify-write in a lock so concurrent core agents stay per-cell
    consistent. In quantized mode each stored cell snaps to signed 16-bit
    fixed point with 8 fractional bits after every write.
    """

    _INDEX_CACHE_CAP = 1 << 16

    def __init__(self, geometry: QVStoreGeometry | None = None,
                 quantized: bool = False, regime: str = "exclusive"):
        if regime not in ("exclusive", "shared"):
            raise ValueError(f"unknown regime {regime!r}")
        self.geometry = geometry or QVStoreGeometry()
        self.quantized = quantized
        self.regime = regime
        g = self.geometry
        self.q = np.zeros((g.n_vaults, g.planes_per_vault, g.feature_dim, g.action_dim))
        # flat (plane-row, action) view sharing the same buffer; one gather
        # per lookup instead of one per plane
        self._flat = self.q.reshape(-1, g.action_dim)
        self.n_cells = g.n_vaults * g.planes_per_vault
        self._lock = threading.Lock() if regime == "shared" else None
        self._index_cache: dict[StateVector, tuple[tuple, np.ndarray]] = {}
        self.fixed_step = 2.0 ** -8
        self.fixed_min = -(2 ** (g.q_width_bits - 1)) * self.fixed_step
        self.fixed_max = (2 ** (g.q_width_bits - 1) - 1) * self.fixed_step

    def _cells_rows(self, state: StateVector) -> tuple[tuple, np.ndarray]:
        cached = self._index_cache.get(state)
        if cached is not None:
            return cached
        g = self.geometry
        cells = tuple(
            (v, p, plane_index(state, v, p, g))
            for v in range(g.n_vaults)
            for p in range(g.planes_per_vault)
        )
        rows = np.asarray(
            [(v * g.planes_per_vault + p) * g.feature_dim + i for v, p, i in cells],
            dtype=np.intp)
        if len(self._index_cache) >= self._INDEX_CACHE_CAP:
            self._index_cache.clear()
        self._index_cache[state] = (cells, rows)
        return cells, rows

    def cells(self, state: StateVector) -> tuple[tuple[int, int, int], ...]:
        return self._cells_rows(state)[0]

    def q_value(self, state: StateVector, action_id: int) -> float:
        if self._lock:
            with self._lock:
                return self._q_value(state, action_id)
        return self._q_value(state, action_id)

    def _q_value(self, state: StateVector, action_id: int) -> float:
        rows = self._cells_rows(state)[1]
        return float(self._flat[rows, action_id].sum())

    def q_row(self, state: StateVector) -> np.ndarray:
        """Summed Q-values over all actions for one state."""
        if self._lock:
            with self._lock:
                return self._q_row(state)
        return self._q_row(state)

    def _q_row(self, state: StateVector) -> np.ndarray:
        rows = self._cells_rows(state)[1]
        return self._flat[rows].sum(axis=0)

    def write_target(self, state: StateVector, action_id: int, target: float) -> None:
        """Move q_value(state, action) onto `target`, spreading the delta
        equally across the contributing cells."""
        if self._lock:
            with self._lock:
                self._write_target(state, action_id, target)
        else:
            self._write_target(state, action_id, target)

    def _write_target(self, state: StateVector, action_id: int, target: float) -> None:
        rows = self._cells_rows(state)[1]
        col = self._flat[rows, action_id]
        old = float(col.sum())
        share = (target - old) / len(rows)
        updated = col + share
        if self.quantized:
            step = self.fixed_step
            np.round(updated / step, out=updated)
            updated *= step
            np.clip(updated, self.fixed_min, self.fixed_max, out=updated)
        self._flat[rows, action_id] = updated


def sarsa_update(store: QVStore, s: StateVector, a: PrefetchAction, r: float,
                 s_next: StateVector | None, a_next: PrefetchAction | None,
                 params: LearnParams) -> float:
    """One on-policy temporal-difference step; returns the update target.

    A missing successor pair (end of a core's action history) contributes a
    zero future term.
    """
    aid = a.action_id
    if store._lock:
        with store._lock:
            return _sarsa_update_locked(store, s, aid, r, s_next, a_next, params)
    return _sarsa_update_locked(store, s, aid, r, s_next, a_next, params)


def _sarsa_update_locked(store, s, aid, r, s_next, a_next, params) -> float:
    old_q = store._q_value(s, aid)
    if s_next is not None and a_next is not None:
        future_q = store._q_value(s_next, a_next.action_id)
    else:
        future_q = 0.0
    target = old_q + params.alpha * (r + params.gamma * future_q - old_q)
    if not np.isfinite(target):
        raise ArithmeticError(f"non-finite Q update target {target!r}")
    store._write_target(s, aid, target)
    return target


def select_action(store: QVStore, state: StateVector, params: LearnParams,
                  rng: random.Random, actions: ActionTable) -> PrefetchAction:
    """Epsilon-greedy choice; greedy ties break toward the lowest action id."""
    if rng.random() < params.epsilon:
        return actions.action(rng.randrange(len(actions)))
    row = store.q_row(state)
    return actions.action(int(np.argmax(row)))


def agent_rng(seed: int, core_id: int) -> random.Random:
    """Per-core decision RNG; identical derivation for every prefetcher kind
    so single-core behaviour is comparable across kinds."""
    x = (seed & _MASK64) * 0x9E3779B97F4A7C15 + (core_id + 1) * 0xD6E8FEB86659FD93
    return random.Random(x & _MASK64)


# -- state extraction --------------------------------------------------------

_PC_SIG_MASK = 0xFFFFF


def fold_pc(pc: int) -> int:
    return ((pc >> 2) ^ (pc >> 13)) & _PC_SIG_MASK


def classify_stride(deltas) -> int:
    if len(deltas) < 2:
        return STRIDE_NONE
    d1, d2 = deltas[-2], deltas[-1]
    if d1 == d2:
        if d2 > 0:
            return STRIDE_CONST_POS
        if d2 < 0:
            return STRIDE_CONST_NEG
        return STRIDE_NONE  # repeated same-line access, no movement
    return STRIDE_IRREGULAR


def reuse_bucket(distance: int | None) -> int:
    """Power-of-two bucket of the per-core reuse distance; 0 = first touch."""
    if distance is None:
        return 0
    return min(15, distance.bit_length())


class CoreContext:
    """Rolling per-core view of recent demand accesses feeding state extraction."""

    REUSE_TRACK_CAP = 4096

    def __init__(self, core_id: int):
        self.core_id = core_id
        self._deltas: deque[int] = deque(maxlen=2)
        self._last_line: int | None = None
        self._prev_near_hit = 0
        self._access_idx = 0
        self._last_seen: OrderedDict[int, int] = OrderedDict()
        # signature snapshot for the most recent access
        self.pc_sig = 0
        self.delta_sig = 0
        self.stride_sig = STRIDE_NONE
        self.hitmiss_sig = 0
        self.reuse_sig = 0

    def note_access(self, pc: int, line: int, near_hit: bool) -> None:
        """Fold one demand access into the context.

        near_hit is whether this access was served by L1/L2; it becomes the
        hit/miss signature of the NEXT access (the current one is, by flow
        construction, usually a miss).
        """
        self.pc_sig = fold_pc(pc)
        if self._last_line is None:
            self.delta_sig = 0
        else:
            delta = line - self._last_line
            self._deltas.append(delta)
            self.delta_sig = delta
        self.stride_sig = classify_stride(self._deltas)
        self.hitmiss_sig = self._prev_near_hit

        seen = self._last_seen.get(line)
        self.reuse_sig = reuse_bucket(None if seen is None else self._access_idx - seen)
        self._last_seen[line] = self._access_idx
        self._last_seen.move_to_end(line)
        if len(self._last_seen) > self.REUSE_TRACK_CAP:
            self._last_seen.popitem(last=False)

        self._prev_near_hit = 1 if near_hit else 0
        self._last_line = line
        self._access_idx += 1


def extract_state(ctx: CoreContext) -> StateVector:
    """Snapshot the context into the hashed feature tuple."""
    return StateVector(
        pc_sig=ctx.pc_sig,
        delta_sig=ctx.delta_sig,
        stride_sig=ctx.stride_sig,
        hitmiss_sig=ctx.hitmiss_sig,
        reuse_sig=ctx.reuse_sig,
        core_id=ctx.core_id,
    )


# -- storage model -----------------------------------------------------------

EQ_ENTRY_FIELD_BITS = {
    "state": 21,
    "action": 5,
    "reward": 5,
    "filled": 1,
    "address": 16,
    "core_id": 4,
}
EQ_ENTRY_BITS = sum(EQ_ENTRY_FIELD_BITS.values())


def storage_bits(geometry: QVStoreGeometry | None = None, eq_entries: int = 256) -> dict[str, int]:
    """Hardware storage model for the Q store plus the evaluation queue."""
    g = geometry or QVStoreGeometry()
    qv = g.n_vaults * g.planes_per_vault * g.feature_dim * g.action_dim * g.q_width_bits
    eq = eq_entries * EQ_ENTRY_BITS
    return {
        "qvstore_bits": qv,
        "eq_bits": eq,
        "eq_entry_bits": EQ_ENTRY_BITS,
        "total_bits": qv + eq,
    }
