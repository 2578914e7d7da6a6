import random

import pytest

from crlsim.coord import (
    CoordConfig,
    GlobalStateTable,
    SharedRepository,
    batch_commit,
)
from crlsim.evalq import EvaluationQueue, RewardScheme
from crlsim.rl import ActionTable, LearnParams, QVStore, StateVector

ACTIONS = ActionTable()


def make_repo(batch_size=8, window=500, filter_on=True, gst_capacity=1024):
    store = QVStore()
    eq = EvaluationQueue(16, RewardScheme())
    cfg = CoordConfig(gst_capacity=gst_capacity, window_cycles=window,
                      batch_size=batch_size, filter_prefetches=filter_on)
    return SharedRepository(store, eq, cfg, LearnParams())


def state(core=0, pc=7):
    return StateVector(pc, 1, 1, 0, 0, core)


# -- global state table ------------------------------------------------------------


def test_ring_overwrites_oldest():
    gst = GlobalStateTable(4)
    for i in range(5):
        gst.record(pc=i, line_addr=100 + i, core_id=0, cycle=i)
    assert len(gst) == 4
    lines = [e.line_addr for e in gst.entries()]
    assert lines == [101, 102, 103, 104]
    assert gst.lookup(100) is None
    assert gst.lookup(104).timestamp_cycle == 4


def test_lookup_returns_core_and_cycle():
    gst = GlobalStateTable(8)
    gst.record(pc=0x40, line_addr=55, core_id=3, cycle=123)
    hit = gst.lookup(55)
    assert (hit.core_id, hit.timestamp_cycle) == (3, 123)


def test_same_line_two_cores_both_retained():
    gst = GlobalStateTable(8)
    gst.record(0x1, 55, core_id=0, cycle=10)
    gst.record(0x1, 55, core_id=1, cycle=11)
    assert len(gst) == 2  # per-core provenance, no dedup
    assert gst.lookup(55).core_id == 1  # newest wins the index


def test_ring_eviction_keeps_newer_index_entry():
    gst = GlobalStateTable(2)
    gst.record(0x1, 55, 0, 1)
    gst.record(0x1, 55, 1, 2)
    gst.record(0x1, 77, 0, 3)  # evicts the cycle-1 record for 55
    assert gst.lookup(55).timestamp_cycle == 2


def test_recent_within_window():
    gst = GlobalStateTable(8)
    gst.record(0x1, 55, 0, 1000)
    assert gst.recent_within(55, 1400, 500)
    assert not gst.recent_within(55, 1600, 500)
    assert not gst.recent_within(56, 1000, 500)


# -- redundancy filter ---------------------------------------------------------------


def test_filter_reasons_in_priority_order():
    repo = make_repo()
    resident = {77}
    probe = resident.__contains__

    ok, reason = repo.filter_redundant(77, 0, 100, probe)
    assert (ok, reason) == (False, "in_cache")

    repo.note_issued(88, 0, 100)
    ok, reason = repo.filter_redundant(88, 1, 100, probe)
    assert (ok, reason) == (False, "in_flight")

    repo.gst.record(0x1, 99, 2, 100)
    ok, reason = repo.filter_redundant(99, 0, 150, probe)
    assert (ok, reason) == (False, "cross_core_window")

    ok, reason = repo.filter_redundant(123, 0, 100, probe)
    assert (ok, reason) == (True, None)
    assert repo.suppressed == {"in_cache": 1, "in_flight": 1, "cross_core_window": 1}


def test_same_cycle_cross_core_duplicate_suppressed_as_inflight():
    # two cores pick the same candidate line in the same cycle: the first
    # issues, the second is stopped by the in-flight set
    repo = make_repo()
    probe = lambda line: False
    ok, _ = repo.filter_redundant(16, 0, 1000, probe)
    assert ok
    repo.note_issued(16, 0, 1000)
    ok, reason = repo.filter_redundant(16, 1, 1000, probe)
    assert (ok, reason) == (False, "in_flight")


def test_own_recent_touch_is_not_cross_core():
    # the window reason is strictly cross-core: a core's own recent access
    # to the candidate line does not suppress
    repo = make_repo()
    probe = lambda line: False
    repo.gst.record(0x1, 99, core_id=0, cycle=100)
    ok, reason = repo.filter_redundant(99, 0, 150, probe)
    assert (ok, reason) == (True, None)
    ok, reason = repo.filter_redundant(99, 1, 150, probe)
    assert (ok, reason) == (False, "cross_core_window")


def test_zero_window_disables_history_check():
    repo = make_repo(window=0)
    probe = lambda line: False
    repo.gst.record(0x1, 99, 2, 100)
    ok, reason = repo.filter_redundant(99, 0, 100, probe)
    assert (ok, reason) == (True, None)


def test_filter_off_passes_everything():
    repo = make_repo(filter_on=False)
    probe = lambda line: True  # everything resident
    ok, reason = repo.filter_redundant(1, 0, 0, probe)
    assert (ok, reason) == (True, None)
    assert sum(repo.suppressed.values()) == 0


def test_fill_clears_inflight():
    repo = make_repo()
    repo.note_issued(5, 0, 10)
    assert 5 in repo.inflight
    repo.note_filled(5)
    assert 5 not in repo.inflight


# -- batched updates -----------------------------------------------------------------


def update_args(core, r):
    return (state(core), ACTIONS.action(1), r, state(core), ACTIONS.action(1))


def test_batch_commits_when_full():
    repo = make_repo(batch_size=3)
    assert repo.enqueue_update(update_args(0, 1.0)) == 0
    assert repo.enqueue_update(update_args(0, 1.0)) == 0
    assert repo.enqueue_update(update_args(0, 1.0)) == 3  # auto-commit at size
    assert repo.pending_updates == []


def test_force_commit_flushes_partial_batch():
    repo = make_repo(batch_size=10)
    for _ in range(4):
        repo.enqueue_update(update_args(0, 2.0))
    assert batch_commit(repo, force=False) == 0
    assert batch_commit(repo, force=True) == 4
    assert repo.pending_updates == []


def test_batch_size_one_equals_immediate():
    # applying through a size-1 batch must produce a bit-equal table
    rng = random.Random(7)
    direct = QVStore()
    params = LearnParams()
    repo = make_repo(batch_size=1)
    from crlsim.rl import sarsa_update

    for _ in range(300):
        s = state(core=rng.randrange(4), pc=rng.randrange(50))
        s2 = state(core=rng.randrange(4), pc=rng.randrange(50))
        a = ACTIONS.action(rng.randrange(16))
        a2 = ACTIONS.action(rng.randrange(16))
        r = rng.uniform(-14, 20)
        sarsa_update(direct, s, a, r, s2, a2, params)
        applied = repo.enqueue_update((s, a, r, s2, a2))
        assert applied == 1
    assert (repo.store.q == direct.q).all()


def test_pending_never_exceeds_batch_size():
    repo = make_repo(batch_size=5)
    for i in range(23):
        repo.enqueue_update(update_args(0, float(i)))
        assert len(repo.pending_updates) < 5
    batch_commit(repo, force=True)
    assert repo.pending_updates == []


def test_coord_config_validation():
    with pytest.raises(ValueError):
        CoordConfig(gst_capacity=0)
    with pytest.raises(ValueError):
        CoordConfig(batch_size=0)
    with pytest.raises(ValueError):
        CoordConfig(window_cycles=-1)
