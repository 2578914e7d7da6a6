import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlsim.rl import (
    DEFAULT_ACTION_DELTAS,
    STRIDE_CONST_POS,
    STRIDE_NONE,
    ActionTable,
    CoreContext,
    LearnParams,
    QVStore,
    QVStoreGeometry,
    StateVector,
    extract_state,
    plane_index,
    sarsa_update,
    select_action,
    storage_bits,
)

from reference_models import ScalarQOracle


def rand_state(rng: random.Random) -> StateVector:
    return StateVector(
        pc_sig=rng.randrange(0, 1 << 20),
        delta_sig=rng.randrange(-64, 65),
        stride_sig=rng.randrange(0, 4),
        hitmiss_sig=rng.randrange(0, 2),
        reuse_sig=rng.randrange(0, 16),
        core_id=rng.randrange(0, 8),
    )


# -- storage model -------------------------------------------------------------


def test_storage_default_geometry_golden():
    bits = storage_bits()
    assert bits["qvstore_bits"] == 2 * 3 * 128 * 16 * 16 == 196_608
    assert bits["qvstore_bits"] // 1024 == 192
    assert bits["eq_bits"] == 256 * 52 == 13_312
    assert bits["eq_bits"] // 1024 == 13
    assert bits["eq_entry_bits"] == 52
    assert bits["total_bits"] // 1024 == 205


def test_storage_scales_linearly():
    doubled = storage_bits(QVStoreGeometry(feature_dim=256))
    assert doubled["qvstore_bits"] == 2 * storage_bits()["qvstore_bits"]
    assert storage_bits(eq_entries=0)["eq_bits"] == 0


# -- plane hashing -------------------------------------------------------------


def test_plane_index_deterministic_and_in_range():
    g = QVStoreGeometry()
    rng = random.Random(0)
    for _ in range(10_000):
        s = rand_state(rng)
        for v in range(2):
            for p in range(3):
                idx = plane_index(s, v, p, g)
                assert idx == plane_index(s, v, p, g)
                assert 0 <= idx < g.feature_dim


def test_plane_zero_depends_only_on_pc():
    # vault 0 plane 0 hashes the PC signature alone
    g = QVStoreGeometry()
    a = StateVector(123, 5, 1, 0, 2, 0)
    b = StateVector(123, -9, 3, 1, 7, 4)
    assert plane_index(a, 0, 0, g) == plane_index(b, 0, 0, g)
    c = StateVector(124, 5, 1, 0, 2, 0)
    # different pc should (for this pair) land elsewhere
    assert plane_index(a, 0, 0, g) != plane_index(c, 0, 0, g)


def test_core_id_plane_separates_cores():
    g = QVStoreGeometry()
    a = StateVector(123, 5, 1, 0, 2, core_id=0)
    b = StateVector(123, 5, 1, 0, 2, core_id=2)
    same = [plane_index(a, v, p, g) == plane_index(b, v, p, g)
            for v in range(2) for p in range(3)]
    # only the (pc, core) plane may differ
    assert same[:5] == [True] * 5
    assert not same[5]


# -- q aggregation -------------------------------------------------------------


def test_q_value_zero_store():
    store = QVStore()
    s = rand_state(random.Random(1))
    assert all(store.q_value(s, a) == 0.0 for a in range(16))


def test_q_value_single_cell():
    store = QVStore()
    s = rand_state(random.Random(2))
    v, p, i = store.cells(s)[0]
    store.q[v, p, i, 9] = 3.5
    assert store.q_value(s, 9) == pytest.approx(3.5)


def test_q_value_constant_store_sums_planes():
    store = QVStore()
    store.q[:] = 0.25
    s = rand_state(random.Random(3))
    assert store.q_value(s, 4) == pytest.approx(6 * 0.25)


# -- action selection ------------------------------------------------------------


def test_greedy_picks_max():
    store = QVStore()
    s = rand_state(random.Random(4))
    params = LearnParams(epsilon=0.0)
    actions = ActionTable()
    for v, p, i in store.cells(s):
        store.q[v, p, i, 9] = 5.0 / 6.0
    chosen = select_action(store, s, params, random.Random(0), actions)
    assert chosen.action_id == 9


def test_greedy_tie_breaks_lowest_id():
    store = QVStore()
    s = rand_state(random.Random(5))
    chosen = select_action(store, s, LearnParams(epsilon=0.0), random.Random(0), ActionTable())
    assert chosen.action_id == 0


def test_greedy_pure_function_of_store_and_state():
    store = QVStore()
    s = rand_state(random.Random(6))
    params = LearnParams(epsilon=0.0)
    actions = ActionTable()
    a = select_action(store, s, params, random.Random(1), actions)
    b = select_action(store, s, params, random.Random(999), actions)
    assert a == b


def test_epsilon_one_is_uniform_within_3_sigma():
    store = QVStore()
    s = rand_state(random.Random(7))
    params = LearnParams(epsilon=1.0)
    actions = ActionTable()
    rng = random.Random(123)
    n = 100_000
    counts = [0] * 16
    for _ in range(n):
        counts[select_action(store, s, params, rng, actions).action_id] += 1
    p = 1 / 16
    sigma = math.sqrt(n * p * (1 - p))
    for c in counts:
        assert abs(c - n * p) <= 3 * sigma


def test_argmax_invariant_under_constant_shift():
    rng = random.Random(8)
    store = QVStore()
    store.q[:] = np.asarray(rng.random()) * 0  # keep zeros; fill randomly below
    flat = np.random.default_rng(0).normal(size=store.q.shape)
    store.q[:] = flat
    s = rand_state(rng)
    before = select_action(store, s, LearnParams(epsilon=0.0), random.Random(0), ActionTable())
    store.q += 7.5
    after = select_action(store, s, LearnParams(epsilon=0.0), random.Random(0), ActionTable())
    assert before == after


# -- SARSA updates ----------------------------------------------------------------


def test_update_direct_substitution():
    store = QVStore()
    params = LearnParams(alpha=0.5, gamma=0.5)
    rng = random.Random(9)
    s, s2 = rand_state(rng), rand_state(rng)
    actions = ActionTable()
    t = sarsa_update(store, s, actions.action(3), 10.0, s2, actions.action(0), params)
    # old=0, future=0: target = 0 + 0.5 * (10 + 0.5*0 - 0) = 5
    assert t == pytest.approx(5.0)
    assert store.q_value(s, 3) == pytest.approx(5.0, abs=1e-9)


def test_update_contracts_toward_reward():
    store = QVStore()
    params = LearnParams(alpha=0.25, gamma=0.0)
    rng = random.Random(10)
    s = rand_state(rng)
    actions = ActionTable()
    act = actions.action(2)
    store.write_target(s, 2, 8.0)
    t = sarsa_update(store, s, act, 0.0, rand_state(rng), actions.action(5), params)
    assert t == pytest.approx(6.0)
    assert store.q_value(s, 2) == pytest.approx(6.0, abs=1e-9)


def test_update_with_no_successor_bootstraps_zero():
    store = QVStore()
    params = LearnParams(alpha=1.0, gamma=0.9)
    s = rand_state(random.Random(11))
    t = sarsa_update(store, s, ActionTable().action(1), 4.0, None, None, params)
    assert t == pytest.approx(4.0)


def test_thousand_step_tape_matches_scalar_oracle():
    geometry = QVStoreGeometry()
    store = QVStore(geometry)
    oracle = ScalarQOracle(store.cells, geometry.action_dim)
    params = LearnParams(alpha=0.1, gamma=0.5)
    actions = ActionTable()
    rng = random.Random(4242)
    states = [rand_state(rng) for _ in range(40)]
    for _ in range(1000):
        s = rng.choice(states)
        s2 = rng.choice(states)
        a = rng.randrange(16)
        a2 = rng.randrange(16)
        r = rng.uniform(-14, 20)
        t_impl = sarsa_update(store, s, actions.action(a), r, s2, actions.action(a2), params)
        t_ref = oracle.update(s, a, r, s2, a2, params.alpha, params.gamma)
        assert t_impl == pytest.approx(t_ref, abs=1e-9)
    # final tables agree cell by cell
    for (v, p, i, a), q_ref in oracle.q.items():
        assert store.q[v, p, i, a] == pytest.approx(q_ref, abs=1e-9)


def test_fixed_point_convergence():
    store = QVStore()
    params = LearnParams(alpha=0.1, gamma=0.5)
    s = rand_state(random.Random(12))
    act = ActionTable().action(7)
    r = 10.0
    target = r / (1 - params.gamma)
    q = None
    for i in range(100_000):
        q = sarsa_update(store, s, act, r, s, act, params)
        if abs(q - target) < 1e-6:
            break
    assert abs(q - target) < 1e-6


def test_update_lands_exactly_on_target():
    store = QVStore()
    params = LearnParams(alpha=0.3, gamma=0.7)
    rng = random.Random(13)
    actions = ActionTable()
    for _ in range(200):
        s, s2 = rand_state(rng), rand_state(rng)
        a, a2 = rng.randrange(16), rng.randrange(16)
        t = sarsa_update(store, s, actions.action(a), rng.uniform(-20, 20),
                         s2, actions.action(a2), params)
        assert store.q_value(s, a) == pytest.approx(t, abs=1e-9)


def test_quantized_store_snaps_to_grid():
    store = QVStore(quantized=True)
    params = LearnParams(alpha=0.37, gamma=0.6)
    rng = random.Random(14)
    actions = ActionTable()
    step = store.fixed_step
    for _ in range(500):
        s, s2 = rand_state(rng), rand_state(rng)
        a = rng.randrange(16)
        sarsa_update(store, s, actions.action(a), rng.uniform(-20, 20),
                     s2, actions.action(rng.randrange(16)), params)
    nz = store.q[store.q != 0]
    assert len(nz) > 0
    # every stored cell sits on the 16-bit fixed-point grid, inside its range
    assert np.allclose(np.round(nz / step) * step, nz, atol=1e-12)
    assert nz.max() <= store.fixed_max and nz.min() >= store.fixed_min


def test_quantized_cell_write_within_half_step():
    store = QVStore(quantized=True)
    s = rand_state(random.Random(15))
    store.write_target(s, 3, 1.2345)
    # each cell is the nearest-grid snap of its real share
    share = 1.2345 / 6
    for v, p, i in store.cells(s):
        assert abs(store.q[v, p, i, 3] - share) <= store.fixed_step / 2 + 1e-12


# -- state extraction --------------------------------------------------------------


def test_first_access_has_no_history():
    ctx = CoreContext(0)
    ctx.note_access(0x400100, 10, near_hit=False)
    s = extract_state(ctx)
    assert s.delta_sig == 0
    assert s.stride_sig == STRIDE_NONE
    assert s.reuse_sig == 0  # first touch


def test_constant_stride_detected():
    ctx = CoreContext(0)
    for line in (10, 12, 14):
        ctx.note_access(0x400100, line, near_hit=False)
    s = extract_state(ctx)
    assert s.delta_sig == 2
    assert s.stride_sig == STRIDE_CONST_POS


def test_same_context_differs_only_in_core_id():
    def build(core):
        ctx = CoreContext(core)
        for line, hit in ((5, False), (9, True), (13, False)):
            ctx.note_access(0x77AA00, line, near_hit=hit)
        return extract_state(ctx)

    a, b = build(0), build(2)
    assert a.core_id == 0 and b.core_id == 2
    assert (a.pc_sig, a.delta_sig, a.stride_sig, a.hitmiss_sig, a.reuse_sig) == \
           (b.pc_sig, b.delta_sig, b.stride_sig, b.hitmiss_sig, b.reuse_sig)


def test_hitmiss_sig_reflects_previous_access():
    ctx = CoreContext(0)
    ctx.note_access(0x1, 1, near_hit=True)
    ctx.note_access(0x1, 2, near_hit=False)
    assert extract_state(ctx).hitmiss_sig == 1  # previous access hit
    ctx.note_access(0x1, 3, near_hit=False)
    assert extract_state(ctx).hitmiss_sig == 0


def test_reuse_bucket_powers_of_two():
    ctx = CoreContext(0)
    ctx.note_access(0x1, 100, near_hit=False)
    for line in range(5):
        ctx.note_access(0x1, line, near_hit=False)
    ctx.note_access(0x1, 100, near_hit=False)  # reuse distance 6
    assert extract_state(ctx).reuse_sig == (6).bit_length()


# -- misc validation ---------------------------------------------------------------


def test_action_table_bijection():
    table = ActionTable()
    assert len(table) == 16
    assert table.deltas == DEFAULT_ACTION_DELTAS
    seen = {table.action(i).delta_lines for i in range(16)}
    assert len(seen) == 16
    with pytest.raises(ValueError):
        ActionTable((0, 1, 1))
    with pytest.raises(ValueError):
        ActionTable((1, 2))


def test_learn_params_validation():
    with pytest.raises(ValueError):
        LearnParams(alpha=0.0)
    with pytest.raises(ValueError):
        LearnParams(gamma=1.0)
    with pytest.raises(ValueError):
        LearnParams(epsilon=1.5)


@given(st.integers(min_value=1, max_value=2**62), st.integers(min_value=0, max_value=3))
@settings(max_examples=50, deadline=None)
def test_plane_index_any_geometry_in_range(seed, extra):
    g = QVStoreGeometry(n_vaults=1 + extra, planes_per_vault=2 + extra, feature_dim=96)
    s = rand_state(random.Random(seed))
    for v in range(g.n_vaults):
        for p in range(g.planes_per_vault):
            assert 0 <= plane_index(s, v, p, g) < 96
