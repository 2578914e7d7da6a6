"""Simulation engine: drives per-core trace streams through the memory
hierarchy, one record per core per turn, and hosts the prefetchers.

Each core keeps its own cycle counter (one cycle per instruction plus
blocking demand-miss stalls); shared structures are stamped with the issuing
core's clock. The RL prefetchers run the decision flow on every L1/L2 demand
miss: reward lookup in the evaluation queue, state extraction, Q lookup and
action selection, prefetch issue, queue insert, with Q updates fired by
queue evictions and filled bits set as prefetch fills complete.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace

from . import rl
from .coord import CoordConfig, SharedRepository, batch_commit
from .evalq import EQEntry, EvaluationQueue, RewardScheme, update_tuple
from .memhier import DRAM, L1, L2, LLC, AccessResult, MemHierConfig, MemoryHierarchy
from .metrics import CoreCounters, RunMetrics
from .trace import PAGE_BYTES, TraceRecord

PREFETCHER_KINDS = ("none", "next_line", "stride", "pythia_percore", "pythia_crl")
RL_KINDS = ("pythia_percore", "pythia_crl")


class SimulationError(RuntimeError):
    pass


class TraceTruncationError(SimulationError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_cores: int = 1
    warmup_events: int = 50_000
    sim_events: int = 200_000
    prefetcher: str = "none"
    seed: int = 0
    memhier: MemHierConfig = MemHierConfig()
    rl: rl.RlConfig = rl.RlConfig()
    eq_capacity: int = 256
    reward: RewardScheme = RewardScheme()
    coord: CoordConfig = CoordConfig()
    issue_on_l2_hit: bool = False  # act (not just reward-check) on L2 hits too
    execution: str = "deterministic"  # or "threaded"
    collect_request_log: bool = False

    def __post_init__(self):
        if self.n_cores < 1:
            raise ValueError("n_cores must be >= 1")
        if self.warmup_events <= 0 or self.sim_events <= 0:
            raise ValueError("warmup_events and sim_events must be > 0")
        if self.prefetcher not in PREFETCHER_KINDS:
            raise ValueError(f"unknown prefetcher kind {self.prefetcher!r}")
        if self.eq_capacity < 1:
            raise ValueError("eq_capacity must be >= 1")
        if self.execution not in ("deterministic", "threaded"):
            raise ValueError(f"unknown execution mode {self.execution!r}")

    def with_seed(self) -> rl.LearnParams:
        return replace(self.rl.params, rng_seed=self.seed)


# -- simple table prefetchers --------------------------------------------------


class NextLinePrefetcher:
    """Proposes the line after every demanded line."""

    def on_demand_access(self, pc: int, line: int, result: AccessResult, cycle: int) -> list[int]:
        return [line + 1]

    def on_fill(self, line: int, cycle: int) -> None:
        pass


class StridePrefetcher:
    """Per-PC stride detector: proposes line+delta once the same delta repeats."""

    def __init__(self):
        self._table: dict[int, tuple[int, int]] = {}  # pc -> (last_line, last_delta)

    def on_demand_access(self, pc: int, line: int, result: AccessResult, cycle: int) -> list[int]:
        last = self._table.get(pc)
        proposals: list[int] = []
        if last is None:
            self._table[pc] = (line, 0)
            return proposals
        last_line, last_delta = last
        delta = line - last_line
        if delta != 0 and delta == last_delta:
            proposals.append(line + delta)
        self._table[pc] = (line, delta)
        return proposals

    def on_fill(self, line: int, cycle: int) -> None:
        pass


# -- RL prefetch agent ---------------------------------------------------------


class PythiaAgent:
    """One core's RL prefetch decision flow.

    The same class serves the per-core and the coordinated variant; the
    latter passes a SharedRepository, which routes Q updates through the
    batch buffer and candidate prefetches through the redundancy filter.
    """

    def __init__(self, core_id: int, store: rl.QVStore, eq: EvaluationQueue,
                 actions: rl.ActionTable, params: rl.LearnParams,
                 scheme: RewardScheme, services: "HierarchyServices",
                 decisions: dict, counters: dict, lines_per_page: int,
                 repo: SharedRepository | None = None,
                 issue_on_l2_hit: bool = False, trace=None):
        self.core_id = core_id
        self.store = store
        self.eq = eq
        self.actions = actions
        self.params = params
        self.scheme = scheme
        self.services = services
        self.decisions = decisions
        self.counters = counters
        self.lines_per_page = lines_per_page
        self.repo = repo
        self.issue_on_l2_hit = issue_on_l2_hit
        self.trace = trace
        self.ctx = rl.CoreContext(core_id)
        self.rng = rl.agent_rng(params.rng_seed, core_id)

    def on_demand_access(self, pc: int, line: int, result: AccessResult, cycle: int) -> None:
        level = result.serviced_level
        l1_miss = level != L1
        l2_miss = level == LLC or level == DRAM
        trace = self.trace
        if l1_miss:
            # an earlier action may have prefetched this very line
            matched = self.eq.demand_lookup(line)
            if trace is not None:
                trace(("eq_lookup", self.core_id, line,
                       matched[1] if matched is not None else None))
        self.ctx.note_access(pc, line, near_hit=not l2_miss)
        if not (l2_miss or (l1_miss and self.issue_on_l2_hit)):
            return
        state = rl.extract_state(self.ctx)
        if trace is not None:
            trace(("extract_state", self.core_id))
        action = rl.select_action(self.store, state, self.params, self.rng, self.actions)
        if trace is not None:
            trace(("select_action", self.core_id, action.delta_lines))
        self.decisions[self.core_id] = (state, action)
        entry = self._build_and_issue(state, action, pc, line, cycle)
        evicted = self.eq.insert(entry)
        if trace is not None:
            trace(("eq_insert", self.core_id, entry.pf_addr, entry.reward))
        if evicted is not None:
            self._apply_update(evicted)

    def _build_and_issue(self, state, action, pc, line, cycle) -> EQEntry:
        delta = action.delta_lines
        if delta == 0:
            self.counters["no_prefetch_actions"] += 1
            reward = self.scheme.no_prefetch_reward(self.services.pressure(cycle))
            return EQEntry(state, action, None, self.core_id, cycle, reward=reward)
        target = line + delta
        if target < 0 or target // self.lines_per_page != line // self.lines_per_page:
            # out-of-page actions degrade to a no-prefetch insert with an
            # instant reward; nothing reaches the memory side
            self.counters["out_of_page_actions"] += 1
            reward = self.scheme.no_prefetch_reward(self.services.pressure(cycle))
            return EQEntry(state, action, None, self.core_id, cycle, reward=reward)
        self.counters["prefetches_issued"] += 1
        issue = True
        if self.repo is not None and self.repo.cfg.filter_prefetches:
            issue, reason = self.repo.filter_redundant(
                target, self.core_id, cycle,
                lambda ln: self.services.resident(self.core_id, ln))
            if self.trace is not None:
                self.trace(("filter", self.core_id, target, issue, reason))
        if issue:
            self.services.issue(self.core_id, target, cycle, pc)
        return EQEntry(state, action, target, self.core_id, cycle)

    def _apply_update(self, evicted: EQEntry) -> None:
        s, a, r, s_next, a_next = update_tuple(
            evicted, self.decisions.get(evicted.core_id))
        if self.repo is not None:
            self.repo.enqueue_update((s, a, r, s_next, a_next))
        else:
            rl.sarsa_update(self.store, s, a, r, s_next, a_next, self.params)
            if self.trace is not None:
                self.trace(("qv_update", r))

    def on_fill(self, line: int, cycle: int) -> None:
        n = self.eq.mark_filled(line)
        if self.trace is not None:
            self.trace(("mark_filled", line, n))
        if self.repo is not None:
            self.repo.note_filled(line)


# -- prefetcher bank -----------------------------------------------------------


def _policy_counters() -> dict[str, int]:
    return {
        "prefetches_issued": 0,
        "no_prefetch_actions": 0,
        "out_of_page_actions": 0,
    }


class PrefetcherBank:
    """Per-core prefetcher instances plus any shared coordination state."""

    def __init__(self, kind: str, cores: list, shared: SharedRepository | None = None):
        self.kind = kind
        self.cores = cores
        self.shared = shared
        self.counters = _policy_counters()

    def on_fill(self, line: int, core_id: int, cycle: int) -> None:
        if self.cores:
            self.cores[core_id].on_fill(line, cycle)

    def drain_eqs(self) -> None:
        if self.kind == "pythia_crl":
            for entry in self.shared.eq.drain():
                self.cores[0]._apply_update(entry)
        elif self.kind == "pythia_percore":
            for agent in self.cores:
                for entry in agent.eq.drain():
                    agent._apply_update(entry)

    def reset_counters(self) -> None:
        # zero in place: the per-core agents hold references to this dict
        for key in self.counters:
            self.counters[key] = 0
        if self.shared is not None:
            self.shared.reset_counters()
        for core in self.cores:
            eq = getattr(core, "eq", None)
            if eq is not None:
                for key in eq.counters:
                    eq.counters[key] = 0


class HierarchyServices:
    """The memory-side seam handed to RL agents: prefetch dispatch, residency
    probes for the redundancy filter, and the DRAM pressure signal."""

    def __init__(self, sim: "Simulation"):
        self._sim = sim

    def issue(self, core_id: int, line: int, cycle: int, pc: int) -> str:
        return self._sim._dispatch_prefetch(core_id, line, cycle, pc)

    def resident(self, core_id: int, line: int) -> bool:
        return self._sim.hier._target_cache(core_id).contains(line)

    def pressure(self, cycle: int) -> float:
        return self._sim.hier.dram.backlog_fraction(cycle)


def make_prefetcher(kind: str, config: SimConfig, services: HierarchyServices | None = None,
                    trace=None) -> PrefetcherBank:
    """Build the per-core prefetcher instances for one simulation."""
    if kind not in PREFETCHER_KINDS:
        raise ValueError(f"unknown prefetcher kind {kind!r}")
    if kind == "none":
        return PrefetcherBank(kind, [])
    if kind == "next_line":
        return PrefetcherBank(kind, [NextLinePrefetcher() for _ in range(config.n_cores)])
    if kind == "stride":
        return PrefetcherBank(kind, [StridePrefetcher() for _ in range(config.n_cores)])

    params = config.with_seed()
    actions = rl.ActionTable(config.rl.action_deltas)
    scheme = config.reward
    lines_per_page = PAGE_BYTES // config.memhier.line_bytes
    regime = "shared" if config.execution == "threaded" else "exclusive"
    bank: PrefetcherBank

    if kind == "pythia_percore":
        decisions: dict = {}
        agents = []
        bank = PrefetcherBank(kind, agents)
        for core in range(config.n_cores):
            store = rl.QVStore(config.rl.geometry, config.rl.quantized, regime="exclusive")
            eq = EvaluationQueue(config.eq_capacity, scheme, regime="exclusive")
            agents.append(PythiaAgent(
                core, store, eq, actions, params, scheme, services,
                decisions, bank.counters, lines_per_page,
                issue_on_l2_hit=config.issue_on_l2_hit, trace=trace))
        return bank

    # pythia_crl: one shared store/queue/repository for all cores
    store = rl.QVStore(config.rl.geometry, config.rl.quantized, regime=regime)
    eq = EvaluationQueue(config.eq_capacity, scheme, regime=regime)
    on_update = (lambda r: trace(("qv_update", r))) if trace is not None else None
    repo = SharedRepository(store, eq, config.coord, params, regime=regime,
                            on_update=on_update)
    agents = []
    bank = PrefetcherBank(kind, agents, shared=repo)
    for core in range(config.n_cores):
        agents.append(PythiaAgent(
            core, store, eq, actions, params, scheme, services,
            repo.last_decision, bank.counters, lines_per_page, repo=repo,
            issue_on_l2_hit=config.issue_on_l2_hit, trace=trace))
    return bank


# -- the simulation ------------------------------------------------------------


def _system_counters() -> dict[str, int]:
    return {
        "prefetch_dispatches": 0,
        "prefetch_covered_hits": 0,
    }


class Simulation:
    def __init__(self, config: SimConfig, traces: list[list[TraceRecord]], trace_log=None):
        if len(traces) != config.n_cores:
            raise SimulationError(
                f"expected {config.n_cores} per-core traces, got {len(traces)}")
        needed = config.warmup_events + config.sim_events
        for core, t in enumerate(traces):
            if len(t) < needed:
                raise TraceTruncationError(
                    f"core {core}: trace has {len(t)} records, need {needed}")
        self.config = config
        self.traces = traces
        self.trace_fn = trace_log.append if trace_log is not None else None
        self.hier = MemoryHierarchy(config.memhier, config.n_cores)
        self.services = HierarchyServices(self)
        self.bank = make_prefetcher(config.prefetcher, config, self.services, self.trace_fn)
        self.hier.fill_listener = self.bank.on_fill
        self.repo = self.bank.shared
        self.clocks = [0] * config.n_cores
        self.cycle_offsets = [0] * config.n_cores
        self.core_counters = [CoreCounters() for _ in range(config.n_cores)]
        self.sys_counters = _system_counters()
        self.request_log: list[tuple[int, int, int]] | None = (
            [] if config.collect_request_log else None)
        self._hier_lock = threading.Lock() if config.execution == "threaded" else None

    # -- per-record step -----------------------------------------------------

    def _dispatch_prefetch(self, core_id: int, line: int, cycle: int, pc: int) -> str:
        self.sys_counters["prefetch_dispatches"] += 1
        if self.request_log is not None:
            self.request_log.append((cycle, core_id, line))
        res = self.hier.prefetch_fill(core_id, line, cycle)
        status = res["status"]
        if self.trace_fn is not None:
            self.trace_fn(("issue_prefetch", core_id, line, status))
        if self.repo is not None:
            if status == "scheduled":
                self.repo.note_issued(line, core_id, cycle)
            self.repo.gst.record(pc, line, core_id, cycle)
        return status

    def _step_core(self, core: int, rec: TraceRecord) -> None:
        clock = self.clocks[core] + 1
        result = self.hier.demand_access(core, rec.addr, clock)
        clock += result.stall_cycles
        self.clocks[core] = clock

        cc = self.core_counters[core]
        cc.instructions += 1
        level = result.serviced_level
        if level == L1:
            cc.l1_hits += 1
        else:
            cc.l1_misses += 1
            if level == L2:
                cc.l2_hits += 1
            else:
                cc.l2_misses += 1
                if level == LLC:
                    cc.llc_hits += 1
                else:
                    cc.llc_misses += 1
        if result.was_prefetch_covered:
            self.sys_counters["prefetch_covered_hits"] += 1

        line = self.hier.line_of(rec.addr)
        if self.repo is not None:
            self.repo.gst.record(rec.pc, line, core, clock)

        kind = self.config.prefetcher
        if kind in RL_KINDS:
            self.bank.cores[core].on_demand_access(rec.pc, line, result, clock)
        elif kind != "none":
            self._step_simple(core, rec.pc, line, result, clock)

    def _step_simple(self, core: int, pc: int, line: int, result: AccessResult, cycle: int) -> None:
        lines_per_page = PAGE_BYTES // self.config.memhier.line_bytes
        for target in self.bank.cores[core].on_demand_access(pc, line, result, cycle):
            if target < 0 or target // lines_per_page != line // lines_per_page:
                self.bank.counters["out_of_page_actions"] += 1
                continue
            self.bank.counters["prefetches_issued"] += 1
            self._dispatch_prefetch(core, target, cycle, pc)

    # -- warmup / finalisation -------------------------------------------------

    def _reset_after_warmup(self) -> None:
        for core in range(self.config.n_cores):
            self.core_counters[core] = CoreCounters()
        self.cycle_offsets = list(self.clocks)
        self.hier.reset_counters()
        self.sys_counters = _system_counters()
        self.bank.reset_counters()
        if self.request_log is not None:
            self.request_log.clear()

    def _finalize(self) -> RunMetrics:
        cfg = self.config
        self.hier.apply_fills_due(max(self.clocks))
        inflight_at_end = self.hier.pending_count()
        self.bank.drain_eqs()
        if self.repo is not None:
            batch_commit(self.repo, force=True)
        flushed = self.hier.flush_prefetched_residue()

        hc = self.hier.counters
        suppressed = dict.fromkeys(("in_cache", "in_flight", "cross_core_window"), 0)
        if self.repo is not None:
            for reason, n in self.repo.suppressed.items():
                suppressed[reason] += n
        suppressed["in_flight"] += hc["mshr_merged"]

        cores = []
        for c in range(cfg.n_cores):
            cc = self.core_counters[c]
            cc.cycles = self.clocks[c] - self.cycle_offsets[c]
            cores.append(cc)

        return RunMetrics(
            run_id="",
            prefetcher=cfg.prefetcher,
            n_cores=cfg.n_cores,
            seed=cfg.seed,
            cores=cores,
            prefetches_issued=self.bank.counters["prefetches_issued"],
            prefetch_dispatches=self.sys_counters["prefetch_dispatches"],
            prefetch_fills=hc["prefetch_fills"],
            prefetch_covered_hits=self.sys_counters["prefetch_covered_hits"],
            useless_prefetch_evictions=hc["useless_evictions"] + flushed,
            suppressed_redundant=suppressed,
            duplicate_in_cache=hc["duplicate_in_cache"],
            demand_merged=hc["demand_merged"],
            no_prefetch_actions=self.bank.counters["no_prefetch_actions"],
            out_of_page_actions=self.bank.counters["out_of_page_actions"],
            dram_requests=self.hier.dram.requests,
            dram_busy_cycles=self.hier.dram.busy_cycles,
            inflight_at_end=inflight_at_end,
        )

    # -- drivers ---------------------------------------------------------------

    def run(self) -> RunMetrics:
        if self.config.execution == "threaded":
            return self._run_threaded()
        cfg = self.config
        total = cfg.warmup_events + cfg.sim_events
        traces = self.traces
        for idx in range(total):
            if idx == cfg.warmup_events:
                self._reset_after_warmup()
            for core in range(cfg.n_cores):
                self._step_core(core, traces[core][idx])
        return self._finalize()

    def _run_threaded(self) -> RunMetrics:
        """Concurrent mode: one worker per core over the shared structures.

        Hierarchy timing stays serialised behind one lock; the shared store,
        queue and repository rely on their own atomic-operation regime.
        Results are not bit-reproducible across runs; only invariants hold.
        """
        cfg = self.config
        total = cfg.warmup_events + cfg.sim_events
        barrier = threading.Barrier(cfg.n_cores)
        errors: list[BaseException] = []

        def worker(core: int):
            try:
                trace = self.traces[core]
                for idx in range(total):
                    if idx == cfg.warmup_events:
                        barrier.wait()
                        if core == 0:
                            self._reset_after_warmup()
                        barrier.wait()
                    with self._hier_lock:
                        self._step_core(core, trace[idx])
            except BaseException as exc:  # surfaced after join
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(c,)) for c in range(cfg.n_cores)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        return self._finalize()


def run(config: SimConfig, traces: list[list[TraceRecord]], trace_log=None) -> RunMetrics:
    """Run one simulation; deterministic for a fixed (config, traces)."""
    return Simulation(config, traces, trace_log).run()
