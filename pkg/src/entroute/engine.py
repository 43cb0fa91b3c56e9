"""Deterministic discrete-event engine: clock, event queue, memory
bookkeeping, the entanglement lifecycle (generate, store, decay, swap,
deliver or expire), and strategy invocation.

Two interchangeable cores execute the same event machine: a pure-Python
reference (this module) built directly on the dodag/protocols/physics
surfaces, and a compiled twin (entroute._speedcore) selected at import when
available. For a fixed config and seed both produce bit-identical results:
they share one PCG64 stream, draw in the same order, and evaluate float
expressions in the same order.

Event machine conventions:
  - A generated link pair is usable at its creation instant (heralding is
    folded into the attempt period); a swap-merged pair becomes usable after
    classical notification, at swap_time + hop_latency * (hops from the swap
    node to the farther endpoint).
  - Swaps run as-soon-as-possible; when several merges are simultaneously
    ready the leftmost (closest to the source) runs first.
  - A BSM failure or a pair expiry fails the whole path attempt: resources
    release, the request re-enters the pending queue (retry cap applies),
    and for radar-q a localized DODAG update runs first.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import dodag, metrics, physics, protocols, topology
from .protocols import Request, RequestStatus, RoutePath, SchedulerView

try:
    from . import _speedcore

    HAVE_SPEEDCORE = True
except ImportError:  # pure-Python fallback
    _speedcore = None
    HAVE_SPEEDCORE = False

EV_GEN = 0
EV_READY = 1
EV_EXPIRE = 2
EV_PASS = 3
EV_SLOT_START = 4
EV_SLOT_END = 5
EV_SUBMIT = 6
EV_TIMEOUT = 7

STRATEGY_IDS = {"radar-q": 0, "synch-nca": 1, "asynch-root": 2}


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "grid"
    rows: int = 10
    cols: int = 10
    n: int = 100
    avg_degree: float = 4.0

    @property
    def param_a(self):
        return self.rows if self.kind == "grid" else self.n

    @property
    def param_b(self):
        return self.cols if self.kind == "grid" else self.avg_degree

    def to_dict(self) -> dict:
        if self.kind == "grid":
            return {"kind": "grid", "rows": self.rows, "cols": self.cols}
        return {"kind": "random", "n": self.n, "avg_degree": self.avg_degree}

    @classmethod
    def from_dict(cls, data: dict) -> "TopologySpec":
        kind = data.get("kind", "grid")
        if kind == "grid":
            return cls(kind="grid", rows=data.get("rows", 10), cols=data.get("cols", 10))
        return cls(kind="random", n=data.get("n", 100), avg_degree=data.get("avg_degree", 4.0))


@dataclass(frozen=True)
class SimConfig:
    """Full description of one run; identical config + seed => identical output."""

    topology: TopologySpec = TopologySpec()
    strategy: str = "radar-q"
    gen_prob: float = 0.8
    bsm_prob: float = 0.9
    init_fidelity: float = 0.95
    coherence_time: float = math.inf
    decay_scale: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    memory: int = 4
    n_requests: int = 4
    attempt_period: float = 1e-3
    hop_latency: float = 1e-4
    duration: float = 60.0
    warmup: float = 5.0
    request_interval: float = 0.0
    retry_cap: int = 10
    asynch_hold_timeout: float = 0.025
    synch_gen_attempts: int = 3
    synch_overhead: Optional[float] = None
    seed: int = 0
    root: Optional[int] = None
    workload: Optional[tuple[tuple[int, int], ...]] = None
    link_overrides: tuple[tuple[int, int, float, float], ...] = ()
    core: str = "auto"  # auto | python | compiled
    event_log: bool = False
    debug_checks: bool = False

    @property
    def tau(self) -> float:
        return self.decay_scale * self.coherence_time

    @property
    def total_time(self) -> float:
        return self.warmup + self.duration

    def n_nodes(self) -> int:
        t = self.topology
        return t.rows * t.cols if t.kind == "grid" else t.n

    def validate(self) -> list[str]:
        problems = []
        if self.strategy not in protocols.STRATEGY_NAMES:
            problems.append(
                f"unknown strategy {self.strategy!r}; valid: {', '.join(protocols.STRATEGY_NAMES)}"
            )
        t = self.topology
        if t.kind not in ("grid", "random"):
            problems.append(f"unknown topology kind {t.kind!r}; valid: grid, random")
        elif t.kind == "grid" and (t.rows < 1 or t.cols < 1):
            problems.append("grid rows and cols must be >= 1")
        elif t.kind == "random" and t.n < 2:
            problems.append("random topology needs n >= 2")
        for name in ("gen_prob", "bsm_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name} {v} outside [0, 1]")
        if not topology.WERNER_FLOOR <= self.init_fidelity <= 1.0:
            problems.append(f"init_fidelity {self.init_fidelity} outside [0.25, 1]")
        if self.coherence_time <= 0:
            problems.append("coherence_time must be positive")
        if self.decay_scale <= 0:
            problems.append("decay_scale must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            problems.append("alpha and beta must be positive")
        if self.memory < 1:
            problems.append("memory must be >= 1")
        if self.n_requests < 1:
            problems.append("n_requests must be >= 1")
        if self.workload is None and 2 * self.n_requests > self.n_nodes():
            problems.append(
                f"n_requests {self.n_requests} needs {2 * self.n_requests} distinct endpoint "
                f"nodes but the topology has {self.n_nodes()}"
            )
        for name in ("attempt_period", "duration"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if self.hop_latency < 0:
            problems.append("hop_latency must be >= 0")
        if self.warmup < 0:
            problems.append("warmup must be >= 0")
        if self.request_interval < 0:
            problems.append("request_interval must be >= 0")
        if self.retry_cap < 0:
            problems.append("retry_cap must be >= 0")
        if self.asynch_hold_timeout <= 0:
            problems.append("asynch_hold_timeout must be positive")
        if self.synch_gen_attempts < 1:
            problems.append("synch_gen_attempts must be >= 1")
        if self.core not in ("auto", "python", "compiled"):
            problems.append(f"unknown core {self.core!r}; valid: auto, python, compiled")
        if self.workload is not None:
            seen = set()
            for s, d in self.workload:
                if s == d:
                    problems.append(f"workload pair ({s}, {d}) has equal endpoints")
                seen.update((s, d))
            if len(seen) != 2 * len(self.workload):
                problems.append("workload pairs reuse a node")
        return problems


@dataclass
class CoreResult:
    """Raw per-run tallies produced by either engine core."""

    delivered: int
    fidelity_sum: float
    served_by_tenant: list[int]
    failed_by_tenant: list[int]
    fid_sum_by_tenant: list[float]
    delivered_total: int
    events: int
    kprime_violations: int
    event_log: Optional[list[dict]] = None


@dataclass
class RunSetup:
    """Everything derived from a config before the event loop starts."""

    config: SimConfig
    graph: topology.NetworkGraph
    root: int
    states: dict[int, dodag.DodagNodeState]
    tenants: list[tuple[int, int]]
    bit_generator: np.random.PCG64
    rng: np.random.Generator
    synch_overhead: float


def build_topology(config: SimConfig) -> topology.NetworkGraph:
    defaults = topology.GraphDefaults(config.gen_prob, config.init_fidelity, config.memory)
    t = config.topology
    if t.kind == "grid":
        graph = topology.build_grid(t.rows, t.cols, defaults)
    elif t.kind == "random":
        graph = topology.build_random(t.n, t.avg_degree, config.seed, defaults)
    else:
        raise ValueError(f"unknown topology kind {t.kind!r}")
    if config.link_overrides:
        links = list(graph.links)
        for u, v, p, f0 in config.link_overrides:
            links[graph.link_id(u, v)] = topology.LinkSpec(min(u, v), max(u, v), p, f0)
        graph = topology.NetworkGraph(graph.nodes.values(), links)
    return graph


def prepare(config: SimConfig) -> RunSetup:
    problems = config.validate()
    if problems:
        raise ValueError("invalid config: " + "; ".join(problems))
    graph = build_topology(config)
    violations = topology.validate(graph)
    if violations:
        raise ValueError("invalid topology: " + "; ".join(violations))
    root = config.root if config.root is not None else topology.pick_center_root(graph)
    states = dodag.converge_dodag(graph, root, config.alpha, config.beta)
    bit_generator = np.random.PCG64(config.seed)
    rng = np.random.Generator(bit_generator)
    if config.workload is not None:
        tenants = [tuple(pair) for pair in config.workload]
    else:
        n = graph.n_nodes
        used: set[int] = set()
        tenants = []
        for _ in range(config.n_requests):
            while True:
                s = int(rng.random() * n)
                if s not in used:
                    break
            used.add(s)
            while True:
                d = int(rng.random() * n)
                if d not in used:
                    break
            used.add(d)
            tenants.append((s, d))
    overhead = config.synch_overhead
    if overhead is None:
        overhead = 2.0 * topology.graph_diameter(graph) * config.hop_latency
    return RunSetup(config, graph, root, states, tenants, bit_generator, rng, overhead)


class _Pair:
    """Pool slot for a live entangled pair (positions index the owner's path)."""

    __slots__ = ("lo", "hi", "fid", "created", "ready", "swaps", "tenant", "epoch", "alive", "display")

    def __init__(self):
        self.alive = False
        self.epoch = 0


class _Attempt:
    """Per-tenant active path attempt (at most one in flight per tenant)."""

    __slots__ = (
        "alive", "epoch", "display", "path", "links", "gen_done", "reserved",
        "seg_lo", "seg_hi", "gen_deadline",
    )

    def __init__(self):
        self.alive = False
        self.epoch = 0


class PythonCore:
    """Reference event loop; mirrors entroute._speedcore step for step."""

    def __init__(self, setup: RunSetup):
        self.setup = setup
        cfg = setup.config
        self.cfg = cfg
        self.graph = setup.graph
        self.states = setup.states
        self.rng = setup.rng
        self.n = setup.graph.n_nodes
        self.free = [self.graph.memory_of(v) for v in range(self.n)]
        self.capacity = list(self.free)
        self.link_busy = [0.0] * self.graph.n_links
        self.n_tenants = len(setup.tenants)
        self.requests: list[Optional[Request]] = [None] * self.n_tenants
        self.pending = [False] * self.n_tenants
        self.last_submit = [0.0] * self.n_tenants
        self.attempts = [_Attempt() for _ in range(self.n_tenants)]
        self.pairs: list[_Pair] = []
        self.pair_free: list[int] = []
        self.heap: list[tuple] = []
        self.seq = 0
        self.next_request_id = 0
        self.next_attempt_display = 0
        self.next_pair_display = 0
        self.live_pairs = 0
        self.empty_slots = 0
        self.pass_scheduled = False
        self.slot_gen_deadline = math.inf
        self.clock = 0.0
        self.events = 0
        self.kprime_violations = 0
        self.delivered = 0
        self.fidelity_sum = 0.0
        self.delivered_total = 0
        self.served_by_tenant = [0] * self.n_tenants
        self.failed_by_tenant = [0] * self.n_tenants
        self.fid_sum_by_tenant = [0.0] * self.n_tenants
        self.log: Optional[list[dict]] = [] if cfg.event_log else None
        self.strategy = STRATEGY_IDS[cfg.strategy]

    # -- plumbing ------------------------------------------------------------

    def _push(self, t: float, kind: int, a: int = 0, b: int = 0, c: int = 0) -> None:
        heapq.heappush(self.heap, (t, self.seq, kind, a, b, c))
        self.seq += 1

    def _emit(self, entry: dict) -> None:
        if self.log is not None:
            self.log.append(entry)

    def _alloc_pair(self) -> int:
        if self.pair_free:
            slot = self.pair_free.pop()
        else:
            slot = len(self.pairs)
            self.pairs.append(_Pair())
        pair = self.pairs[slot]
        pair.epoch += 1
        pair.alive = True
        pair.display = self.next_pair_display
        self.next_pair_display += 1
        return slot

    def _kill_pair(self, tenant: int, slot: int) -> None:
        pair = self.pairs[slot]
        path = self.attempts[tenant].path
        self.free[path[pair.lo]] += 1
        self.free[path[pair.hi]] += 1
        pair.alive = False
        self.live_pairs -= 1
        self.pair_free.append(slot)

    def _book_gen(self, tenant: int, epoch: int, j: int, desired: float) -> float:
        """Serialize generation on the physical channel: one attempt per link
        per period. Returns the booked completion time."""
        att = self.attempts[tenant]
        eid = self.graph.link_id(att.path[j], att.path[j + 1])
        start = desired if desired > self.link_busy[eid] else self.link_busy[eid]
        self.link_busy[eid] = start + self.cfg.attempt_period
        self._push(start + self.cfg.attempt_period, EV_GEN, tenant, epoch, j)
        return start + self.cfg.attempt_period

    def _view(self) -> SchedulerView:
        return SchedulerView(self.graph, self.states, self.free, self.setup.root)

    # -- request lifecycle ---------------------------------------------------

    def _submit(self, tenant: int, t: float) -> None:
        s, d = self.setup.tenants[tenant]
        req = Request(self.next_request_id, s, d, t, RequestStatus.PENDING, tenant)
        self.next_request_id += 1
        self.requests[tenant] = req
        self.pending[tenant] = True
        self.last_submit[tenant] = t
        self._emit({"t": t, "kind": "submit", "request": req.id, "tenant": tenant, "s": s, "d": d})

    def _resubmit(self, tenant: int, t: float) -> None:
        """Closed-loop refill, paced: a tenant submits at most one request per
        request_interval (0 = immediately on completion)."""
        t_next = self.last_submit[tenant] + self.cfg.request_interval
        if t_next > t:
            self._push(t_next, EV_SUBMIT, tenant)
        else:
            self._submit(tenant, t)

    def _request_pass(self, t: float) -> None:
        if self.strategy == 1:  # synch-nca is slot-driven
            return
        if not self.pass_scheduled:
            self.pass_scheduled = True
            self._push(t, EV_PASS)

    def _start_attempt(self, req: Request, path: RoutePath, t: float,
                       gen_from: float, gen_deadline: float,
                       reserve_now: bool = True) -> None:
        tenant = req.tenant
        self.pending[tenant] = False
        att = self.attempts[tenant]
        att.alive = True
        att.epoch += 1
        att.display = self.next_attempt_display
        self.next_attempt_display += 1
        att.path = list(path.node_sequence)
        att.links = len(att.path) - 1
        att.gen_done = [False] * att.links
        att.reserved = [reserve_now] * att.links
        att.seg_lo = [-1] * (att.links + 1)
        att.seg_hi = [-1] * (att.links + 1)
        att.gen_deadline = gen_deadline
        k_root = self.states[req.source].d_hop + self.states[req.dest].d_hop
        if att.links > k_root:
            self.kprime_violations += 1
        if reserve_now:
            for a, b in path.link_sequence:
                self.free[a] -= 1
                self.free[b] -= 1
            self.empty_slots += 2 * att.links
            for j in range(att.links):
                self._book_gen(tenant, att.epoch, j, gen_from)
        else:
            # contention-unaware holder: slots acquire link by link later,
            # a give-up timer bounds how long partial holds persist
            self._push(t + self.cfg.asynch_hold_timeout, EV_TIMEOUT, tenant, att.epoch)
        self._emit({
            "t": t, "kind": "schedule", "request": req.id, "tenant": tenant,
            "attempt": att.display, "path": list(path.node_sequence),
            "anchor": path.anchor, "score": path.score,
        })

    def _release_attempt(self, tenant: int) -> None:
        att = self.attempts[tenant]
        att.alive = False
        for x in range(att.links + 1):
            slot = att.seg_lo[x]
            if slot >= 0:
                att.seg_hi[self.pairs[slot].hi] = -1
                att.seg_lo[x] = -1
                self._kill_pair(tenant, slot)
        for j in range(att.links):
            if att.reserved[j] and not att.gen_done[j]:
                self.free[att.path[j]] += 1
                self.free[att.path[j + 1]] += 1
                self.empty_slots -= 2

    def _attempt_failed(self, tenant: int, t: float, reason: str) -> None:
        att = self.attempts[tenant]
        req = self.requests[tenant]
        self._release_attempt(tenant)
        req.retries += 1
        if self.strategy == 0:  # radar-q: failure-triggered localized repair
            occupancy = [self.capacity[v] - self.free[v] for v in range(self.n)]
            dodag.localized_update(
                att.path, self.states, self.graph, occupancy, self.cfg.alpha, self.cfg.beta
            )
        if req.retries > self.cfg.retry_cap:
            req.status = RequestStatus.FAILED
            if t > self.cfg.warmup:
                self.failed_by_tenant[tenant] += 1
            self._emit({"t": t, "kind": "fail", "request": req.id, "tenant": tenant,
                        "reason": reason, "retries": req.retries})
            self._resubmit(tenant, t)
        else:
            self.pending[tenant] = True
            self._emit({"t": t, "kind": "retry", "request": req.id, "tenant": tenant,
                        "reason": reason, "retries": req.retries})
        self._request_pass(t)

    def _deliver(self, tenant: int, slot: int, t: float) -> None:
        pair = self.pairs[slot]
        req = self.requests[tenant]
        fid = physics.decay_fidelity(pair.fid, t - pair.created, self.cfg.tau)
        self._emit({"t": t, "kind": "deliver", "request": req.id, "tenant": tenant,
                    "pair": pair.display, "fidelity": fid, "swaps": pair.swaps})
        self._release_attempt(tenant)
        req.status = RequestStatus.SERVED
        self.delivered_total += 1
        if t > self.cfg.warmup:
            self.delivered += 1
            self.fidelity_sum += fid
            self.served_by_tenant[tenant] += 1
            self.fid_sum_by_tenant[tenant] += fid
        self._resubmit(tenant, t)
        self._request_pass(t)

    # -- entanglement lifecycle ------------------------------------------------

    def _handle_gen(self, t: float, tenant: int, epoch: int, j: int) -> None:
        att = self.attempts[tenant]
        if not att.alive or att.epoch != epoch:
            return
        a, b = att.path[j], att.path[j + 1]
        link = self.graph.link_between(a, b)
        if self.rng.random() < link.gen_prob:
            slot = self._alloc_pair()
            pair = self.pairs[slot]
            pair.lo, pair.hi = j, j + 1
            pair.fid = link.init_fidelity
            pair.created = t
            pair.ready = t
            pair.swaps = 0
            pair.tenant = tenant
            self.live_pairs += 1
            self.empty_slots -= 2
            att.gen_done[j] = True
            att.seg_lo[j] = slot
            att.seg_hi[j + 1] = slot
            if math.isfinite(self.cfg.coherence_time):
                self._push(t + self.cfg.coherence_time, EV_EXPIRE, slot, pair.epoch)
            self._emit({"t": t, "kind": "gen", "request": self.requests[tenant].id,
                        "link": [link.u, link.v], "pair": pair.display,
                        "fidelity": link.init_fidelity})
            self._merge_scan(tenant, t)
        else:
            self._emit({"t": t, "kind": "gen_fail", "request": self.requests[tenant].id,
                        "link": [link.u, link.v]})
            eid = self.graph.link_id(a, b)
            start = t if t > self.link_busy[eid] else self.link_busy[eid]
            if start + self.cfg.attempt_period < att.gen_deadline:
                self._book_gen(tenant, epoch, j, t)

    def _unreserve_span(self, tenant: int, lo: int, hi: int) -> None:
        att = self.attempts[tenant]
        for j in range(lo, hi):
            att.reserved[j] = False
            att.gen_done[j] = False

    def _merge_scan(self, tenant: int, t: float) -> None:
        att = self.attempts[tenant]
        cfg = self.cfg
        respanned = False
        while True:
            found = False
            for x in range(1, att.links):
                ls, rs = att.seg_hi[x], att.seg_lo[x]
                if ls < 0 or rs < 0:
                    continue
                left, right = self.pairs[ls], self.pairs[rs]
                if left.ready > t or right.ready > t:
                    continue
                node = att.path[x]
                lo, hi = left.lo, right.hi
                ld, rd = left.display, right.display
                swaps = left.swaps + right.swaps + 1
                att.seg_lo[left.lo] = att.seg_hi[left.hi] = -1
                att.seg_lo[right.lo] = att.seg_hi[right.hi] = -1
                self._kill_pair(tenant, ls)
                self._kill_pair(tenant, rs)
                if self.rng.random() < cfg.bsm_prob:
                    fid = physics.compose_swap_fidelity(
                        physics.decay_fidelity(left.fid, t - left.created, cfg.tau),
                        physics.decay_fidelity(right.fid, t - right.created, cfg.tau),
                    )
                    slot = self._alloc_pair()
                    merged = self.pairs[slot]
                    merged.lo, merged.hi = lo, hi
                    merged.fid = fid
                    merged.created = t
                    merged.ready = t + cfg.hop_latency * max(x - lo, hi - x)
                    merged.swaps = swaps
                    merged.tenant = tenant
                    self.free[att.path[lo]] -= 1
                    self.free[att.path[hi]] -= 1
                    self.live_pairs += 1
                    att.seg_lo[lo] = slot
                    att.seg_hi[hi] = slot
                    if math.isfinite(cfg.coherence_time):
                        self._push(t + cfg.coherence_time, EV_EXPIRE, slot, merged.epoch)
                    self._push(merged.ready, EV_READY, slot, merged.epoch)
                    self._emit({"t": t, "kind": "swap_ok", "node": node,
                                "request": self.requests[tenant].id, "left": ld,
                                "right": rd, "pair": merged.display, "fidelity": fid})
                    found = True
                    break
                self._emit({"t": t, "kind": "swap_fail", "node": node,
                            "request": self.requests[tenant].id, "left": ld, "right": rd})
                if self.strategy == 2:
                    # blocking baseline: the attempt persists; the destroyed
                    # span rebuilds inside the held reservation while the
                    # surviving segments keep aging
                    self._unreserve_span(tenant, lo, hi)
                    respanned = True
                    found = True
                    break
                self._attempt_failed(tenant, t, "swap")
                return
            if not found:
                break
        if respanned:
            self._request_pass(t)
        slot = att.seg_lo[0]
        if slot >= 0 and self.pairs[slot].hi == att.links and self.pairs[slot].ready <= t:
            self._deliver(tenant, slot, t)

    def _handle_ready(self, t: float, slot: int, epoch: int) -> None:
        pair = self.pairs[slot]
        if pair.alive and pair.epoch == epoch and self.attempts[pair.tenant].alive:
            self._merge_scan(pair.tenant, t)

    def _handle_expire(self, t: float, slot: int, epoch: int) -> None:
        pair = self.pairs[slot]
        if pair.alive and pair.epoch == epoch and self.attempts[pair.tenant].alive:
            tenant = pair.tenant
            self._emit({"t": t, "kind": "expire", "pair": pair.display,
                        "request": self.requests[tenant].id})
            if self.strategy == 2:
                att = self.attempts[tenant]
                att.seg_lo[pair.lo] = att.seg_hi[pair.hi] = -1
                lo, hi = pair.lo, pair.hi
                self._kill_pair(tenant, slot)
                self._unreserve_span(tenant, lo, hi)
                self._request_pass(t)
            else:
                self._attempt_failed(tenant, t, "expiry")

    # -- scheduling ------------------------------------------------------------

    def _handle_pass(self, t: float) -> None:
        self.pass_scheduled = False
        reqs = [self.requests[i] for i in range(self.n_tenants) if self.pending[i]]
        if self.strategy == 2:
            if reqs:
                for req, path in protocols.asynch_root_schedule(reqs, self._view()):
                    self._start_attempt(req, path, t, math.inf, math.inf,
                                        reserve_now=False)
            self._acquire_links(t)
            return
        if not reqs:
            return
        scheduler = protocols.SCHEDULERS[self.cfg.strategy]
        for req, path in scheduler(reqs, self._view()):
            self._start_attempt(req, path, t, t, math.inf)

    def _acquire_links(self, t: float) -> None:
        """Uncoordinated hop-by-hop reservation for root-anchored attempts:
        each attempt's setup advances at most one link per signaling wave
        (circuit-setup style, one hop per link-layer cycle), holding what it
        has while blocked. Within a wave, closer pairs go first (shorter
        classical round trips), ties by arrival order. Competing attempts can
        each grab part of a bottleneck node and mutually block until a hold
        timeout fires."""
        live = [i for i in range(self.n_tenants) if self.attempts[i].alive]
        live.sort(key=lambda i: (self.attempts[i].links, self.requests[i].id))
        incomplete = False
        for tenant in live:
            att = self.attempts[tenant]
            for j in range(att.links):
                if att.reserved[j]:
                    continue
                a, b = att.path[j], att.path[j + 1]
                if self.free[a] >= 1 and self.free[b] >= 1:
                    self.free[a] -= 1
                    self.free[b] -= 1
                    self.empty_slots += 2
                    att.reserved[j] = True
                    self._book_gen(tenant, att.epoch, j, t)
                    if any(not r for r in att.reserved):
                        incomplete = True
                else:
                    incomplete = True
                break
        if incomplete and not self.pass_scheduled:
            # next signaling wave
            self.pass_scheduled = True
            self._push(t + self.cfg.attempt_period, EV_PASS)

    def _handle_slot_start(self, t: float) -> None:
        cfg = self.cfg
        reqs = [self.requests[i] for i in range(self.n_tenants) if self.pending[i]]
        plan = protocols.synch_nca_schedule(reqs, self._view()) if reqs else []
        self._emit({"t": t, "kind": "slot_start",
                    "assigned": [req.id for req, _ in plan]})
        gen_start = t + self.setup.synch_overhead
        gen_end = gen_start + cfg.synch_gen_attempts * cfg.attempt_period
        deadline = gen_end + 0.5 * cfg.attempt_period
        max_hops = 1
        for req, path in plan:
            self._start_attempt(req, path, t, gen_start, deadline)
            if path.hops > max_hops:
                max_hops = path.hops
        slot_end = gen_end + (max_hops + 1) * cfg.hop_latency
        self._push(slot_end, EV_SLOT_END)

    def _handle_slot_end(self, t: float) -> None:
        self._emit({"t": t, "kind": "slot_end"})
        for tenant in range(self.n_tenants):
            if self.attempts[tenant].alive:
                # all pairs, used or not, are discarded at the slot boundary
                self._emit({"t": t, "kind": "discard",
                            "request": self.requests[tenant].id, "tenant": tenant})
                req = self.requests[tenant]
                self._release_attempt(tenant)
                req.retries += 1
                if req.retries > self.cfg.retry_cap:
                    req.status = RequestStatus.FAILED
                    if t > self.cfg.warmup:
                        self.failed_by_tenant[tenant] += 1
                    self._emit({"t": t, "kind": "fail", "request": req.id,
                                "tenant": tenant, "reason": "slot", "retries": req.retries})
                    self._resubmit(tenant, t)
                else:
                    self.pending[tenant] = True
        self._push(t, EV_SLOT_START)

    # -- main loop ---------------------------------------------------------------

    def _check_invariants(self) -> None:
        occupied = sum(self.capacity[v] - self.free[v] for v in range(self.n))
        expected = 2 * self.live_pairs + self.empty_slots
        if occupied != expected:
            raise AssertionError(
                f"memory conservation violated: occupied {occupied} != "
                f"2*{self.live_pairs} + {self.empty_slots}"
            )
        if any(self.free[v] < 0 or self.free[v] > self.capacity[v] for v in range(self.n)):
            raise AssertionError("free-slot count out of range")

    def run(self) -> CoreResult:
        cfg = self.cfg
        for tenant in range(self.n_tenants):
            self._submit(tenant, 0.0)
        if self.strategy == 1:
            self._push(0.0, EV_SLOT_START)
        else:
            self._request_pass(0.0)
        total = cfg.total_time
        while self.heap:
            t, _, kind, a, b, c = heapq.heappop(self.heap)
            if t > total:
                break
            if cfg.debug_checks and t < self.clock:
                raise AssertionError("event processed out of timestamp order")
            self.clock = t
            self.events += 1
            if kind == EV_GEN:
                self._handle_gen(t, a, b, c)
            elif kind == EV_READY:
                self._handle_ready(t, a, b)
            elif kind == EV_EXPIRE:
                self._handle_expire(t, a, b)
            elif kind == EV_PASS:
                self._handle_pass(t)
            elif kind == EV_SLOT_START:
                self._handle_slot_start(t)
            elif kind == EV_SLOT_END:
                self._handle_slot_end(t)
            elif kind == EV_SUBMIT:
                self._submit(a, t)
                self._request_pass(t)
            elif kind == EV_TIMEOUT:
                att = self.attempts[a]
                if att.alive and att.epoch == b:
                    self._emit({"t": t, "kind": "timeout",
                                "request": self.requests[a].id, "tenant": a})
                    self._attempt_failed(a, t, "timeout")
            if cfg.debug_checks:
                self._check_invariants()
        return CoreResult(
            delivered=self.delivered,
            fidelity_sum=self.fidelity_sum,
            served_by_tenant=self.served_by_tenant,
            failed_by_tenant=self.failed_by_tenant,
            fid_sum_by_tenant=self.fid_sum_by_tenant,
            delivered_total=self.delivered_total,
            events=self.events,
            kprime_violations=self.kprime_violations,
            event_log=self.log,
        )


def active_core(config: SimConfig) -> str:
    if config.core == "python":
        return "python"
    if config.core == "compiled":
        if not HAVE_SPEEDCORE:
            raise RuntimeError("compiled core requested but entroute._speedcore is unavailable")
        return "compiled"
    return "compiled" if HAVE_SPEEDCORE else "python"


def simulate(config: SimConfig) -> tuple[metrics.MetricsRecord, CoreResult]:
    """Run one simulation; returns the aggregated record plus raw tallies."""
    setup = prepare(config)
    if active_core(config) == "compiled":
        result = _speedcore.run_core(setup)
    else:
        result = PythonCore(setup).run()
    return metrics.aggregate(config, result), result


def run(config: SimConfig) -> metrics.MetricsRecord:
    return simulate(config)[0]
