# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled engine core: the same event machine as engine.PythonCore over flat
arrays. Bit-identical to the Python core for any (config, seed): both draw
from one shared PCG64 stream in the same order and evaluate every float
expression in the same order (pinned by the equivalence tests).
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, isfinite, INFINITY

import numpy as np

from numpy.random cimport bitgen_t

cdef double WERNER = 0.25

cdef int EV_GEN = 0
cdef int EV_READY = 1
cdef int EV_EXPIRE = 2
cdef int EV_PASS = 3
cdef int EV_SLOT_START = 4
cdef int EV_SLOT_END = 5
cdef int EV_SUBMIT = 6
cdef int EV_TIMEOUT = 7


cdef inline double _decay(double fid, double age, double tau) noexcept nogil:
    return WERNER + (fid - WERNER) * exp(-age / tau)


cdef class SpeedSim:
    cdef bitgen_t *bitgen
    cdef object bit_generator          # keepalive for the capsule
    cdef object log                    # list when logging, else None

    # topology
    cdef int n, m, root, maxp, maxl
    cdef int[::1] mem, adj_ptr, adj_ids, adj_link, rev_pos
    cdef int[::1] link_u, link_v
    cdef double[::1] link_p, link_f0

    # dodag
    cdef int[::1] parent, d_hop
    cdef double[::1] rank_self, fv_static, table_rank
    cdef double alpha, beta

    # tenants / requests
    cdef int n_tenants
    cdef int[::1] ts, td
    cdef long long[::1] req_id
    cdef int[::1] req_retries
    cdef char[::1] pending
    cdef double[::1] last_submit
    cdef double req_interval

    # attempts (one slot per tenant)
    cdef char[::1] att_alive
    cdef long long[::1] att_epoch, att_display
    cdef int[::1] att_L
    cdef double[::1] att_deadline
    cdef int[::1] att_path             # n_tenants * maxp
    cdef char[::1] att_gen             # n_tenants * maxl
    cdef char[::1] att_res             # n_tenants * maxl
    cdef int[::1] seg_lo, seg_hi       # n_tenants * (maxl + 1)

    # pair pool
    cdef int pool_cap, free_top
    cdef int[::1] pr_lo, pr_hi, pr_swaps, pr_tenant, pool_free
    cdef double[::1] pr_fid, pr_created, pr_ready
    cdef long long[::1] pr_epoch, pr_display
    cdef char[::1] pr_alive

    # memory occupancy
    cdef int[::1] free_, cap
    cdef double[::1] link_busy
    cdef long long live_pairs, empty_slots

    # heap
    cdef object _heap_arrays
    cdef double[::1] hp_t
    cdef long long[::1] hp_seq, hp_a, hp_b
    cdef int[::1] hp_kind, hp_c
    cdef int heap_len, heap_cap
    cdef long long seq

    # scheduling scratch
    cdef long long stamp
    cdef long long[::1] mark_s, mark_d
    cdef int[::1] tmp_free, buf_pend, buf_path, buf_best, buf_aff
    cdef long long[::1] buf_key_depth

    # params
    cdef int strategy, retry_cap, synch_G
    cdef double p_period, lat, warmup, total, t_co, tau, overhead, q_prob, hold_timeout
    cdef char debug, logging
    cdef char t_co_finite

    # counters / stats
    cdef long long next_request_id, next_att_display, next_pair_display
    cdef char pass_scheduled
    cdef double clock
    cdef long long events, kprime_violations, delivered, delivered_total
    cdef double fidelity_sum
    cdef long long[::1] served_w, failed_w
    cdef double[::1] fidsum_w

    def __init__(self, setup):
        cfg = setup.config
        graph = setup.graph
        states = setup.states
        cdef int n = graph.n_nodes
        self.n = n
        self.m = graph.n_links
        self.root = setup.root
        self.alpha = cfg.alpha
        self.beta = cfg.beta
        self.strategy = {"radar-q": 0, "synch-nca": 1, "asynch-root": 2}[cfg.strategy]
        self.retry_cap = cfg.retry_cap
        self.synch_G = cfg.synch_gen_attempts
        self.p_period = cfg.attempt_period
        self.lat = cfg.hop_latency
        self.warmup = cfg.warmup
        self.total = cfg.total_time
        self.t_co = cfg.coherence_time
        self.t_co_finite = 1 if isfinite(cfg.coherence_time) else 0
        self.tau = cfg.tau
        self.q_prob = cfg.bsm_prob
        self.req_interval = cfg.request_interval
        self.hold_timeout = cfg.asynch_hold_timeout
        self.overhead = setup.synch_overhead
        self.debug = 1 if cfg.debug_checks else 0
        self.logging = 1 if cfg.event_log else 0
        self.log = [] if cfg.event_log else None

        self.bit_generator = setup.bit_generator
        self.bitgen = <bitgen_t *> PyCapsule_GetPointer(
            setup.bit_generator.capsule, "BitGenerator")

        # ---- topology marshalling
        self.mem = np.array([graph.memory_of(v) for v in range(n)], dtype=np.int32)
        adj_ptr = np.zeros(n + 1, dtype=np.int32)
        adj_ids, adj_link = [], []
        for v in range(n):
            for w in graph.neighbors(v):
                adj_ids.append(w)
                adj_link.append(graph.link_id(v, w))
            adj_ptr[v + 1] = len(adj_ids)
        self.adj_ptr = adj_ptr
        self.adj_ids = np.array(adj_ids, dtype=np.int32)
        self.adj_link = np.array(adj_link, dtype=np.int32)
        pos_of = {}
        for v in range(n):
            for pos in range(adj_ptr[v], adj_ptr[v + 1]):
                pos_of[(v, adj_ids[pos])] = pos
        self.rev_pos = np.array(
            [pos_of[(adj_ids[pos], v)] for v in range(n)
             for pos in range(adj_ptr[v], adj_ptr[v + 1])],
            dtype=np.int32)
        self.link_u = np.array([l.u for l in graph.links], dtype=np.int32)
        self.link_v = np.array([l.v for l in graph.links], dtype=np.int32)
        self.link_p = np.array([l.gen_prob for l in graph.links], dtype=np.float64)
        self.link_f0 = np.array([l.init_fidelity for l in graph.links], dtype=np.float64)

        # ---- dodag marshalling
        parent = np.full(n, -1, dtype=np.int32)
        d_hop = np.zeros(n, dtype=np.int32)
        rank_self = np.zeros(n, dtype=np.float64)
        fv = np.ones(n, dtype=np.float64)
        table = np.zeros(len(adj_ids), dtype=np.float64)
        for v in range(n):
            st = states[v]
            parent[v] = -1 if st.preferred_parent is None else st.preferred_parent
            d_hop[v] = st.d_hop
            rank_self[v] = st.rank
            fv[v] = st.avg_parent_fidelity
            for pos in range(adj_ptr[v], adj_ptr[v + 1]):
                table[pos] = st.neighbor_table[adj_ids[pos]].rank
        self.parent = parent
        self.d_hop = d_hop
        self.rank_self = rank_self
        self.fv_static = fv
        self.table_rank = table
        cdef int maxd = int(max(d_hop)) if n else 0
        self.maxp = 2 * maxd + 3
        self.maxl = self.maxp - 1

        # ---- tenants
        cdef int T = len(setup.tenants)
        self.n_tenants = T
        self.ts = np.array([s for s, _ in setup.tenants], dtype=np.int32)
        self.td = np.array([d for _, d in setup.tenants], dtype=np.int32)
        self.req_id = np.zeros(T, dtype=np.int64)
        self.req_retries = np.zeros(T, dtype=np.int32)
        self.pending = np.zeros(T, dtype=np.int8)
        self.last_submit = np.zeros(T, dtype=np.float64)
        self.att_alive = np.zeros(T, dtype=np.int8)
        self.att_epoch = np.zeros(T, dtype=np.int64)
        self.att_display = np.zeros(T, dtype=np.int64)
        self.att_L = np.zeros(T, dtype=np.int32)
        self.att_deadline = np.zeros(T, dtype=np.float64)
        self.att_path = np.zeros(T * self.maxp, dtype=np.int32)
        self.att_gen = np.zeros(T * self.maxl, dtype=np.int8)
        self.att_res = np.zeros(T * self.maxl, dtype=np.int8)
        self.seg_lo = np.full(T * (self.maxl + 1), -1, dtype=np.int32)
        self.seg_hi = np.full(T * (self.maxl + 1), -1, dtype=np.int32)

        # ---- pair pool
        self.pool_cap = T * (self.maxl + 2)
        self.pr_lo = np.zeros(self.pool_cap, dtype=np.int32)
        self.pr_hi = np.zeros(self.pool_cap, dtype=np.int32)
        self.pr_swaps = np.zeros(self.pool_cap, dtype=np.int32)
        self.pr_tenant = np.zeros(self.pool_cap, dtype=np.int32)
        self.pr_fid = np.zeros(self.pool_cap, dtype=np.float64)
        self.pr_created = np.zeros(self.pool_cap, dtype=np.float64)
        self.pr_ready = np.zeros(self.pool_cap, dtype=np.float64)
        self.pr_epoch = np.zeros(self.pool_cap, dtype=np.int64)
        self.pr_display = np.zeros(self.pool_cap, dtype=np.int64)
        self.pr_alive = np.zeros(self.pool_cap, dtype=np.int8)
        self.pool_free = np.arange(self.pool_cap - 1, -1, -1, dtype=np.int32)
        self.free_top = self.pool_cap

        self.free_ = np.array([graph.memory_of(v) for v in range(n)], dtype=np.int32)
        self.cap = np.array([graph.memory_of(v) for v in range(n)], dtype=np.int32)
        self.link_busy = np.zeros(graph.n_links, dtype=np.float64)
        self.live_pairs = 0
        self.empty_slots = 0

        # ---- heap
        self.heap_cap = 1 << 12
        self._alloc_heap(self.heap_cap)
        self.heap_len = 0
        self.seq = 0

        # ---- scratch
        self.stamp = 0
        self.mark_s = np.zeros(n, dtype=np.int64)
        self.mark_d = np.zeros(n, dtype=np.int64)
        self.tmp_free = np.zeros(n, dtype=np.int32)
        self.buf_pend = np.zeros(T, dtype=np.int32)
        self.buf_key_depth = np.zeros(T, dtype=np.int64)
        self.buf_path = np.zeros(self.maxp, dtype=np.int32)
        self.buf_best = np.zeros(self.maxp, dtype=np.int32)
        self.buf_aff = np.zeros(n, dtype=np.int32)

        self.next_request_id = 0
        self.next_att_display = 0
        self.next_pair_display = 0
        self.pass_scheduled = 0
        self.clock = 0.0
        self.events = 0
        self.kprime_violations = 0
        self.delivered = 0
        self.delivered_total = 0
        self.fidelity_sum = 0.0
        self.served_w = np.zeros(T, dtype=np.int64)
        self.failed_w = np.zeros(T, dtype=np.int64)
        self.fidsum_w = np.zeros(T, dtype=np.float64)

    # ------------------------------------------------------------------ heap

    def _alloc_heap(self, int cap):
        self._heap_arrays = (
            np.zeros(cap, dtype=np.float64), np.zeros(cap, dtype=np.int64),
            np.zeros(cap, dtype=np.int32), np.zeros(cap, dtype=np.int64),
            np.zeros(cap, dtype=np.int64), np.zeros(cap, dtype=np.int32),
        )
        self.hp_t, self.hp_seq, self.hp_kind, self.hp_a, self.hp_b, self.hp_c = \
            self._heap_arrays

    cdef void _grow_heap(self):
        old = self._heap_arrays
        cdef int new_cap = self.heap_cap * 2
        self._alloc_heap(new_cap)
        for arr_old, arr_new in zip(old, self._heap_arrays):
            arr_new[: self.heap_cap] = arr_old
        self.heap_cap = new_cap

    cdef inline bint _before(self, int i, int j) noexcept nogil:
        if self.hp_t[i] != self.hp_t[j]:
            return self.hp_t[i] < self.hp_t[j]
        return self.hp_seq[i] < self.hp_seq[j]

    cdef inline void _swap_entries(self, int i, int j) noexcept nogil:
        cdef double td_
        cdef long long tl
        cdef int ti
        td_ = self.hp_t[i]; self.hp_t[i] = self.hp_t[j]; self.hp_t[j] = td_
        tl = self.hp_seq[i]; self.hp_seq[i] = self.hp_seq[j]; self.hp_seq[j] = tl
        ti = self.hp_kind[i]; self.hp_kind[i] = self.hp_kind[j]; self.hp_kind[j] = ti
        tl = self.hp_a[i]; self.hp_a[i] = self.hp_a[j]; self.hp_a[j] = tl
        tl = self.hp_b[i]; self.hp_b[i] = self.hp_b[j]; self.hp_b[j] = tl
        ti = self.hp_c[i]; self.hp_c[i] = self.hp_c[j]; self.hp_c[j] = ti

    cdef void _push(self, double t, int kind, long long a, long long b, int c):
        if self.heap_len == self.heap_cap:
            self._grow_heap()
        cdef int i = self.heap_len
        self.hp_t[i] = t
        self.hp_seq[i] = self.seq
        self.hp_kind[i] = kind
        self.hp_a[i] = a
        self.hp_b[i] = b
        self.hp_c[i] = c
        self.seq += 1
        self.heap_len += 1
        cdef int up
        while i > 0:
            up = (i - 1) >> 1
            if self._before(i, up):
                self._swap_entries(i, up)
                i = up
            else:
                break

    cdef void _pop(self) noexcept nogil:
        # caller reads entry 0 first
        cdef int i = 0, l, r, smallest
        self.heap_len -= 1
        if self.heap_len == 0:
            return
        self._swap_entries(0, self.heap_len)
        while True:
            l = 2 * i + 1
            r = l + 1
            smallest = i
            if l < self.heap_len and self._before(l, smallest):
                smallest = l
            if r < self.heap_len and self._before(r, smallest):
                smallest = r
            if smallest == i:
                break
            self._swap_entries(i, smallest)
            i = smallest

    # ----------------------------------------------------------------- pairs

    cdef int _alloc_pair(self):
        self.free_top -= 1
        cdef int slot = self.pool_free[self.free_top]
        self.pr_epoch[slot] += 1
        self.pr_alive[slot] = 1
        self.pr_display[slot] = self.next_pair_display
        self.next_pair_display += 1
        return slot

    cdef void _kill_pair(self, int tenant, int slot):
        cdef int base = tenant * self.maxp
        self.free_[self.att_path[base + self.pr_lo[slot]]] += 1
        self.free_[self.att_path[base + self.pr_hi[slot]]] += 1
        self.pr_alive[slot] = 0
        self.live_pairs -= 1
        self.pool_free[self.free_top] = slot
        self.free_top += 1

    # -------------------------------------------------------------- requests

    cdef void _submit(self, int tenant, double t):
        self.req_id[tenant] = self.next_request_id
        self.next_request_id += 1
        self.req_retries[tenant] = 0
        self.pending[tenant] = 1
        self.last_submit[tenant] = t
        if self.logging:
            self.log.append({"t": t, "kind": "submit",
                             "request": int(self.req_id[tenant]), "tenant": tenant,
                             "s": int(self.ts[tenant]), "d": int(self.td[tenant])})

    cdef double _book_gen(self, int tenant, long long epoch, int j, double desired):
        cdef int base = tenant * self.maxp
        cdef int eid = self._link_of(self.att_path[base + j], self.att_path[base + j + 1])
        cdef double start = desired if desired > self.link_busy[eid] else self.link_busy[eid]
        self.link_busy[eid] = start + self.p_period
        self._push(start + self.p_period, EV_GEN, tenant, epoch, j)
        return start + self.p_period

    cdef void _resubmit(self, int tenant, double t):
        cdef double t_next = self.last_submit[tenant] + self.req_interval
        if t_next > t:
            self._push(t_next, EV_SUBMIT, tenant, 0, 0)
        else:
            self._submit(tenant, t)

    cdef void _request_pass(self, double t):
        if self.strategy == 1:
            return
        if not self.pass_scheduled:
            self.pass_scheduled = 1
            self._push(t, EV_PASS, 0, 0, 0)

    cdef void _start_attempt(self, int tenant, int* path, int n_nodes, int anchor,
                             double score, double t, double gen_from,
                             double gen_deadline, bint reserve_now):
        cdef int base = tenant * self.maxp
        cdef int segb = tenant * (self.maxl + 1)
        cdef int genb = tenant * self.maxl
        cdef int links = n_nodes - 1
        cdef int j, a, b
        self.pending[tenant] = 0
        self.att_alive[tenant] = 1
        self.att_epoch[tenant] += 1
        self.att_display[tenant] = self.next_att_display
        self.next_att_display += 1
        self.att_L[tenant] = links
        self.att_deadline[tenant] = gen_deadline
        for j in range(n_nodes):
            self.att_path[base + j] = path[j]
        for j in range(links):
            self.att_gen[genb + j] = 0
            self.att_res[genb + j] = 1 if reserve_now else 0
        for j in range(links + 1):
            self.seg_lo[segb + j] = -1
            self.seg_hi[segb + j] = -1
        if links > self.d_hop[path[0]] + self.d_hop[path[n_nodes - 1]]:
            self.kprime_violations += 1
        if reserve_now:
            for j in range(links):
                a = path[j]; b = path[j + 1]
                self.free_[a] -= 1
                self.free_[b] -= 1
            self.empty_slots += 2 * links
            for j in range(links):
                self._book_gen(tenant, self.att_epoch[tenant], j, gen_from)
        else:
            self._push(t + self.hold_timeout, EV_TIMEOUT, tenant,
                       self.att_epoch[tenant], 0)
        if self.logging:
            self.log.append({
                "t": t, "kind": "schedule", "request": int(self.req_id[tenant]),
                "tenant": tenant, "attempt": int(self.att_display[tenant]),
                "path": [int(path[j]) for j in range(n_nodes)],
                "anchor": anchor, "score": score,
            })

    cdef void _release_attempt(self, int tenant):
        cdef int segb = tenant * (self.maxl + 1)
        cdef int genb = tenant * self.maxl
        cdef int base = tenant * self.maxp
        cdef int x, slot, j
        self.att_alive[tenant] = 0
        for x in range(self.att_L[tenant] + 1):
            slot = self.seg_lo[segb + x]
            if slot >= 0:
                self.seg_hi[segb + self.pr_hi[slot]] = -1
                self.seg_lo[segb + x] = -1
                self._kill_pair(tenant, slot)
        for j in range(self.att_L[tenant]):
            if self.att_res[genb + j] and not self.att_gen[genb + j]:
                self.free_[self.att_path[base + j]] += 1
                self.free_[self.att_path[base + j + 1]] += 1
                self.empty_slots -= 2

    cdef void _localized_update(self, int tenant):
        # failed path's nodes and their one-hop neighbors re-exchange DIOs and
        # re-select parents; everything else stays untouched
        cdef int base = tenant * self.maxp
        cdef int n_nodes = self.att_L[tenant] + 1
        cdef int count = 0
        cdef int i, v, w, pos, u, best
        cdef double occ_ratio, best_rank, r
        self.stamp += 1
        for i in range(n_nodes):
            v = self.att_path[base + i]
            if self.mark_s[v] != self.stamp:
                self.mark_s[v] = self.stamp
                self.buf_aff[count] = v
                count += 1
            for pos in range(self.adj_ptr[v], self.adj_ptr[v + 1]):
                w = self.adj_ids[pos]
                if self.mark_s[w] != self.stamp:
                    self.mark_s[w] = self.stamp
                    self.buf_aff[count] = w
                    count += 1
        # sorted processing order (insertion sort; affected sets are small)
        cdef int key, k
        for i in range(1, count):
            key = self.buf_aff[i]
            k = i - 1
            while k >= 0 and self.buf_aff[k] > key:
                self.buf_aff[k + 1] = self.buf_aff[k]
                k -= 1
            self.buf_aff[k + 1] = key
        for i in range(count):
            v = self.buf_aff[i]
            if self.d_hop[v] > 0:
                occ_ratio = (<double>(self.cap[v] - self.free_[v])) / (<double>self.mem[v])
                self.rank_self[v] = self.d_hop[v] + (
                    self.alpha * (1.0 - self.fv_static[v]) + self.beta * occ_ratio
                ) / (self.alpha + self.beta)
        for i in range(count):
            u = self.buf_aff[i]
            for pos in range(self.adj_ptr[u], self.adj_ptr[u + 1]):
                if self.mark_s[self.adj_ids[pos]] == self.stamp:
                    self.table_rank[self.rev_pos[pos]] = self.rank_self[u]
        for i in range(count):
            v = self.buf_aff[i]
            if self.d_hop[v] > 0:
                best = -1
                best_rank = INFINITY
                for pos in range(self.adj_ptr[v], self.adj_ptr[v + 1]):
                    r = self.table_rank[pos]
                    if r < best_rank:  # adj ids ascend, so first min = lowest id
                        best_rank = r
                        best = self.adj_ids[pos]
                if best >= 0:
                    self.parent[v] = best

    cdef void _attempt_failed(self, int tenant, double t, str reason):
        self._release_attempt(tenant)
        self.req_retries[tenant] += 1
        if self.strategy == 0:
            self._localized_update(tenant)
        if self.req_retries[tenant] > self.retry_cap:
            if t > self.warmup:
                self.failed_w[tenant] += 1
            if self.logging:
                self.log.append({"t": t, "kind": "fail",
                                 "request": int(self.req_id[tenant]), "tenant": tenant,
                                 "reason": reason, "retries": int(self.req_retries[tenant])})
            self._resubmit(tenant, t)
        else:
            self.pending[tenant] = 1
            if self.logging:
                self.log.append({"t": t, "kind": "retry",
                                 "request": int(self.req_id[tenant]), "tenant": tenant,
                                 "reason": reason, "retries": int(self.req_retries[tenant])})
        self._request_pass(t)

    cdef void _deliver(self, int tenant, int slot, double t):
        cdef double fid = _decay(self.pr_fid[slot], t - self.pr_created[slot], self.tau)
        if self.logging:
            self.log.append({"t": t, "kind": "deliver",
                             "request": int(self.req_id[tenant]), "tenant": tenant,
                             "pair": int(self.pr_display[slot]), "fidelity": fid,
                             "swaps": int(self.pr_swaps[slot])})
        self._release_attempt(tenant)
        self.delivered_total += 1
        if t > self.warmup:
            self.delivered += 1
            self.fidelity_sum += fid
            self.served_w[tenant] += 1
            self.fidsum_w[tenant] += fid
        self._resubmit(tenant, t)
        self._request_pass(t)

    # ------------------------------------------------------- pair lifecycle

    cdef void _handle_gen(self, double t, int tenant, long long epoch, int j):
        if not self.att_alive[tenant] or self.att_epoch[tenant] != epoch:
            return
        cdef int base = tenant * self.maxp
        cdef int a = self.att_path[base + j]
        cdef int b = self.att_path[base + j + 1]
        cdef int eid = self._link_of(a, b)
        cdef double u = self.bitgen.next_double(self.bitgen.state)
        cdef double start
        cdef int slot
        if u < self.link_p[eid]:
            slot = self._alloc_pair()
            self.pr_lo[slot] = j
            self.pr_hi[slot] = j + 1
            self.pr_fid[slot] = self.link_f0[eid]
            self.pr_created[slot] = t
            self.pr_ready[slot] = t
            self.pr_swaps[slot] = 0
            self.pr_tenant[slot] = tenant
            self.live_pairs += 1
            self.empty_slots -= 2
            self.att_gen[tenant * self.maxl + j] = 1
            self.seg_lo[tenant * (self.maxl + 1) + j] = slot
            self.seg_hi[tenant * (self.maxl + 1) + j + 1] = slot
            if self.t_co_finite:
                self._push(t + self.t_co, EV_EXPIRE, slot, self.pr_epoch[slot], 0)
            if self.logging:
                self.log.append({"t": t, "kind": "gen",
                                 "request": int(self.req_id[tenant]),
                                 "link": [int(self.link_u[eid]), int(self.link_v[eid])],
                                 "pair": int(self.pr_display[slot]),
                                 "fidelity": self.link_f0[eid]})
            self._merge_scan(tenant, t)
        else:
            if self.logging:
                self.log.append({"t": t, "kind": "gen_fail",
                                 "request": int(self.req_id[tenant]),
                                 "link": [int(self.link_u[eid]), int(self.link_v[eid])]})
            start = t if t > self.link_busy[eid] else self.link_busy[eid]
            if start + self.p_period < self.att_deadline[tenant]:
                self._book_gen(tenant, epoch, j, t)

    cdef inline int _link_of(self, int a, int b) noexcept nogil:
        cdef int pos
        for pos in range(self.adj_ptr[a], self.adj_ptr[a + 1]):
            if self.adj_ids[pos] == b:
                return self.adj_link[pos]
        return -1

    cdef void _unreserve_span(self, int tenant, int lo, int hi):
        cdef int genb = tenant * self.maxl
        cdef int j
        for j in range(lo, hi):
            self.att_res[genb + j] = 0
            self.att_gen[genb + j] = 0

    cdef void _merge_scan(self, int tenant, double t):
        cdef int segb = tenant * (self.maxl + 1)
        cdef int base = tenant * self.maxp
        cdef int L = self.att_L[tenant]
        cdef bint found
        cdef bint respanned = False
        cdef int x, ls, rs, node, lo, hi, slot, swaps
        cdef long long ld, rd
        cdef double u, fid, fl, fr, cl, cr
        while True:
            found = False
            for x in range(1, L):
                ls = self.seg_hi[segb + x]
                rs = self.seg_lo[segb + x]
                if ls < 0 or rs < 0:
                    continue
                if self.pr_ready[ls] > t or self.pr_ready[rs] > t:
                    continue
                node = self.att_path[base + x]
                lo = self.pr_lo[ls]
                hi = self.pr_hi[rs]
                ld = self.pr_display[ls]
                rd = self.pr_display[rs]
                swaps = self.pr_swaps[ls] + self.pr_swaps[rs] + 1
                fl = self.pr_fid[ls]
                fr = self.pr_fid[rs]
                cl = self.pr_created[ls]
                cr = self.pr_created[rs]
                self.seg_lo[segb + self.pr_lo[ls]] = -1
                self.seg_hi[segb + self.pr_hi[ls]] = -1
                self.seg_lo[segb + self.pr_lo[rs]] = -1
                self.seg_hi[segb + self.pr_hi[rs]] = -1
                self._kill_pair(tenant, ls)
                self._kill_pair(tenant, rs)
                u = self.bitgen.next_double(self.bitgen.state)
                if u < self.q_prob:
                    fl = _decay(fl, t - cl, self.tau)
                    fr = _decay(fr, t - cr, self.tau)
                    fid = fl * fr + (1.0 - fl) * (1.0 - fr) / 3.0
                    slot = self._alloc_pair()
                    self.pr_lo[slot] = lo
                    self.pr_hi[slot] = hi
                    self.pr_fid[slot] = fid
                    self.pr_created[slot] = t
                    self.pr_ready[slot] = t + self.lat * (<double>(
                        (x - lo) if (x - lo) > (hi - x) else (hi - x)))
                    self.pr_swaps[slot] = swaps
                    self.pr_tenant[slot] = tenant
                    self.free_[self.att_path[base + lo]] -= 1
                    self.free_[self.att_path[base + hi]] -= 1
                    self.live_pairs += 1
                    self.seg_lo[segb + lo] = slot
                    self.seg_hi[segb + hi] = slot
                    if self.t_co_finite:
                        self._push(t + self.t_co, EV_EXPIRE, slot, self.pr_epoch[slot], 0)
                    self._push(self.pr_ready[slot], EV_READY, slot, self.pr_epoch[slot], 0)
                    if self.logging:
                        self.log.append({"t": t, "kind": "swap_ok", "node": node,
                                         "request": int(self.req_id[tenant]),
                                         "left": int(ld), "right": int(rd),
                                         "pair": int(self.pr_display[slot]),
                                         "fidelity": fid})
                    found = True
                    break
                else:
                    if self.logging:
                        self.log.append({"t": t, "kind": "swap_fail", "node": node,
                                         "request": int(self.req_id[tenant]),
                                         "left": int(ld), "right": int(rd)})
                    if self.strategy == 2:
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
        cdef int head = self.seg_lo[segb + 0]
        if head >= 0 and self.pr_hi[head] == L and self.pr_ready[head] <= t:
            self._deliver(tenant, head, t)

    cdef void _handle_ready(self, double t, int slot, long long epoch):
        if self.pr_alive[slot] and self.pr_epoch[slot] == epoch \
                and self.att_alive[self.pr_tenant[slot]]:
            self._merge_scan(self.pr_tenant[slot], t)

    cdef void _handle_expire(self, double t, int slot, long long epoch):
        cdef int tenant, segb, lo, hi
        if self.pr_alive[slot] and self.pr_epoch[slot] == epoch:
            tenant = self.pr_tenant[slot]
            if self.att_alive[tenant]:
                if self.logging:
                    self.log.append({"t": t, "kind": "expire",
                                     "pair": int(self.pr_display[slot]),
                                     "request": int(self.req_id[tenant])})
                if self.strategy == 2:
                    segb = tenant * (self.maxl + 1)
                    lo = self.pr_lo[slot]
                    hi = self.pr_hi[slot]
                    self.seg_lo[segb + lo] = -1
                    self.seg_hi[segb + hi] = -1
                    self._kill_pair(tenant, slot)
                    self._unreserve_span(tenant, lo, hi)
                    self._request_pass(t)
                else:
                    self._attempt_failed(tenant, t, "expiry")

    # ------------------------------------------------------------ scheduling

    cdef int _nca_of(self, int s, int d) noexcept nogil:
        cdef int v = s
        self.stamp += 1
        while v >= 0:
            self.mark_d[v] = self.stamp
            v = self.parent[v]
        v = d
        while self.mark_d[v] != self.stamp:
            v = self.parent[v]
        return v

    cdef int _collect_pending(self):
        cdef int count = 0
        cdef int i
        for i in range(self.n_tenants):
            if self.pending[i]:
                self.buf_pend[count] = i
                count += 1
        return count

    cdef void _sort_pending(self, int count, int mode):
        # ascending (key, request id); mode 0/1: key = -nca_depth (locality
        # first), mode 2: key = root-path length (nearest wins the race)
        cdef int i, k, key, tenant
        cdef long long dk, ik
        for i in range(count):
            tenant = self.buf_pend[i]
            if mode == 2:
                self.buf_key_depth[i] = self.d_hop[self.ts[tenant]] + self.d_hop[self.td[tenant]]
            else:
                self.buf_key_depth[i] = -(<long long>self.d_hop[
                    self._nca_of(self.ts[tenant], self.td[tenant])])
        for i in range(1, count):
            key = self.buf_pend[i]
            dk = self.buf_key_depth[i]
            ik = self.req_id[key]
            k = i - 1
            while k >= 0 and (
                self.buf_key_depth[k] > dk
                or (self.buf_key_depth[k] == dk and self.req_id[self.buf_pend[k]] > ik)
            ):
                self.buf_pend[k + 1] = self.buf_pend[k]
                self.buf_key_depth[k + 1] = self.buf_key_depth[k]
                k -= 1
            self.buf_pend[k + 1] = key
            self.buf_key_depth[k + 1] = dk
        return

    cdef int _walk_path(self, int s, int d, int anchor, int* out) noexcept nogil:
        """Assemble s..anchor..d into out; returns the node count."""
        cdef int count = 0
        cdef int v = s
        while True:
            out[count] = v
            count += 1
            if v == anchor:
                break
            v = self.parent[v]
        # d-side collected then appended reversed (skipping the anchor)
        cdef int start = count
        v = d
        while v != anchor:
            out[self.maxp - 1 - (count - start)] = v
            count += 1
            v = self.parent[v]
        cdef int tail = count - start
        cdef int i
        for i in range(tail):
            out[start + i] = out[self.maxp - tail + i]
        return count

    cdef int _build_path(self, int s, int d, int anchor, int* out) noexcept nogil:
        """_walk_path plus the saturation / intermediate-memory filters
        against tmp_free; returns 0 when the candidate is discarded."""
        cdef int count = self._walk_path(s, d, anchor, out)
        cdef int i, a, b
        for i in range(count - 1):
            a = out[i]; b = out[i + 1]
            if self.tmp_free[a] < 1 or self.tmp_free[b] < 1:
                return 0
        for i in range(1, count - 1):
            if self.tmp_free[out[i]] < 2:
                return 0
        return count

    cdef double _score_path(self, int* path, int n_nodes, int anchor) noexcept nogil:
        cdef double worst = 0.0, fu, fv, av, congestion
        cdef int i, a, b
        for i in range(n_nodes - 1):
            a = path[i]; b = path[i + 1]
            fu = (<double>self.tmp_free[a]) / (<double>self.mem[a])
            fv = (<double>self.tmp_free[b]) / (<double>self.mem[b])
            av = fu if fu < fv else fv
            if av < 0.0:
                av = 0.0
            elif av >= 1.0:
                av = 1.0
            congestion = 1.0 - av
            if congestion > worst:
                worst = congestion
        return (<double>self.d_hop[anchor] + 1.0) / (1.0 + worst)

    cdef void _reserve_tmp(self, int* path, int n_nodes) noexcept nogil:
        cdef int i
        for i in range(n_nodes - 1):
            self.tmp_free[path[i]] -= 1
            self.tmp_free[path[i + 1]] -= 1

    cdef void _acquire_links(self, double t):
        # greedy per-link acquisition for blocked root-anchored holders;
        # closer pairs re-acquire first, ties by arrival order
        cdef int count = 0
        cdef int i, k, key, tenant, j, a, b, genb, base
        cdef long long dk, ik
        for i in range(self.n_tenants):
            if self.att_alive[i]:
                self.buf_pend[count] = i
                count += 1
        for i in range(count):
            self.buf_key_depth[i] = self.att_L[self.buf_pend[i]]
        for i in range(1, count):
            key = self.buf_pend[i]
            dk = self.buf_key_depth[i]
            ik = self.req_id[key]
            k = i - 1
            while k >= 0 and (
                self.buf_key_depth[k] > dk
                or (self.buf_key_depth[k] == dk and self.req_id[self.buf_pend[k]] > ik)
            ):
                self.buf_pend[k + 1] = self.buf_pend[k]
                self.buf_key_depth[k + 1] = self.buf_key_depth[k]
                k -= 1
            self.buf_pend[k + 1] = key
            self.buf_key_depth[k + 1] = dk
        # hop-by-hop setup: at most one link per attempt per signaling wave;
        # partial holds at bottlenecks block competitors until timeouts fire
        cdef bint incomplete = False
        cdef int jj
        for i in range(count):
            tenant = self.buf_pend[i]
            genb = tenant * self.maxl
            base = tenant * self.maxp
            for j in range(self.att_L[tenant]):
                if self.att_res[genb + j]:
                    continue
                a = self.att_path[base + j]
                b = self.att_path[base + j + 1]
                if self.free_[a] >= 1 and self.free_[b] >= 1:
                    self.free_[a] -= 1
                    self.free_[b] -= 1
                    self.empty_slots += 2
                    self.att_res[genb + j] = 1
                    self._book_gen(tenant, self.att_epoch[tenant], j, t)
                    for jj in range(self.att_L[tenant]):
                        if not self.att_res[genb + jj]:
                            incomplete = True
                            break
                else:
                    incomplete = True
                break
        if incomplete and not self.pass_scheduled:
            self.pass_scheduled = 1
            self._push(t + self.p_period, EV_PASS, 0, 0, 0)

    cdef void _handle_pass(self, double t):
        self.pass_scheduled = 0
        cdef int count = self._collect_pending()
        cdef int i
        cdef int tenant, s, d, anchor, nn, best_nn, best_anchor, cmp_i
        cdef double score, best_score
        cdef bint better
        cdef int* pathbuf = &self.buf_path[0]
        cdef int* bestbuf = &self.buf_best[0]
        if self.strategy == 2:
            if count > 0:
                self._sort_pending(count, 2)
                for i in range(count):
                    tenant = self.buf_pend[i]
                    nn = self._walk_path(self.ts[tenant], self.td[tenant],
                                         self.root, pathbuf)
                    self._start_attempt(tenant, pathbuf, nn, self.root, 0.0, t,
                                        INFINITY, INFINITY, False)
            self._acquire_links(t)
            return
        if count == 0:
            return
        self._sort_pending(count, 0)
        for i in range(self.n):
            self.tmp_free[i] = self.free_[i]
        for i in range(count):
            tenant = self.buf_pend[i]
            s = self.ts[tenant]
            d = self.td[tenant]
            if True:
                # radar-q: best-scoring candidate over all common ancestors
                anchor = self._nca_of(s, d)
                best_nn = 0
                best_score = 0.0
                best_anchor = -1
                while True:
                    nn = self._build_path(s, d, anchor, pathbuf)
                    if nn > 0:
                        score = self._score_path(pathbuf, nn, anchor)
                        better = False
                        if best_nn == 0 or score > best_score:
                            better = True
                        elif score == best_score and nn < best_nn:
                            better = True
                        elif score == best_score and nn == best_nn:
                            for cmp_i in range(nn):
                                if pathbuf[cmp_i] != bestbuf[cmp_i]:
                                    better = pathbuf[cmp_i] < bestbuf[cmp_i]
                                    break
                        if better:
                            best_nn = nn
                            best_score = score
                            best_anchor = anchor
                            for cmp_i in range(nn):
                                bestbuf[cmp_i] = pathbuf[cmp_i]
                    if anchor == self.root:
                        break
                    anchor = self.parent[anchor]
                if best_nn == 0:
                    continue
                self._reserve_tmp(bestbuf, best_nn)
                self._start_attempt(tenant, bestbuf, best_nn, best_anchor, best_score,
                                    t, t, INFINITY, True)

    cdef void _handle_slot_start(self, double t):
        cdef int count = self._collect_pending()
        self._sort_pending(count, 1)
        cdef int i
        for i in range(self.n):
            self.tmp_free[i] = self.free_[i]
        cdef double gen_start = t + self.overhead
        cdef double gen_end = gen_start + self.synch_G * self.p_period
        cdef double deadline = gen_end + 0.5 * self.p_period
        cdef int max_hops = 1
        cdef int tenant, anchor, nn
        cdef double score
        cdef int* pathbuf = &self.buf_path[0]
        assigned = [] if self.logging else None
        # plan first (pure over tmp_free), then start attempts in plan order,
        # mirroring the reference core's schedule-then-start sequencing
        plan = []
        for i in range(count):
            tenant = self.buf_pend[i]
            anchor = self._nca_of(self.ts[tenant], self.td[tenant])
            nn = self._build_path(self.ts[tenant], self.td[tenant], anchor, pathbuf)
            if nn == 0:
                continue
            score = self._score_path(pathbuf, nn, anchor)
            self._reserve_tmp(pathbuf, nn)
            plan.append((tenant, anchor, score, [pathbuf[j] for j in range(nn)]))
            if self.logging:
                assigned.append(int(self.req_id[tenant]))
        if self.logging:
            self.log.append({"t": t, "kind": "slot_start", "assigned": assigned})
        cdef int j
        for tenant, anchor, score, nodes in plan:
            nn = len(nodes)
            for j in range(nn):
                pathbuf[j] = nodes[j]
            self._start_attempt(tenant, pathbuf, nn, anchor, score, t,
                                gen_start, deadline, True)
            if nn - 1 > max_hops:
                max_hops = nn - 1
        cdef double slot_end = gen_end + (max_hops + 1) * self.lat
        self._push(slot_end, EV_SLOT_END, 0, 0, 0)

    cdef void _handle_slot_end(self, double t):
        if self.logging:
            self.log.append({"t": t, "kind": "slot_end"})
        cdef int tenant
        for tenant in range(self.n_tenants):
            if self.att_alive[tenant]:
                if self.logging:
                    self.log.append({"t": t, "kind": "discard",
                                     "request": int(self.req_id[tenant]),
                                     "tenant": tenant})
                self._release_attempt(tenant)
                self.req_retries[tenant] += 1
                if self.req_retries[tenant] > self.retry_cap:
                    if t > self.warmup:
                        self.failed_w[tenant] += 1
                    if self.logging:
                        self.log.append({"t": t, "kind": "fail",
                                         "request": int(self.req_id[tenant]),
                                         "tenant": tenant, "reason": "slot",
                                         "retries": int(self.req_retries[tenant])})
                    self._resubmit(tenant, t)
                else:
                    self.pending[tenant] = 1
        self._push(t, EV_SLOT_START, 0, 0, 0)

    # ------------------------------------------------------------- main loop

    cdef void _check_invariants(self):
        cdef long long occupied = 0
        cdef int v
        for v in range(self.n):
            occupied += self.cap[v] - self.free_[v]
            if self.free_[v] < 0 or self.free_[v] > self.cap[v]:
                raise AssertionError("free-slot count out of range")
        if occupied != 2 * self.live_pairs + self.empty_slots:
            raise AssertionError(
                f"memory conservation violated: occupied {occupied} != "
                f"2*{self.live_pairs} + {self.empty_slots}")

    def run(self):
        cdef int tenant
        for tenant in range(self.n_tenants):
            self._submit(tenant, 0.0)
        if self.strategy == 1:
            self._push(0.0, EV_SLOT_START, 0, 0, 0)
        else:
            self._request_pass(0.0)
        cdef double t
        cdef int kind, c
        cdef long long a, b
        while self.heap_len > 0:
            t = self.hp_t[0]
            kind = self.hp_kind[0]
            a = self.hp_a[0]
            b = self.hp_b[0]
            c = self.hp_c[0]
            self._pop()
            if t > self.total:
                break
            if self.debug and t < self.clock:
                raise AssertionError("event processed out of timestamp order")
            self.clock = t
            self.events += 1
            if kind == EV_GEN:
                self._handle_gen(t, <int>a, b, c)
            elif kind == EV_READY:
                self._handle_ready(t, <int>a, b)
            elif kind == EV_EXPIRE:
                self._handle_expire(t, <int>a, b)
            elif kind == EV_PASS:
                self._handle_pass(t)
            elif kind == EV_SLOT_START:
                self._handle_slot_start(t)
            elif kind == EV_SLOT_END:
                self._handle_slot_end(t)
            elif kind == EV_SUBMIT:
                self._submit(<int>a, t)
                self._request_pass(t)
            elif kind == EV_TIMEOUT:
                if self.att_alive[<int>a] and self.att_epoch[<int>a] == b:
                    if self.logging:
                        self.log.append({"t": t, "kind": "timeout",
                                         "request": int(self.req_id[<int>a]),
                                         "tenant": <int>a})
                    self._attempt_failed(<int>a, t, "timeout")
            if self.debug:
                self._check_invariants()
        return {
            "delivered": int(self.delivered),
            "fidelity_sum": float(self.fidelity_sum),
            "served_by_tenant": [int(x) for x in self.served_w],
            "failed_by_tenant": [int(x) for x in self.failed_w],
            "fid_sum_by_tenant": [float(x) for x in self.fidsum_w],
            "delivered_total": int(self.delivered_total),
            "events": int(self.events),
            "kprime_violations": int(self.kprime_violations),
            "event_log": self.log,
        }


def run_core(setup):
    """Execute one prepared run on the compiled core."""
    sim = SpeedSim(setup)
    out = sim.run()
    from .engine import CoreResult

    return CoreResult(**out)


def draw_doubles(bit_generator, int count):
    """Draw raw doubles from a BitGenerator capsule (test hook: must match
    numpy.random.Generator.random() draw for draw)."""
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator")
    out = np.empty(count, dtype=np.float64)
    cdef double[::1] view = out
    cdef int i
    for i in range(count):
        view[i] = bg.next_double(bg.state)
    return out
