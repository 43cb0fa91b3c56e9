"""Routing strategies behind one interface: contention-aware NCA routing
("radar-q"), the synchronous globally-scheduled NCA baseline ("synch-nca"),
and the root-anchored asynchronous baseline ("asynch-root").

Schedulers are pure functions of (pending requests, view snapshot). They
account for their own tentative reservations while assigning, so a returned
schedule never over-books memory; the engine performs the actual reservations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

from . import dodag
from .dodag import DodagNodeState
from .topology import NetworkGraph

STRATEGY_NAMES = ("radar-q", "synch-nca", "asynch-root")


class RequestStatus(Enum):
    PENDING = "pending"
    SERVED = "served"
    FAILED = "failed"


@dataclass
class Request:
    """One S-D entanglement demand; tenant is the closed-loop slot it refills."""

    id: int
    source: int
    dest: int
    submitted_at: float
    status: RequestStatus = RequestStatus.PENDING
    tenant: int = 0
    retries: int = 0

    def __post_init__(self):
        if self.source == self.dest:
            raise ValueError("request endpoints must differ")


@dataclass(frozen=True)
class RoutePath:
    """A concrete ancestor-anchored path s .. anchor .. d."""

    anchor: int
    anchor_depth: int
    node_sequence: tuple[int, ...]
    score: float
    request_id: Optional[int] = None

    @property
    def link_sequence(self) -> tuple[tuple[int, int], ...]:
        seq = self.node_sequence
        return tuple(
            (a, b) if a < b else (b, a) for a, b in zip(seq, seq[1:])
        )

    @property
    def hops(self) -> int:
        return len(self.node_sequence) - 1

    @property
    def bsm_depth(self) -> int:
        """Intermediate BSM operations k = |nodes| - 2."""
        return len(self.node_sequence) - 2


@dataclass
class SchedulerView:
    """Snapshot handed to a scheduler: topology, converged per-node states,
    live free memory slots per node, and the DODAG root."""

    graph: NetworkGraph
    states: dict[int, DodagNodeState]
    free_slots: Sequence[int]
    root: int


def link_availability(u: int, v: int, free_slots: Sequence[int], graph: NetworkGraph) -> float:
    """Instantaneous avail(e): worst endpoint free-slot ratio, 0 iff saturated."""
    fu = free_slots[u] / graph.memory_of(u)
    fv = free_slots[v] / graph.memory_of(v)
    a = fu if fu < fv else fv
    if a < 0.0:
        return 0.0
    return a if a < 1.0 else 1.0


def score_path(path: RoutePath, avail: Callable[[int, int], float]) -> float:
    """Contention-aware metric: locality reward over worst-link congestion."""
    worst = 0.0
    for a, b in path.link_sequence:
        congestion = 1.0 - avail(a, b)
        if congestion > worst:
            worst = congestion
    return (path.anchor_depth + 1.0) / (1.0 + worst)


def _build_path(
    source: int,
    dest: int,
    anchor: int,
    view: SchedulerView,
    free: Sequence[int],
) -> Optional[RoutePath]:
    """Assemble s->anchor->d and apply the saturation/memory filters.

    Returns None when any link is saturated (avail = 0) or an intermediate
    node cannot hold both transit qubits.
    """
    up_s = dodag.upward_path(source, anchor, view.states)
    up_d = dodag.upward_path(dest, anchor, view.states)
    seq = tuple(up_s + up_d[::-1][1:])
    for a, b in zip(seq, seq[1:]):
        if free[a] < 1 or free[b] < 1:
            return None
    for mid in seq[1:-1]:
        if free[mid] < 2:
            return None
    path = RoutePath(anchor, view.states[anchor].d_hop, seq, 0.0)
    score = score_path(path, lambda a, b: link_availability(a, b, free, view.graph))
    return replace(path, score=score)


def generate_candidate_paths(
    source: int,
    dest: int,
    view: SchedulerView,
    free: Optional[Sequence[int]] = None,
) -> list[RoutePath]:
    """One candidate per common ancestor, deepest first, already filtered."""
    if source == dest:
        raise ValueError("source and destination must differ")
    if free is None:
        free = view.free_slots
    candidates = []
    for anchor in dodag.find_common_ancestors(source, dest, view.states):
        path = _build_path(source, dest, anchor, view, free)
        if path is not None:
            candidates.append(path)
    return candidates


def _best_candidate(candidates: list[RoutePath]) -> RoutePath:
    # Argmax of the score; ties prefer fewer BSMs, then the lexicographically
    # smallest node sequence (determinism).
    best = candidates[0]
    for cand in candidates[1:]:
        if (
            cand.score > best.score
            or (cand.score == best.score and cand.bsm_depth < best.bsm_depth)
            or (
                cand.score == best.score
                and cand.bsm_depth == best.bsm_depth
                and cand.node_sequence < best.node_sequence
            )
        ):
            best = cand
    return best


def _reserve(path: RoutePath, free: list[int]) -> None:
    for a, b in path.link_sequence:
        free[a] -= 1
        free[b] -= 1


def radar_q_schedule(
    requests: Sequence[Request], view: SchedulerView
) -> list[tuple[Request, RoutePath]]:
    """Locality-first contention-aware assignment.

    Requests are served deepest-NCA first (ties by request id); each gets its
    best-scoring surviving candidate or stays pending for the next pass.
    """
    order = sorted(
        requests,
        key=lambda r: (-dodag.nca_depth(r.source, r.dest, view.states), r.id),
    )
    free = list(view.free_slots)
    schedule = []
    for req in order:
        candidates = generate_candidate_paths(req.source, req.dest, view, free)
        if not candidates:
            continue
        best = replace(_best_candidate(candidates), request_id=req.id)
        _reserve(best, free)
        schedule.append((req, best))
    return schedule


def asynch_root_schedule(
    requests: Sequence[Request], view: SchedulerView
) -> list[tuple[Request, RoutePath]]:
    """Root-anchored baseline: every request is assigned the single path
    s->root->d regardless of contention (no saturation filtering, no
    coordination). The engine then acquires the path's memory slots link by
    link as they free up, holding what it has while blocked; requests whose
    endpoints sit closer to the root win the re-acquisition race (their
    release notifications and reservation round trips traverse fewer hops),
    ties by arrival order."""
    schedule = []
    order = sorted(
        requests,
        key=lambda r: (view.states[r.source].d_hop + view.states[r.dest].d_hop, r.id),
    )
    for req in order:
        up_s = dodag.upward_path(req.source, view.root, view.states)
        up_d = dodag.upward_path(req.dest, view.root, view.states)
        seq = tuple(up_s + up_d[::-1][1:])
        path = RoutePath(view.root, 0, seq, 0.0, request_id=req.id)
        schedule.append((req, path))
    return schedule


def synch_nca_schedule(
    requests: Sequence[Request], view: SchedulerView
) -> list[tuple[Request, RoutePath]]:
    """Central slot plan with global knowledge: deepest-NCA paths assigned
    greedily in descending NCA depth; requests whose path would overflow any
    node's remaining capacity are deferred to a later slot."""
    order = sorted(
        requests,
        key=lambda r: (-dodag.nca_depth(r.source, r.dest, view.states), r.id),
    )
    free = list(view.free_slots)
    schedule = []
    for req in order:
        anchor = dodag.find_common_ancestors(req.source, req.dest, view.states)[0]
        path = _build_path(req.source, req.dest, anchor, view, free)
        if path is None:
            continue
        path = replace(path, request_id=req.id)
        _reserve(path, free)
        schedule.append((req, path))
    return schedule


SCHEDULERS = {
    "radar-q": radar_q_schedule,
    "synch-nca": synch_nca_schedule,
    "asynch-root": asynch_root_schedule,
}
