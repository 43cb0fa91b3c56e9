"""Per-node DODAG state: rank computation, parent selection, synchronous-round
convergence, ancestor discovery, and failure-triggered localized repair.

Every node acts on local information only: advertisements heard from physical
neighbors plus the fidelities of its own links.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .topology import NetworkGraph

DODAG_VERSION = 0


class ConvergenceError(RuntimeError):
    """Raised when rank propagation fails to settle within the round bound."""


class MessageKind(Enum):
    DIO = "DIO"
    DIS = "DIS"
    DAO = "DAO"


@dataclass(frozen=True)
class ControlMessage:
    kind: MessageKind
    origin: int
    payload: dict


@dataclass(frozen=True)
class NeighborAdvert:
    """Last (rank, F, Q/M) heard from a neighbor via DIO."""

    rank: float
    fidelity: float
    occupancy_ratio: float


@dataclass
class DodagNodeState:
    node_id: int
    memory: int
    rank: float = math.inf
    d_hop: int = -1
    preferred_parent: Optional[int] = None
    avg_parent_fidelity: float = 1.0
    occupancy: int = 0
    neighbor_table: dict[int, NeighborAdvert] = field(default_factory=dict)
    descendant_routes: set[int] = field(default_factory=set)

    @property
    def joined(self) -> bool:
        return self.d_hop >= 0

    @property
    def occupancy_ratio(self) -> float:
        return self.occupancy / self.memory


def compute_rank(
    d_hop: int,
    parent_fidelity: float,
    occupancy_ratio: float,
    alpha: float = 1.0,
    beta: float = 1.0,
) -> float:
    """Composite rank: hop depth plus a bounded quality/contention penalty."""
    if d_hop < 0:
        raise ValueError(f"d_hop must be non-negative, got {d_hop}")
    if not 0.0 <= parent_fidelity <= 1.0:
        raise ValueError(f"parent fidelity {parent_fidelity} outside [0, 1]")
    if not 0.0 <= occupancy_ratio <= 1.0:
        raise ValueError(f"occupancy ratio {occupancy_ratio} outside [0, 1]")
    if alpha <= 0.0 or beta <= 0.0:
        raise ValueError("alpha and beta must be positive")
    return d_hop + (alpha * (1.0 - parent_fidelity) + beta * occupancy_ratio) / (alpha + beta)


def select_parent(state: DodagNodeState) -> Optional[int]:
    """Neighbor advertising the lowest rank; ties to the lowest node id."""
    if not state.neighbor_table:
        return None
    return min(state.neighbor_table, key=lambda nid: (state.neighbor_table[nid].rank, nid))


def _dio(state: DodagNodeState) -> ControlMessage:
    return ControlMessage(
        MessageKind.DIO,
        state.node_id,
        {
            "rank": state.rank,
            "version": DODAG_VERSION,
            "fidelity": state.avg_parent_fidelity,
            "occupancy_ratio": state.occupancy_ratio,
        },
    )


def _absorb_dio(state: DodagNodeState, msg: ControlMessage) -> None:
    state.neighbor_table[msg.origin] = NeighborAdvert(
        msg.payload["rank"], msg.payload["fidelity"], msg.payload["occupancy_ratio"]
    )


def _candidate_parent_fidelity(graph: NetworkGraph, state: DodagNodeState, d_hop: int) -> float:
    """Mean fidelity of links to candidate parents (strictly shallower rank floor)."""
    fids = [
        graph.link_between(state.node_id, nid).init_fidelity
        for nid in sorted(state.neighbor_table)
        if math.floor(state.neighbor_table[nid].rank) < d_hop
    ]
    if not fids:
        raise ConvergenceError(f"node {state.node_id} has no candidate parents at depth {d_hop}")
    return sum(fids) / len(fids)


def converge_dodag(
    graph: NetworkGraph,
    root: int,
    alpha: float = 1.0,
    beta: float = 1.0,
) -> dict[int, DodagNodeState]:
    """Run DIS/DIO rounds until no node changes, then propagate DAOs.

    Occupancy is zero during setup (no live pairs yet), so ranks reflect hop
    depth and link quality. Raises ConvergenceError if the graph does not
    settle within |V| + 2 rounds (an invariant bug, not an expected outcome).
    """
    if root not in graph.nodes:
        raise ValueError(f"root {root} is not a node")
    states = {nid: DodagNodeState(nid, graph.memory_of(nid)) for nid in sorted(graph.nodes)}
    root_state = states[root]
    root_state.rank = 0.0
    root_state.d_hop = 0
    root_state.avg_parent_fidelity = 1.0

    for _ in range(graph.n_nodes + 2):
        # Soliciting nodes multicast DIS; every joined node answers with a DIO
        # built from its state at the start of the round.
        dios = [_dio(states[nid]) for nid in sorted(states) if states[nid].joined]
        for msg in dios:
            for nbr in graph.neighbors(msg.origin):
                _absorb_dio(states[nbr], msg)
        changed = False
        for nid in sorted(states):
            state = states[nid]
            if nid == root or not state.neighbor_table:
                continue
            parent = select_parent(state)
            d_hop = math.floor(state.neighbor_table[parent].rank) + 1
            fidelity = _candidate_parent_fidelity(graph, state, d_hop)
            rank = compute_rank(d_hop, fidelity, state.occupancy_ratio, alpha, beta)
            if (parent, d_hop, rank) != (state.preferred_parent, state.d_hop, state.rank):
                state.preferred_parent = parent
                state.d_hop = d_hop
                state.avg_parent_fidelity = fidelity
                state.rank = rank
                changed = True
        if not changed and all(states[nid].joined for nid in states):
            break
    else:
        raise ConvergenceError(f"DODAG did not converge within {graph.n_nodes + 2} rounds")

    # DAO phase (storing mode): each node reports reachability up its parent
    # chain; every ancestor caches the downward route.
    for nid in sorted(states):
        dao = ControlMessage(MessageKind.DAO, nid, {"descendants": [nid]})
        hop = states[nid].preferred_parent
        while hop is not None:
            states[hop].descendant_routes.update(dao.payload["descendants"])
            hop = states[hop].preferred_parent
    return states


def root_path(v: int, states: Mapping[int, DodagNodeState]) -> list[int]:
    """Parent-pointer chain [v, ..., root]; a node is its own ancestor."""
    path = [v]
    hop = states[v].preferred_parent
    while hop is not None:
        path.append(hop)
        if len(path) > len(states):
            raise ConvergenceError(f"parent loop detected walking up from {v}")
        hop = states[hop].preferred_parent
    return path


def find_common_ancestors(
    s: int, d: int, states: Mapping[int, DodagNodeState]
) -> list[int]:
    """All nodes on both root paths, deepest first; last entry is the root."""
    on_d = set(root_path(d, states))
    return [v for v in root_path(s, states) if v in on_d]


def upward_path(v: int, ancestor: int, states: Mapping[int, DodagNodeState]) -> list[int]:
    """Parent chain from v to ancestor inclusive; fails if ancestor is not above v."""
    path = [v]
    while path[-1] != ancestor:
        hop = states[path[-1]].preferred_parent
        if hop is None:
            raise ValueError(f"{ancestor} is not on the root path of {v}")
        path.append(hop)
    return path


def nca_depth(s: int, d: int, states: Mapping[int, DodagNodeState]) -> int:
    return states[find_common_ancestors(s, d, states)[0]].d_hop


def localized_update(
    failed_path,
    states: Mapping[int, DodagNodeState],
    graph: NetworkGraph,
    occupancy: Mapping[int, int],
    alpha: float = 1.0,
    beta: float = 1.0,
) -> Mapping[int, DodagNodeState]:
    """Failure-triggered repair: the failed path's nodes and their one-hop
    neighbors re-exchange DIOs (fresh occupancy) and re-run parent selection.
    Nodes outside that set are untouched. Returns the (mutated) states map.

    Downward-route caches are left as-is; they refresh with the next DAO
    exchange and nothing on the scheduling path consults them.
    """
    path_nodes = getattr(failed_path, "node_sequence", failed_path)
    affected = set(path_nodes)
    for v in path_nodes:
        affected.update(graph.neighbors(v))
    affected_sorted = sorted(affected)

    for v in affected_sorted:
        state = states[v]
        state.occupancy = occupancy[v]
        if state.d_hop > 0:
            state.rank = compute_rank(
                state.d_hop, state.avg_parent_fidelity, state.occupancy_ratio, alpha, beta
            )
    for u in affected_sorted:
        msg = _dio(states[u])
        for nbr in graph.neighbors(u):
            if nbr in affected:
                _absorb_dio(states[nbr], msg)
    for v in affected_sorted:
        state = states[v]
        if state.d_hop > 0 and state.neighbor_table:
            state.preferred_parent = select_parent(state)
    return states


def dump_states(states: Mapping[int, DodagNodeState]) -> str:
    """One line per node: node, rank, parent, d_hop (for debugging/goldens)."""
    lines = ["# node\trank\tparent\td_hop"]
    for nid in sorted(states):
        st = states[nid]
        parent = "-" if st.preferred_parent is None else str(st.preferred_parent)
        lines.append(f"{nid}\t{st.rank:.6f}\t{parent}\t{st.d_hop}")
    return "\n".join(lines) + "\n"
