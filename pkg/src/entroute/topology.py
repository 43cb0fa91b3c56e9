"""Physical network graphs: grid and random topologies with per-node memory
and per-link generation parameters."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

WERNER_FLOOR = 0.25

NODE_ROLES = ("user", "repeater")


@dataclass(frozen=True)
class NodeSpec:
    """A network node: id, qubit memory slots, informational role."""

    id: int
    memory_capacity: int
    role: str = "repeater"


@dataclass(frozen=True)
class LinkSpec:
    """Undirected link (u, v) with generation probability and initial fidelity.

    Endpoints are kept canonically ordered u < v.
    """

    u: int
    v: int
    gen_prob: float
    init_fidelity: float

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.u, self.v)


@dataclass(frozen=True)
class GraphDefaults:
    """Uniform per-link (p, F0) and per-node memory used by the generators."""

    gen_prob: float = 0.8
    init_fidelity: float = 0.95
    memory: int = 4


class NetworkGraph:
    """Immutable undirected topology with an adjacency index.

    Nodes are integer ids 0..n-1. At most one link per node pair.
    """

    def __init__(self, nodes: Iterable[NodeSpec], links: Iterable[LinkSpec]):
        self.nodes: dict[int, NodeSpec] = {n.id: n for n in nodes}
        self.links: list[LinkSpec] = []
        self._link_index: dict[tuple[int, int], int] = {}
        adjacency: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for link in links:
            a, b = link.endpoints
            if a > b:
                a, b = b, a
                link = LinkSpec(a, b, link.gen_prob, link.init_fidelity)
            if (a, b) in self._link_index:
                raise ValueError(f"duplicate link ({a}, {b})")
            self._link_index[(a, b)] = len(self.links)
            self.links.append(link)
            if a in adjacency:
                adjacency[a].append(b)
            if b in adjacency:
                adjacency[b].append(a)
        self.adjacency: dict[int, tuple[int, ...]] = {
            nid: tuple(sorted(nbrs)) for nid, nbrs in adjacency.items()
        }

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def neighbors(self, node_id: int) -> tuple[int, ...]:
        return self.adjacency[node_id]

    def link_id(self, u: int, v: int) -> int:
        """Index of the (u, v) link in self.links; KeyError if absent."""
        return self._link_index[(u, v) if u < v else (v, u)]

    def link_between(self, u: int, v: int) -> LinkSpec:
        return self.links[self.link_id(u, v)]

    def has_link(self, u: int, v: int) -> bool:
        return ((u, v) if u < v else (v, u)) in self._link_index

    def memory_of(self, node_id: int) -> int:
        return self.nodes[node_id].memory_capacity

    # -- serialization (reproducibility snapshots) --------------------------
    # Field names: nodes[{id, memory, role}], links[{u, v, gen_prob, fidelity}].

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n.id, "memory": n.memory_capacity, "role": n.role}
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
            "links": [
                {"u": l.u, "v": l.v, "gen_prob": l.gen_prob, "fidelity": l.init_fidelity}
                for l in sorted(self.links, key=lambda l: (l.u, l.v))
            ],
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkGraph":
        nodes = [NodeSpec(d["id"], d["memory"], d.get("role", "repeater")) for d in data["nodes"]]
        links = [LinkSpec(d["u"], d["v"], d["gen_prob"], d["fidelity"]) for d in data["links"]]
        return cls(nodes, links)

    @classmethod
    def from_text(cls, text: str) -> "NetworkGraph":
        return cls.from_dict(json.loads(text))


def build_grid(rows: int, cols: int, defaults: GraphDefaults = GraphDefaults()) -> NetworkGraph:
    """4-neighbor lattice of rows x cols nodes, node id = r*cols + c."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    nodes = [NodeSpec(r * cols + c, defaults.memory) for r in range(rows) for c in range(cols)]
    links = []
    for r in range(rows):
        for c in range(cols):
            nid = r * cols + c
            if c + 1 < cols:
                links.append(LinkSpec(nid, nid + 1, defaults.gen_prob, defaults.init_fidelity))
            if r + 1 < rows:
                links.append(LinkSpec(nid, nid + cols, defaults.gen_prob, defaults.init_fidelity))
    return NetworkGraph(nodes, links)


def _tree_from_pruefer(seq: list[int], n: int) -> list[tuple[int, int]]:
    """Decode a Pruefer sequence into the edge list of the labeled tree."""
    degree = [1] * n
    for a in seq:
        degree[a] += 1
    import heapq

    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for a in seq:
        leaf = heapq.heappop(leaves)
        edges.append((min(leaf, a), max(leaf, a)))
        degree[a] -= 1
        if degree[a] == 1:
            heapq.heappush(leaves, a)
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((min(u, v), max(u, v)))
    return edges


def build_random(
    n: int,
    avg_degree: float,
    seed: int,
    defaults: GraphDefaults = GraphDefaults(),
) -> NetworkGraph:
    """Connected random graph with round(n*avg_degree/2) links.

    A uniform random spanning tree (drawn via a random Pruefer sequence) fixes
    connectivity; the remaining links are sampled uniformly without replacement
    from the unused node pairs. Deterministic for a fixed seed.
    """
    if n < 2:
        raise ValueError("random graph needs n >= 2")
    m = round(n * avg_degree / 2)
    if m < n - 1:
        raise ValueError(f"edge count {m} cannot yield a connected graph on {n} nodes")
    if m > n * (n - 1) // 2:
        raise ValueError(f"edge count {m} exceeds the {n*(n-1)//2} possible pairs")
    rng = np.random.default_rng(seed)
    if n == 2:
        tree_edges = [(0, 1)]
    else:
        seq = [int(x) for x in rng.integers(0, n, size=n - 2)]
        tree_edges = _tree_from_pruefer(seq, n)
    tree_set = set(tree_edges)
    extra_needed = m - (n - 1)
    edges = list(tree_edges)
    if extra_needed:
        candidates = [
            (u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in tree_set
        ]
        order = rng.permutation(len(candidates))
        edges.extend(candidates[i] for i in order[:extra_needed])
    nodes = [NodeSpec(i, defaults.memory) for i in range(n)]
    links = [LinkSpec(u, v, defaults.gen_prob, defaults.init_fidelity) for u, v in sorted(edges)]
    return NetworkGraph(nodes, links)


def _connected(graph: NetworkGraph) -> bool:
    if graph.n_nodes == 0:
        return False
    start = next(iter(graph.nodes))
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in graph.neighbors(v):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == graph.n_nodes


def validate(graph: NetworkGraph) -> list[str]:
    """Check all type invariants plus connectivity; violations are data."""
    violations = []
    for node in graph.nodes.values():
        if node.memory_capacity < 1:
            violations.append(f"node {node.id}: memory capacity {node.memory_capacity} < 1")
        if node.role not in NODE_ROLES:
            violations.append(f"node {node.id}: unknown role {node.role!r}")
    seen_pairs = set()
    for link in graph.links:
        u, v = link.endpoints
        if u == v:
            violations.append(f"link ({u}, {v}): endpoints not distinct")
        if (u, v) in seen_pairs:
            violations.append(f"link ({u}, {v}): duplicated")
        seen_pairs.add((u, v))
        if u not in graph.nodes or v not in graph.nodes:
            violations.append(f"link ({u}, {v}): endpoint not a known node")
        if not 0.0 <= link.gen_prob <= 1.0:
            violations.append(f"link ({u}, {v}): gen_prob {link.gen_prob} outside [0, 1]")
        if not WERNER_FLOOR <= link.init_fidelity <= 1.0:
            violations.append(
                f"link ({u}, {v}): fidelity {link.init_fidelity} outside [{WERNER_FLOOR}, 1]"
            )
    if graph.n_nodes and not _connected(graph):
        violations.append("graph is not connected")
    return violations


def bfs_depths(graph: NetworkGraph, root: int) -> dict[int, int]:
    """Hop distance from root to every reachable node."""
    depth = {root: 0}
    frontier = [root]
    while frontier:
        nxt = []
        for v in frontier:
            for w in graph.neighbors(v):
                if w not in depth:
                    depth[w] = depth[v] + 1
                    nxt.append(w)
        frontier = nxt
    return depth


def graph_diameter(graph: NetworkGraph) -> int:
    return max(max(bfs_depths(graph, v).values()) for v in graph.nodes)


def pick_center_root(graph: NetworkGraph) -> int:
    """Node of minimum eccentricity; ties broken by lowest id."""
    best = None
    for v in sorted(graph.nodes):
        ecc = max(bfs_depths(graph, v).values())
        if best is None or ecc < best[0]:
            best = (ecc, v)
    return best[1]
