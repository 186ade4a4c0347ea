"""Core graph data model: topologies, shortest paths, validation, file I/O.

All other modules operate on :class:`Topology` and :class:`Path`. Topologies
are immutable after construction and safe to share between threads.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field


class TopologyError(ValueError):
    """Raised for malformed or invalid topology input."""


def canonical_edge(u: int, v: int) -> tuple[int, int]:
    """Undirected edge key: unordered pair stored as (min, max)."""
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True)
class Path:
    """Ordered node sequence with its total latency in microseconds."""

    nodes: tuple[int, ...]
    total_latency: float

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [canonical_edge(a, b) for a, b in zip(self.nodes, self.nodes[1:])]


@dataclass(frozen=True)
class Topology:
    """Undirected weighted switch graph.

    Node ids are contiguous 1..n internally; ``original_ids`` maps them back
    to whatever ids the source file used. Latencies are microseconds and
    strictly positive; capacities are traffic units per slot.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    latency: dict[tuple[int, int], float]
    capacity: dict[int, float]
    original_ids: dict[int, object] = field(default_factory=dict)

    def __post_init__(self):
        adj: dict[int, list[tuple[int, float]]] = {v: [] for v in self.nodes}
        for (u, v) in self.edges:
            t = self.latency[(u, v)]
            adj[u].append((v, t))
            adj[v].append((u, t))
        for v in adj:
            adj[v].sort()
        object.__setattr__(self, "_adj", adj)

    @property
    def nodes(self) -> range:
        return range(1, self.n + 1)

    def neighbors(self, v: int) -> list[tuple[int, float]]:
        """Sorted (neighbor, latency) pairs of ``v``."""
        return self._adj[v]

    def has_edge(self, u: int, v: int) -> bool:
        return canonical_edge(u, v) in self.latency

    def edge_latency(self, u: int, v: int) -> float:
        return self.latency[canonical_edge(u, v)]

    def degree(self, v: int) -> int:
        return len(self._adj[v])


def _components(n: int, adj_of) -> list[set[int]]:
    seen: set[int] = set()
    comps = []
    for start in range(1, n + 1):
        if start in seen:
            continue
        comp = {start}
        stack = [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            for w in adj_of(u):
                if w not in comp:
                    comp.add(w)
                    seen.add(w)
                    stack.append(w)
        comps.append(comp)
    return comps


def validate(topo: Topology) -> list[str]:
    """Diagnostics for every violated Topology invariant; empty list if valid."""
    diags = []
    for (u, v), t in topo.latency.items():
        if not (t > 0) or t != t or t == float("inf"):
            diags.append(f"non-positive-latency({u},{v})")
    for v in topo.nodes:
        cap = topo.capacity.get(v)
        if cap is None:
            diags.append(f"missing-capacity({v})")
        elif not (cap > 0):
            diags.append(f"non-positive-capacity({v})")
    comps = _components(topo.n, lambda u: [w for w, _ in topo.neighbors(u)])
    if len(comps) > 1:
        diags.append("disconnected")
    return diags


def load_topology(text: str) -> Topology:
    """Parse the edge-list topology format.

    Format (whitespace separated, ``#`` starts a comment)::

        nodes <n>
        cap <id> <capacity>     # one per node
        edge <u> <v> <latency_us>

    Original node ids may be arbitrary integers; they are remapped to 1..n.
    """
    n_declared = None
    caps: dict[object, float] = {}
    raw_edges: list[tuple[object, object, float]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "nodes":
                n_declared = int(parts[1])
            elif parts[0] == "cap":
                caps[int(parts[1])] = float(parts[2])
            elif parts[0] == "edge":
                raw_edges.append((int(parts[1]), int(parts[2]), float(parts[3])))
            else:
                raise TopologyError(f"line {lineno}: unknown directive {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, TopologyError):
                raise
            raise TopologyError(f"line {lineno}: cannot parse {line!r}") from exc
    if n_declared is None:
        raise TopologyError("missing 'nodes' header")
    ids = sorted(caps)
    if len(ids) != n_declared:
        raise TopologyError(
            f"declared {n_declared} nodes but found {len(ids)} cap lines"
        )
    remap = {orig: i for i, orig in enumerate(ids, 1)}
    latency: dict[tuple[int, int], float] = {}
    for u_raw, v_raw, t in raw_edges:
        if u_raw not in remap or v_raw not in remap:
            raise TopologyError(f"edge ({u_raw},{v_raw}) references unknown node")
        if u_raw == v_raw:
            raise TopologyError(f"self-loop on node {u_raw}")
        e = canonical_edge(remap[u_raw], remap[v_raw])
        if e in latency:
            raise TopologyError(f"duplicate edge ({u_raw},{v_raw})")
        if not (t > 0):
            raise TopologyError(f"non-positive latency on edge ({u_raw},{v_raw})")
        latency[e] = t
    for orig, cap in caps.items():
        if not (cap > 0):
            raise TopologyError(f"non-positive capacity on node {orig}")
    edges = tuple(sorted(latency))
    topo = Topology(
        n=n_declared,
        edges=edges,
        latency=latency,
        capacity={remap[o]: caps[o] for o in ids},
        original_ids={i: o for o, i in remap.items()},
    )
    diags = validate(topo)
    if diags:
        raise TopologyError("; ".join(diags))
    return topo


def dump_topology(topo: Topology) -> str:
    """Serialize a topology; exact inverse of :func:`load_topology`."""
    lines = [f"nodes {topo.n}"]
    for v in topo.nodes:
        orig = topo.original_ids.get(v, v)
        lines.append(f"cap {orig} {topo.capacity[v]!r}")
    for (u, v) in topo.edges:
        ou, ov = topo.original_ids.get(u, u), topo.original_ids.get(v, v)
        lines.append(f"edge {ou} {ov} {topo.latency[(u, v)]!r}")
    return "\n".join(lines) + "\n"


def shortest_path(topo: Topology, src: int, dst: int) -> Path:
    """Minimum-latency path from src to dst.

    Ties are broken toward the lexicographically smallest node sequence so
    every downstream consumer sees deterministic routes.
    """
    if src == dst:
        return Path(nodes=(src,), total_latency=0.0)
    # Heap entries carry the full path tuple: comparing (dist, path) picks the
    # lexicographically smallest sequence among equal-latency candidates.
    best: dict[int, tuple[float, tuple[int, ...]]] = {}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in best and best[node] <= (dist, path):
            continue
        best[node] = (dist, path)
        if node == dst:
            continue
        for w, t in topo.neighbors(node):
            cand = (dist + t, path + (w,))
            if w not in best or cand < best[w]:
                heapq.heappush(heap, cand)
    dist, path = best[dst]
    return Path(nodes=path, total_latency=dist)


def shortest_path_avoiding(
    topo: Topology,
    src: int,
    dst: int,
    forbidden_edges: set[tuple[int, int]] = frozenset(),
    forbidden_nodes: set[int] = frozenset(),
) -> Path | None:
    """Shortest src->dst path avoiding given edges and interior nodes.

    Returns None when no such path exists. Endpoints are never treated as
    forbidden interior nodes. Same tie-breaking as :func:`shortest_path`.
    """
    if src == dst:
        return Path(nodes=(src,), total_latency=0.0)
    best: dict[int, tuple[float, tuple[int, ...]]] = {}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in best and best[node] <= (dist, path):
            continue
        best[node] = (dist, path)
        if node == dst:
            continue
        for w, t in topo.neighbors(node):
            if canonical_edge(node, w) in forbidden_edges:
                continue
            if w != dst and w in forbidden_nodes:
                continue
            cand = (dist + t, path + (w,))
            if w not in best or cand < best[w]:
                heapq.heappush(heap, cand)
    if dst not in best:
        return None
    dist, path = best[dst]
    return Path(nodes=path, total_latency=dist)


def random_topology(
    n: int,
    extra_edge_prob: float = 0.3,
    seed: int = 0,
    latency_range: tuple[float, float] = (1.0, 20.0),
    capacity: float = 100.0,
) -> Topology:
    """Random connected topology: random spanning tree plus extra edges."""
    rng = random.Random(seed)
    latency: dict[tuple[int, int], float] = {}
    order = list(range(1, n + 1))
    rng.shuffle(order)
    lo, hi = latency_range
    for i in range(1, n):
        u = order[i]
        v = order[rng.randrange(i)]
        latency[canonical_edge(u, v)] = round(rng.uniform(lo, hi), 1)
    for u in range(1, n + 1):
        for v in range(u + 1, n + 1):
            if (u, v) not in latency and rng.random() < extra_edge_prob:
                latency[(u, v)] = round(rng.uniform(lo, hi), 1)
    return Topology(
        n=n,
        edges=tuple(sorted(latency)),
        latency=latency,
        capacity={v: capacity for v in range(1, n + 1)},
        original_ids={v: v for v in range(1, n + 1)},
    )
