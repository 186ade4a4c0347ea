"""Minimal biconnected subnetwork covering all high-load switches.

Pipeline: metric closure over the terminals -> Kruskal MST -> expand tree
edges into their witness shortest paths -> detect articulation points on a
DFS tree -> augment with detour paths until no articulation point remains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .netgraph import (
    Path,
    Topology,
    canonical_edge,
    shortest_path,
    shortest_path_avoiding,
)


class PruningError(ValueError):
    pass


@dataclass(frozen=True)
class MetricClosure:
    """Complete graph over the terminals weighted by shortest-path latency."""

    terminals: tuple[int, ...]
    weight: dict[tuple[int, int], float]
    witness: dict[tuple[int, int], Path]


@dataclass
class Subnetwork:
    """Pruned subgraph of a base topology covering the terminal switches."""

    nodes: set[int]
    edges: set[tuple[int, int]]
    terminals: frozenset[int]
    diagnostics: list[str] = field(default_factory=list)

    def neighbors(self, v: int) -> list[int]:
        out = []
        for (a, b) in self.edges:
            if a == v:
                out.append(b)
            elif b == v:
                out.append(a)
        return sorted(out)

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {v: [] for v in self.nodes}
        for (a, b) in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for v in adj:
            adj[v].sort()
        return adj

    def as_topology(self, base: Topology) -> Topology:
        """Stand-alone topology restricted to this subnetwork's nodes/edges."""
        remap = {v: i for i, v in enumerate(sorted(self.nodes), 1)}
        latency = {
            canonical_edge(remap[a], remap[b]): base.latency[(a, b)]
            for (a, b) in self.edges
        }
        return Topology(
            n=len(self.nodes),
            edges=tuple(sorted(latency)),
            latency=latency,
            capacity={remap[v]: base.capacity[v] for v in self.nodes},
            original_ids={i: v for v, i in remap.items()},
        )


def dump_subnetwork(subnet: Subnetwork, base: Topology) -> str:
    """Edge-list serialization plus a ``terminals`` line."""
    lines = [f"nodes {len(subnet.nodes)}"]
    for v in sorted(subnet.nodes):
        lines.append(f"cap {v} {base.capacity[v]!r}")
    for (a, b) in sorted(subnet.edges):
        lines.append(f"edge {a} {b} {base.latency[(a, b)]!r}")
    lines.append("terminals " + " ".join(str(v) for v in sorted(subnet.terminals)))
    return "\n".join(lines) + "\n"


def load_subnetwork(text: str) -> Subnetwork:
    nodes: set[int] = set()
    edges: set[tuple[int, int]] = set()
    terminals: frozenset[int] = frozenset()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "cap":
            nodes.add(int(parts[1]))
        elif parts[0] == "edge":
            edges.add(canonical_edge(int(parts[1]), int(parts[2])))
        elif parts[0] == "terminals":
            terminals = frozenset(int(p) for p in parts[1:])
    return Subnetwork(nodes=nodes, edges=edges, terminals=terminals)


def metric_closure(topo: Topology, terminals) -> MetricClosure:
    """Shortest-path distances and witness paths between every terminal pair."""
    terms = tuple(sorted(set(terminals)))
    if not terms:
        raise PruningError("empty terminal set")
    for v in terms:
        if not 1 <= v <= topo.n:
            raise PruningError(f"terminal {v} not in topology")
    weight: dict[tuple[int, int], float] = {}
    witness: dict[tuple[int, int], Path] = {}
    for i, a in enumerate(terms):
        for b in terms[i + 1 :]:
            p = shortest_path(topo, a, b)
            weight[(a, b)] = p.total_latency
            witness[(a, b)] = p
    return MetricClosure(terminals=terms, weight=weight, witness=witness)


def kruskal_mst(closure: MetricClosure) -> list[tuple[int, int]]:
    """Minimum spanning tree of the closure; ties broken by endpoint pair."""
    if len(closure.terminals) < 2:
        raise PruningError("need at least 2 terminals for a spanning tree")
    parent = {v: v for v in closure.terminals}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    tree = []
    for (a, b) in sorted(closure.weight, key=lambda e: (closure.weight[e], e)):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            tree.append((a, b))
    return tree


def expand_tree(
    tree: list[tuple[int, int]],
    closure: MetricClosure,
    topo: Topology,
) -> Subnetwork:
    """Replace each tree edge by its witness path; overlaps merge."""
    nodes: set[int] = set(closure.terminals)
    edges: set[tuple[int, int]] = set()
    for e in tree:
        path = closure.witness[e]
        nodes.update(path.nodes)
        edges.update(path.edges)
    return Subnetwork(
        nodes=nodes, edges=edges, terminals=frozenset(closure.terminals)
    )


@dataclass(frozen=True)
class _DfsTree:
    root: int
    parent: dict[int, int | None]
    children: dict[int, list[int]]
    disc: dict[int, int]
    low: dict[int, int]
    tree_edges: set[tuple[int, int]]


def _dfs_tree(subnet: Subnetwork) -> _DfsTree:
    adj = subnet.adjacency()
    root = min(subnet.nodes)
    parent: dict[int, int | None] = {root: None}
    children: dict[int, list[int]] = {v: [] for v in subnet.nodes}
    disc: dict[int, int] = {}
    low: dict[int, int] = {}
    tree_edges: set[tuple[int, int]] = set()
    counter = 0
    # iterative DFS visiting neighbors in sorted order for determinism
    stack: list[tuple[int, iter]] = [(root, iter(adj[root]))]
    disc[root] = low[root] = counter
    counter += 1
    while stack:
        v, it = stack[-1]
        advanced = False
        for w in it:
            if w not in disc:
                parent[w] = v
                children[v].append(w)
                tree_edges.add(canonical_edge(v, w))
                disc[w] = low[w] = counter
                counter += 1
                stack.append((w, iter(adj[w])))
                advanced = True
                break
            elif w != parent.get(v):
                low[v] = min(low[v], disc[w])
        if not advanced:
            stack.pop()
            if stack:
                p = stack[-1][0]
                low[p] = min(low[p], low[v])
    return _DfsTree(
        root=root,
        parent=parent,
        children=children,
        disc=disc,
        low=low,
        tree_edges=tree_edges,
    )


def articulation_points(subnet: Subnetwork) -> set[int]:
    """Vertices whose removal disconnects the subnetwork.

    DFS-tree rules: the root is an articulation point iff it has two or more
    children; a non-root v is one iff some child subtree has no back edge to
    a proper ancestor of v.
    """
    t = _dfs_tree(subnet)
    points: set[int] = set()
    for v in subnet.nodes:
        if v == t.root:
            if len(t.children[v]) >= 2:
                points.add(v)
        elif any(t.low[c] >= t.disc[v] for c in t.children[v]):
            points.add(v)
    return points


def _subtree_nodes(t: _DfsTree, root: int) -> list[int]:
    out = []
    stack = [root]
    while stack:
        v = stack.pop()
        out.append(v)
        stack.extend(t.children[v])
    return sorted(out)


def _ancestors(t: _DfsTree, v: int) -> list[int]:
    out = []
    a = t.parent[v]
    while a is not None:
        out.append(a)
        a = t.parent[a]
    return out


def biconnect(subnet: Subnetwork, topo: Topology) -> Subnetwork:
    """Augment with detour paths until no articulation point remains.

    Per articulation point, candidate endpoints are nodes in a hanging child
    subtree paired with proper ancestors (for the root: nodes of another
    child subtree); candidate paths are shortest base-topology paths that
    avoid the DFS-tree edges. The minimum-length candidate is added, then
    articulation points are recomputed. When no tree-edge-avoiding path
    exists, a second pass only requires the detour to avoid the articulation
    point itself; if that also fails the instance is reported as impossible.
    """
    out = Subnetwork(
        nodes=set(subnet.nodes),
        edges=set(subnet.edges),
        terminals=subnet.terminals,
        diagnostics=list(subnet.diagnostics),
    )
    guard = 0
    while True:
        guard += 1
        if guard > 4 * topo.n + 16:
            out.diagnostics.append("augmentation-impossible: iteration guard hit")
            return out
        if len(out.nodes) == 2:
            # a single edge has no articulation point but is still a bridge;
            # add the shortest internally-disjoint return route
            a, b = sorted(out.nodes)
            p = shortest_path_avoiding(
                topo, a, b, forbidden_edges={canonical_edge(a, b)}
            )
            if p is None:
                out.diagnostics.append(
                    f"augmentation-impossible: no second path between {a} and {b}"
                )
                return out
            out.nodes.update(p.nodes)
            out.edges.update(p.edges)
            continue
        points = articulation_points(out)
        if not points:
            return out
        t = _dfs_tree(out)
        # deepest articulation point first, matching bottom-up elimination
        v = max(points, key=lambda p: (t.disc[p], p))
        best: tuple[float, tuple[int, ...]] | None = None
        candidate_pairs: list[tuple[int, int]] = []
        if v == t.root:
            subtrees = [_subtree_nodes(t, c) for c in t.children[v]]
            for i, sub_a in enumerate(subtrees):
                for sub_b in subtrees[i + 1 :]:
                    candidate_pairs.extend((a, b) for a in sub_a for b in sub_b)
        else:
            ancestors = _ancestors(t, v)
            for c in t.children[v]:
                if t.low[c] < t.disc[v]:
                    continue  # subtree already reaches above v
                for vc in _subtree_nodes(t, c):
                    candidate_pairs.extend((vc, va) for va in ancestors)
        for relax in (False, True):
            for (vc, va) in candidate_pairs:
                if relax:
                    p = shortest_path_avoiding(
                        topo, vc, va, forbidden_nodes={v}
                    )
                else:
                    p = shortest_path_avoiding(
                        topo, vc, va, forbidden_edges=t.tree_edges
                    )
                if p is None or set(p.edges) <= out.edges:
                    continue
                if not relax and v in p.nodes[1:-1]:
                    continue  # passing through v cannot eliminate it
                cand = (p.total_latency, p.nodes)
                if best is None or cand < best:
                    best = cand
            if best is not None:
                break
        if best is None:
            out.diagnostics.append(
                f"augmentation-impossible: articulation point {v} cannot be "
                "eliminated in the base topology"
            )
            return out
        _, path_nodes = best
        out.nodes.update(path_nodes)
        for a, b in zip(path_nodes, path_nodes[1:]):
            out.edges.add(canonical_edge(a, b))


def _single_terminal_subnet(topo: Topology, v: int) -> Subnetwork:
    """Shortest base-topology cycle through v, or a diagnostic if none."""
    best: tuple[float, tuple[int, ...]] | None = None
    for u, t in topo.neighbors(v):
        p = shortest_path_avoiding(
            topo, u, v, forbidden_edges={canonical_edge(u, v)}
        )
        if p is None:
            continue
        cand = (p.total_latency + t, (v,) + p.nodes)
        if best is None or cand < best:
            best = cand
    if best is None:
        return Subnetwork(
            nodes={v},
            edges=set(),
            terminals=frozenset({v}),
            diagnostics=[
                f"augmentation-impossible: no cycle through terminal {v}"
            ],
        )
    _, cycle = best
    edges = {canonical_edge(a, b) for a, b in zip(cycle, cycle[1:])}
    return Subnetwork(nodes=set(cycle), edges=edges, terminals=frozenset({v}))


def prune(topo: Topology, high_load) -> Subnetwork:
    """Full pruning pipeline: closure -> MST -> expansion -> biconnection."""
    terminals = sorted(set(high_load))
    if not terminals:
        raise PruningError("empty high-load set")
    if len(terminals) == 1:
        return _single_terminal_subnet(topo, terminals[0])
    closure = metric_closure(topo, terminals)
    tree = kruskal_mst(closure)
    subnet = expand_tree(tree, closure, topo)
    return biconnect(subnet, topo)


def naive_subnetwork(topo: Topology, high_load) -> Subnetwork:
    """Comparison scheme: union of all pairwise shortest paths, biconnected."""
    terminals = sorted(set(high_load))
    if len(terminals) == 1:
        return _single_terminal_subnet(topo, terminals[0])
    closure = metric_closure(topo, terminals)
    nodes: set[int] = set(terminals)
    edges: set[tuple[int, int]] = set()
    for p in closure.witness.values():
        nodes.update(p.nodes)
        edges.update(p.edges)
    subnet = Subnetwork(nodes=nodes, edges=edges, terminals=frozenset(terminals))
    return biconnect(subnet, topo)


def is_biconnected(subnet: Subnetwork) -> bool:
    """Brute-force check: removing any single node leaves it connected."""
    if len(subnet.nodes) < 3:
        return False
    adj = subnet.adjacency()

    def connected(excluded: int | None) -> bool:
        nodes = [v for v in subnet.nodes if v != excluded]
        if not nodes:
            return True
        seen = {nodes[0]}
        stack = [nodes[0]]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w != excluded and w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(nodes)

    return connected(None) and all(connected(v) for v in subnet.nodes)
