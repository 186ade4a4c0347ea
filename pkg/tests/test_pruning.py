"""Subnetwork pruning: closure, MST, expansion, articulation, biconnection."""

import itertools
import random

import pytest

from probeplan.netgraph import canonical_edge, random_topology, shortest_path
from probeplan.pruning import (
    PruningError,
    Subnetwork,
    articulation_points,
    biconnect,
    dump_subnetwork,
    expand_tree,
    kruskal_mst,
    load_subnetwork,
    metric_closure,
    naive_subnetwork,
    prune,
)

from test_netgraph import floyd_warshall, make_topology

LINE3 = make_topology(3, {(1, 2): 1.0, (2, 3): 1.0})
SQUARE = make_topology(
    4, {(1, 2): 1.0, (2, 3): 1.0, (3, 4): 1.0, (1, 4): 1.0}
)
TRIANGLE = make_topology(3, {(1, 2): 1.0, (2, 3): 1.0, (1, 3): 1.0})


def subnet_of(topo, nodes=None, edges=None, terminals=()):
    nodes = set(nodes if nodes is not None else topo.nodes)
    if edges is None:
        edges = {e for e in topo.edges if e[0] in nodes and e[1] in nodes}
    return Subnetwork(
        nodes=nodes, edges=set(edges), terminals=frozenset(terminals)
    )


def removal_oracle_articulation(subnet):
    """Independent articulation oracle: remove each node, test connectivity."""
    adj = subnet.adjacency()

    def connected(excluded):
        nodes = [v for v in subnet.nodes if v != excluded]
        seen = {nodes[0]}
        stack = [nodes[0]]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w != excluded and w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(nodes)

    return {
        v for v in subnet.nodes if len(subnet.nodes) > 1 and not connected(v)
    }


def spanning_tree_minimum(closure):
    """Brute force over all spanning trees of the closure."""
    terms = closure.terminals
    m = len(terms)
    pairs = list(closure.weight)
    best = None
    for tree in itertools.combinations(pairs, m - 1):
        parent = {v: v for v in terms}

        def find(v):
            while parent[v] != v:
                v = parent[v]
            return v

        ok = True
        for (a, b) in tree:
            ra, rb = find(a), find(b)
            if ra == rb:
                ok = False
                break
            parent[ra] = rb
        if ok:
            w = sum(closure.weight[e] for e in tree)
            if best is None or w < best:
                best = w
    return best


class TestMetricClosure:
    def test_single_route(self):
        c = metric_closure(LINE3, {1, 3})
        assert c.weight[(1, 3)] == 2.0
        assert c.witness[(1, 3)].nodes == (1, 2, 3)

    def test_singleton(self):
        c = metric_closure(LINE3, {2})
        assert c.terminals == (2,)
        assert c.weight == {}

    def test_matches_all_pairs_oracle(self):
        topo = random_topology(12, 0.3, seed=21)
        oracle = floyd_warshall(topo)
        terms = [2, 4, 7, 9, 11]
        c = metric_closure(topo, terms)
        for (a, b), w in c.weight.items():
            assert w == pytest.approx(oracle[(a, b)], abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(PruningError):
            metric_closure(LINE3, set())


class TestKruskalMst:
    @staticmethod
    def _closure(weights):
        terms = tuple(sorted({v for e in weights for v in e}))
        return type("FakeClosure", (), {"terminals": terms, "weight": weights})()

    def test_smallest_two_edges(self):
        c = self._closure({(1, 2): 1.0, (2, 3): 2.0, (1, 3): 3.0})
        tree = kruskal_mst(c)
        assert sorted(tree) == [(1, 2), (2, 3)]

    def test_equal_weights_tie_break(self):
        c = self._closure({(1, 2): 5.0, (2, 3): 5.0, (1, 3): 5.0})
        tree = kruskal_mst(c)
        assert sorted(tree) == [(1, 2), (1, 3)]
        assert sum(c.weight[tuple(sorted(e))] for e in tree) == 10.0

    def test_k5_matches_brute_force(self):
        rng = random.Random(13)
        for _ in range(10):
            weights = {
                (a, b): round(rng.uniform(1, 20), 1)
                for a, b in itertools.combinations(range(1, 6), 2)
            }
            c = self._closure(weights)
            tree = kruskal_mst(c)
            total = sum(weights[tuple(sorted(e))] for e in tree)
            assert total == pytest.approx(spanning_tree_minimum(c), abs=1e-9)

    def test_too_few_terminals_rejected(self):
        c = self._closure({})
        c.terminals = (1,)
        with pytest.raises(PruningError):
            kruskal_mst(c)


class TestExpandTree:
    def test_single_edge_witness(self):
        c = metric_closure(LINE3, {1, 3})
        subnet = expand_tree([(1, 3)], c, LINE3)
        assert subnet.nodes == {1, 2, 3}
        assert subnet.edges == {(1, 2), (2, 3)}

    def test_shared_edges_merge(self):
        topo = make_topology(
            4, {(1, 2): 1.0, (2, 3): 1.0, (2, 4): 1.0}
        )
        c = metric_closure(topo, {1, 3, 4})
        tree = kruskal_mst(c)
        subnet = expand_tree(tree, c, topo)
        assert subnet.edges == {(1, 2), (2, 3), (2, 4)}

    def test_union_of_witnesses(self):
        topo = random_topology(11, 0.3, seed=17)
        terms = [1, 4, 8, 10]
        c = metric_closure(topo, terms)
        tree = kruskal_mst(c)
        subnet = expand_tree(tree, c, topo)
        expect_nodes = set(terms)
        expect_edges = set()
        for e in tree:
            p = shortest_path(topo, *e)
            expect_nodes.update(p.nodes)
            expect_edges.update(p.edges)
        assert subnet.nodes == expect_nodes
        assert subnet.edges == expect_edges
        assert subnet.terminals == frozenset(terms)


class TestArticulationPoints:
    def test_path_interior(self):
        assert articulation_points(subnet_of(LINE3)) == {2}

    def test_triangle_none(self):
        assert articulation_points(subnet_of(TRIANGLE)) == set()

    def test_matches_removal_oracle(self):
        for seed in range(50):
            n = 4 + seed % 12
            topo = random_topology(n, 0.25, seed=seed)
            subnet = subnet_of(topo)
            assert articulation_points(subnet) == removal_oracle_articulation(
                subnet
            ), f"seed {seed}"


class TestBiconnect:
    def test_path_in_square_closes_cycle(self):
        subnet = subnet_of(SQUARE, nodes={1, 2, 3}, terminals={1, 3})
        out = biconnect(subnet, SQUARE)
        assert out.nodes == {1, 2, 3, 4}
        assert out.edges == set(SQUARE.edges)
        assert removal_oracle_articulation(out) == set()

    def test_cycle_is_fixed_point(self):
        subnet = subnet_of(SQUARE, terminals={1, 3})
        out = biconnect(subnet, SQUARE)
        assert out.nodes == subnet.nodes
        assert out.edges == subnet.edges
        assert not out.diagnostics

    def test_tree_base_reports_impossible(self):
        tree = make_topology(4, {(1, 2): 1.0, (2, 3): 1.0, (2, 4): 1.0})
        subnet = subnet_of(tree, terminals={1, 3})
        out = biconnect(subnet, tree)
        assert any("augmentation-impossible" in d for d in out.diagnostics)

    def test_two_node_bridge_gets_second_path(self):
        subnet = subnet_of(
            SQUARE, nodes={1, 2}, edges={(1, 2)}, terminals={1, 2}
        )
        out = biconnect(subnet, SQUARE)
        assert removal_oracle_articulation(out) == set()
        assert {1, 2} <= out.nodes


class TestPrune:
    def test_whole_cycle_unpruned(self):
        cycle = make_topology(
            5,
            {(1, 2): 1.0, (2, 3): 1.0, (3, 4): 1.0, (4, 5): 1.0, (1, 5): 1.0},
        )
        out = prune(cycle, set(cycle.nodes))
        assert out.nodes == set(cycle.nodes)
        assert out.edges == set(cycle.edges)

    def test_single_terminal_shortest_cycle(self):
        out = prune(SQUARE, {1})
        assert out.nodes == {1, 2, 3, 4}
        assert out.edges == set(SQUARE.edges)
        assert removal_oracle_articulation(out) == set()

    def test_single_terminal_picks_cheapest_cycle(self):
        topo = make_topology(
            5,
            {
                (1, 2): 1.0,
                (2, 3): 1.0,
                (1, 3): 1.0,
                (1, 4): 10.0,
                (4, 5): 10.0,
                (1, 5): 10.0,
            },
        )
        out = prune(topo, {1})
        assert out.nodes == {1, 2, 3}

    def test_single_terminal_no_cycle_diagnostic(self):
        out = prune(LINE3, {2})
        assert any("augmentation-impossible" in d for d in out.diagnostics)

    def test_coverage_biconnectivity_and_subgraph_random(self):
        rng = random.Random(99)
        for case in range(30):
            n = rng.randrange(5, 16)
            topo = random_topology(n, 0.3, seed=1000 + case)
            v_h = set(rng.sample(range(1, n + 1), rng.randrange(1, 5)))
            out = prune(topo, v_h)
            assert v_h <= out.nodes
            for (a, b) in out.edges:
                assert topo.has_edge(a, b)
            if not out.diagnostics and len(out.nodes) >= 3:
                assert removal_oracle_articulation(out) == set()

    def test_idempotent(self):
        for seed in range(12):
            topo = random_topology(10, 0.35, seed=seed)
            v_h = {1, 4, 7}
            first = prune(topo, v_h)
            if first.diagnostics:
                continue
            sub_topo = first.as_topology(topo)
            remap = {v: i for i, v in enumerate(sorted(first.nodes), 1)}
            again = prune(sub_topo, {remap[v] for v in v_h})
            back = {sub_topo.original_ids[v] for v in again.nodes}
            assert back == first.nodes, f"seed {seed}"

    def test_not_larger_than_naive(self):
        wins = []
        for seed in range(20):
            topo = random_topology(14, 0.3, seed=200 + seed)
            v_h = {2, 5, 9, 12}
            ours = prune(topo, v_h)
            naive = naive_subnetwork(topo, v_h)
            wins.append(len(ours.edges) <= len(naive.edges))
        # the MST route should not use more links on average
        assert sum(wins) >= len(wins) * 0.8


class TestSubnetworkIo:
    def test_round_trip(self):
        topo = random_topology(9, 0.3, seed=31)
        out = prune(topo, {1, 5, 8})
        text = dump_subnetwork(out, topo)
        again = load_subnetwork(text)
        assert again.nodes == out.nodes
        assert again.edges == out.edges
        assert again.terminals == out.terminals

    def test_as_topology_preserves_latency(self):
        out = prune(SQUARE, {1, 3})
        sub = out.as_topology(SQUARE)
        for (a, b) in sub.edges:
            oa, ob = sub.original_ids[a], sub.original_ids[b]
            assert sub.edge_latency(a, b) == SQUARE.edge_latency(oa, ob)
