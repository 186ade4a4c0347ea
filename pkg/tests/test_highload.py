"""High-load switch identification and classification metrics."""

import numpy as np
import pytest

from probeplan.highload import (
    HighLoadSet,
    classification_metrics,
    identify_highload,
    switch_load,
)
from probeplan.netgraph import random_topology

from test_netgraph import make_topology

LINE3 = make_topology(3, {(1, 2): 1.0, (2, 3): 1.0})


class TestSwitchLoad:
    def test_incidence_sum_on_path(self):
        loads = switch_load(LINE3, {(1, 2): 10.0, (2, 3): 20.0})
        assert loads == {1: 10.0, 2: 30.0, 3: 20.0}

    def test_all_zero(self):
        loads = switch_load(LINE3, np.zeros(2))
        assert loads == {1: 0.0, 2: 0.0, 3: 0.0}

    def test_matches_incidence_matrix_oracle(self):
        topo = random_topology(8, 0.3, seed=2)
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 50, size=len(topo.edges))
        inc = np.zeros((topo.n, len(topo.edges)))
        for j, (u, v) in enumerate(topo.edges):
            inc[u - 1, j] = inc[v - 1, j] = 1.0
        oracle = inc @ x
        loads = switch_load(topo, x)
        for v in topo.nodes:
            assert loads[v] == pytest.approx(oracle[v - 1], abs=1e-9)

    def test_multislot_takes_per_slot_maximum(self):
        values = np.array([[1.0, 5.0], [4.0, 2.0]])
        loads = switch_load(LINE3, values)
        assert loads == {1: 4.0, 2: 9.0, 3: 5.0}

    def test_missing_link_rejected(self):
        with pytest.raises(KeyError, match="missing link"):
            switch_load(LINE3, {(1, 2): 1.0})

    def test_linearity(self):
        topo = random_topology(6, 0.3, seed=5)
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 10, size=len(topo.edges))
        y = rng.uniform(0, 10, size=len(topo.edges))
        lhs = switch_load(topo, 3.0 * x + y)
        lx, ly = switch_load(topo, x), switch_load(topo, y)
        for v in topo.nodes:
            assert lhs[v] == pytest.approx(3.0 * lx[v] + ly[v], abs=1e-9)


class TestIdentifyHighload:
    def test_capacity_mode_above_threshold(self):
        hl = identify_highload({1: 85.0, 2: 10.0, 3: 10.0}, LINE3, 0.8, "capacity")
        assert hl.switches == {1}

    def test_boundary_counts_as_highload(self):
        hl = identify_highload({1: 80.0, 2: 10.0, 3: 10.0}, LINE3, 0.8, "capacity")
        assert 1 in hl.switches

    def test_max_observed_mode(self):
        hl = identify_highload(
            {1: 10.0, 2: 50.0, 3: 100.0}, LINE3, 0.8, "max-observed"
        )
        assert hl.switches == {3}

    def test_monotone_in_theta(self):
        topo = random_topology(10, 0.3, seed=7)
        rng = np.random.default_rng(3)
        loads = {v: float(rng.uniform(0, 120)) for v in topo.nodes}
        for mode in ("capacity", "max-observed"):
            prev = None
            for theta in (0.2, 0.4, 0.6, 0.8, 1.0):
                cur = identify_highload(loads, topo, theta, mode).switches
                if prev is not None:
                    assert cur <= prev
                prev = cur

    def test_threshold_invariants(self):
        hl = identify_highload({1: 85.0, 2: 79.0, 3: 80.0}, LINE3, 0.8, "capacity")
        for v in LINE3.nodes:
            if v in hl.switches:
                assert hl.loads[v] >= hl.threshold_used[v]
            else:
                assert hl.loads[v] < hl.threshold_used[v]

    def test_bad_inputs_rejected(self):
        with pytest.raises(ValueError):
            identify_highload({1: 1.0, 2: 1.0, 3: 1.0}, LINE3, 0.0)
        with pytest.raises(ValueError):
            identify_highload({1: 1.0, 2: 1.0, 3: 1.0}, LINE3, 0.8, "bogus")


class TestClassificationMetrics:
    def test_identity(self):
        p, r, f1, degenerate = classification_metrics({2, 5}, {2, 5})
        assert (p, r, f1) == (1.0, 1.0, 1.0)
        assert not degenerate

    def test_half_overlap(self):
        p, r, f1, _ = classification_metrics({1, 2}, {2, 3})
        assert (p, r, f1) == (0.5, 0.5, 0.5)

    def test_empty_prediction_degenerate(self):
        p, r, f1, degenerate = classification_metrics(set(), {1})
        assert (p, r, f1) == (0.0, 0.0, 0.0)
        assert degenerate

    def test_accepts_highloadset_inputs(self):
        hl = HighLoadSet(switches=frozenset({1}), loads={}, threshold_used={})
        p, r, f1, _ = classification_metrics(hl, hl)
        assert f1 == 1.0

    def test_oracle_forecast_is_perfect_for_any_theta_and_mode(self):
        topo = random_topology(9, 0.3, seed=4)
        rng = np.random.default_rng(8)
        x = rng.uniform(0, 100, size=len(topo.edges))
        loads = switch_load(topo, x)
        for mode in ("capacity", "max-observed"):
            for theta in (0.3, 0.8, 1.0):
                a = identify_highload(loads, topo, theta, mode)
                b = identify_highload(loads, topo, theta, mode)
                p, r, f1, _ = classification_metrics(a, b)
                if a.switches:
                    assert (p, r, f1) == (1.0, 1.0, 1.0)
