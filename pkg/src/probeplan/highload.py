"""Per-switch load aggregation and high-load switch identification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netgraph import Topology


@dataclass(frozen=True)
class HighLoadSet:
    """Switches whose predicted load meets or exceeds their threshold."""

    switches: frozenset[int]
    loads: dict[int, float]
    threshold_used: dict[int, float]


def switch_load(topo: Topology, link_traffic) -> dict[int, float]:
    """Aggregate link traffic to per-switch load.

    ``link_traffic`` is either a map edge -> value or an array/sequence in the
    topology's canonical edge order; a multi-slot (slots, links) array is
    reduced to the per-slot maximum (worst case over the horizon).
    """
    if isinstance(link_traffic, dict):
        missing = [e for e in topo.edges if e not in link_traffic]
        if missing:
            raise KeyError(f"missing link values: {missing}")
        per_link = np.array([float(link_traffic[e]) for e in topo.edges])
    else:
        arr = np.asarray(link_traffic, dtype=float)
        if arr.ndim == 2:
            arr = arr.max(axis=0)
        if arr.shape != (len(topo.edges),):
            raise ValueError(
                f"expected {len(topo.edges)} link values, got shape {arr.shape}"
            )
        per_link = arr
    loads = {v: 0.0 for v in topo.nodes}
    for (u, v), x in zip(topo.edges, per_link):
        loads[u] += x
        loads[v] += x
    return loads


def identify_highload(
    loads: dict[int, float],
    topo: Topology,
    theta: float = 0.8,
    mode: str = "capacity",
) -> HighLoadSet:
    """Threshold per-switch loads.

    capacity mode: threshold is theta * capacity(v) per switch.
    max-observed mode: threshold is theta * max over switches of load.
    A load exactly equal to its threshold counts as high-load.
    """
    if not (0 < theta <= 1):
        raise ValueError("theta must be in (0, 1]")
    if mode == "capacity":
        thresholds = {v: theta * topo.capacity[v] for v in topo.nodes}
    elif mode == "max-observed":
        peak = max(loads.values()) if loads else 0.0
        thresholds = {v: theta * peak for v in topo.nodes}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    switches = frozenset(v for v in topo.nodes if loads[v] >= thresholds[v])
    return HighLoadSet(
        switches=switches,
        loads=dict(loads),
        threshold_used=thresholds,
    )


def classification_metrics(
    predicted: HighLoadSet | frozenset[int] | set[int],
    actual: HighLoadSet | frozenset[int] | set[int],
) -> tuple[float, float, float, bool]:
    """(precision, recall, F1, degenerate).

    ``degenerate`` flags empty-denominator cases, where the affected metrics
    are reported as 0.
    """
    pred = predicted.switches if isinstance(predicted, HighLoadSet) else set(predicted)
    act = actual.switches if isinstance(actual, HighLoadSet) else set(actual)
    tp = len(pred & act)
    degenerate = False
    if pred:
        precision = tp / len(pred)
    else:
        precision, degenerate = 0.0, True
    if act:
        recall = tp / len(act)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        if tp == 0 and (not pred or not act):
            degenerate = True
    return precision, recall, f1, degenerate
