"""Synthetic traffic generation, CSV ingestion, and windowed dataset prep.

The generator superimposes three per-link components: a diurnal sinusoid,
AR(1) noise, and heavy-tailed flow bursts routed along shortest paths (a
burst loads every link on its route, which is the spatial correlation the
forecaster has to learn).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netgraph import Topology, shortest_path


class TrafficError(ValueError):
    """Raised for invalid generator profiles or malformed traffic input."""


@dataclass(frozen=True)
class TrafficProfile:
    """Parameters of the synthetic per-link traffic generator."""

    base: float = 50.0
    amplitude: float = 20.0
    period: int = 96
    ar_coeff: float = 0.8
    noise_std: float = 3.0
    burst_rate: float = 0.3          # Poisson arrivals per slot
    burst_shape: float = 1.5         # Pareto tail index
    burst_scale: float = 10.0
    burst_duration: int = 4          # slots each burst persists

    def validate(self) -> None:
        if self.period < 1:
            raise TrafficError("period must be >= 1")
        if self.noise_std < 0 or self.burst_rate < 0:
            raise TrafficError("rates must be nonnegative")
        if not (0 <= self.ar_coeff < 1):
            raise TrafficError("ar_coeff must be in [0, 1)")
        if self.burst_scale <= 0 or self.burst_shape <= 0 or self.burst_duration < 1:
            raise TrafficError("burst size parameters must be positive")


@dataclass(frozen=True)
class BurstEvent:
    """One generated flow burst (kept for route-tracing checks)."""

    slot: int
    src: int
    dst: int
    volume: float
    duration: int
    route_edges: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class TrafficSeries:
    """Per-link traffic volumes over discrete slots.

    ``values`` is (slots, links); ``links`` follows the topology's canonical
    edge order.
    """

    links: tuple[tuple[int, int], ...]
    values: np.ndarray
    events: tuple[BurstEvent, ...] = ()

    @property
    def slots(self) -> int:
        return self.values.shape[0]


def generate_traffic(
    topo: Topology,
    profile: TrafficProfile,
    slots: int,
    seed: int,
) -> TrafficSeries:
    """Deterministic synthetic series for every link of ``topo``."""
    profile.validate()
    if slots < 1:
        raise TrafficError("slots must be >= 1")
    rng = np.random.default_rng(seed)
    links = topo.edges
    n_links = len(links)
    link_index = {e: i for i, e in enumerate(links)}

    t = np.arange(slots)[:, None]
    phase = rng.uniform(0, profile.period, size=n_links)[None, :]
    values = profile.base + profile.amplitude * np.sin(
        2 * np.pi * (t + phase) / profile.period
    )

    if profile.noise_std > 0:
        noise = np.zeros((slots, n_links))
        eps = rng.normal(0, profile.noise_std, size=(slots, n_links))
        for s in range(slots):
            prev = noise[s - 1] if s > 0 else 0.0
            noise[s] = profile.ar_coeff * prev + eps[s]
        values = values + noise

    events: list[BurstEvent] = []
    if profile.burst_rate > 0:
        counts = rng.poisson(profile.burst_rate, size=slots)
        for s in range(slots):
            for _ in range(counts[s]):
                src = int(rng.integers(1, topo.n + 1))
                dst = int(rng.integers(1, topo.n + 1))
                volume = float(
                    profile.burst_scale * rng.pareto(profile.burst_shape)
                )
                if src == dst or volume <= 0:
                    continue
                route = shortest_path(topo, src, dst)
                edges = tuple(route.edges)
                end = min(slots, s + profile.burst_duration)
                for e in edges:
                    values[s:end, link_index[e]] += volume
                events.append(
                    BurstEvent(s, src, dst, volume, profile.burst_duration, edges)
                )

    np.maximum(values, 0.0, out=values)
    return TrafficSeries(links=links, values=values, events=tuple(events))


def link_name(edge: tuple[int, int]) -> str:
    return f"{edge[0]}-{edge[1]}"


def export_csv(series: TrafficSeries) -> str:
    """Traffic CSV: first column ``slot``, then one ``u-v`` column per link."""
    header = "slot," + ",".join(link_name(e) for e in series.links)
    rows = [header]
    for s in range(series.slots):
        rows.append(
            str(s + 1) + "," + ",".join(repr(float(x)) for x in series.values[s])
        )
    return "\n".join(rows) + "\n"


def ingest_csv(text: str, topo: Topology) -> TrafficSeries:
    """Parse a traffic CSV against ``topo``; exact inverse of export_csv."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TrafficError("empty csv")
    header = lines[0].split(",")
    if header[0].strip() != "slot":
        raise TrafficError("first column must be 'slot'")
    col_edges = []
    for name in header[1:]:
        try:
            u, v = (int(p) for p in name.strip().split("-"))
        except ValueError as exc:
            raise TrafficError(f"bad link column name {name!r}") from exc
        e = (u, v) if u <= v else (v, u)
        if not topo.has_edge(u, v):
            raise TrafficError(f"unknown link {name!r}")
        col_edges.append(e)
    if len(set(col_edges)) != len(col_edges):
        raise TrafficError("duplicate link column")
    if set(col_edges) != set(topo.edges):
        missing = sorted(set(topo.edges) - set(col_edges))
        raise TrafficError(f"missing link columns: {missing}")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise TrafficError(f"row {lineno}: expected {len(header)} fields")
        vals = [float(p) for p in parts[1:]]
        if any(v < 0 for v in vals):
            raise TrafficError(f"row {lineno}: negative traffic value")
        rows.append(vals)
    raw = np.asarray(rows, dtype=float)
    # reorder columns into the topology's canonical edge order
    order = [col_edges.index(e) for e in topo.edges]
    return TrafficSeries(links=topo.edges, values=raw[:, order])


@dataclass(frozen=True)
class Normalization:
    """Per-link affine z-score parameters fitted on the training region."""

    mean: np.ndarray
    std: np.ndarray  # zero-variance links clamped to 1

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


@dataclass(frozen=True)
class WindowedDataset:
    """Contiguous (X, Y) forecasting windows with shared normalization.

    ``inputs`` is (samples, in_len, links) and ``targets`` is
    (samples, out_len, links); both are normalized. Y immediately follows X
    in the source series.
    """

    inputs: np.ndarray
    targets: np.ndarray
    normalization: Normalization
    start_slots: tuple[int, ...] = field(default=())

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def in_len(self) -> int:
        return self.inputs.shape[1]

    @property
    def out_len(self) -> int:
        return self.targets.shape[1]


def prepare_dataset(
    series: TrafficSeries,
    in_len: int,
    out_len: int,
    split: float,
) -> tuple[WindowedDataset, WindowedDataset]:
    """Chronological train/test split of all stride-1 windows.

    The window list is ordered by start slot and cut at floor(split * count);
    train windows strictly precede test windows. Normalization is fitted
    only on the slots covered by training windows.
    """
    if not (0 < split < 1):
        raise TrafficError("split must be in (0, 1)")
    total = in_len + out_len
    if series.slots < total:
        raise TrafficError(
            f"series too short: {series.slots} slots < in_len+out_len={total}"
        )
    n_windows = series.slots - total + 1
    n_train = int(split * n_windows)
    n_train = max(1, min(n_train, n_windows - 1)) if n_windows > 1 else 1

    train_last_slot = (n_train - 1) + total  # 1-based count of slots train touches
    train_region = series.values[:train_last_slot]
    mean = train_region.mean(axis=0)
    std = train_region.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    norm = Normalization(mean=mean, std=std)
    normed = norm.apply(series.values)

    def build(starts: range) -> WindowedDataset:
        xs = np.stack([normed[s : s + in_len] for s in starts]) if len(starts) else (
            np.zeros((0, in_len, len(series.links)))
        )
        ys = np.stack(
            [normed[s + in_len : s + total] for s in starts]
        ) if len(starts) else np.zeros((0, out_len, len(series.links)))
        return WindowedDataset(
            inputs=xs,
            targets=ys,
            normalization=norm,
            start_slots=tuple(s + 1 for s in starts),
        )

    train = build(range(0, n_train))
    test = build(range(n_train, n_windows))
    return train, test
