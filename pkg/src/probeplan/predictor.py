"""Graph-temporal traffic forecaster.

The adjacency is learned from two node-embedding matrices (asymmetric,
top-k sparsified). The spatio-temporal core is deliberately small: two
blocks of gated causal temporal convolution followed by one-hop propagation
over the learned graph, with residual connections, then a per-link output
head. Training follows a curriculum that grows the forecast horizon and a
random node-group split per iteration, with an optional real-time feedback
step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .netgraph import Topology
from .traffic import Normalization, TrafficSeries, WindowedDataset

torch.set_default_dtype(torch.float64)


class PredictorError(RuntimeError):
    pass


@dataclass(frozen=True)
class Forecast:
    """Model output for one input window: (horizon, links) values."""

    horizon: int
    values: np.ndarray
    denormalized: bool


def decade_lr_schedule(epoch: int) -> float:
    """Piecewise learning-rate schedule: 1e-4 for the first ten epochs, then
    multiplicative decay per decade (0.95 in epochs 11-20, 0.9 afterwards)."""
    if epoch <= 10:
        return 1e-4
    if epoch <= 20:
        return 1e-4 * 0.95 ** (epoch - 10)
    lr20 = 1e-4 * 0.95**10
    decade = min((epoch - 21) // 10, 2)  # clamp beyond epoch 50
    lr = lr20 * (0.9**10) ** decade
    return lr * 0.9 ** (min(epoch, 50) - 20 - 10 * decade)


@dataclass
class TrainConfig:
    """Hyper-parameters of the curriculum training loop."""

    epochs: int = 20
    batch: int = 32
    step_size: int = 5          # iterations between curriculum increments
    split_groups: int = 1       # node groups per iteration
    max_horizon: int = 4
    seed: int = 0
    lr_schedule: str | float = 0.005   # "decade" or a constant rate
    optimizer: str = "adam"

    def lr(self, epoch: int) -> float:
        if self.lr_schedule == "decade":
            return decade_lr_schedule(epoch)
        return float(self.lr_schedule)


class TrafficPredictor(nn.Module):
    """Forecasts per-link traffic from a normalized input window."""

    def __init__(
        self,
        topo: Topology,
        in_len: int,
        horizon: int,
        d_embed: int = 16,
        channels: int = 16,
        topk: int | None = None,
        alpha: float = 3.0,
        beta: float = 0.05,
        kernel: int = 3,
        seed: int = 0,
    ):
        super().__init__()
        n = topo.n
        links = topo.edges
        if topk is None:
            topk = min(4, n - 1)
        if not 1 <= topk <= n - 1:
            raise PredictorError(f"topk must be in [1, {n - 1}]")
        self.n = n
        self.links = links
        self.in_len = in_len
        self.horizon = horizon
        self.topk = topk
        self.alpha = alpha
        self.beta = beta
        self.kernel = kernel

        gen = torch.Generator().manual_seed(seed)

        def init(*shape, scale=0.1):
            return nn.Parameter(torch.randn(*shape, generator=gen) * scale)

        self.E1 = init(n, d_embed)
        self.E2 = init(n, d_embed)
        self.Theta1 = init(d_embed, d_embed)
        self.Theta2 = init(d_embed, d_embed)

        c = channels
        self.lift = nn.Parameter(torch.randn(c, 1, generator=gen) * 0.5)
        self.lift_bias = nn.Parameter(torch.zeros(c))
        self.conv_filter = nn.ParameterList()
        self.conv_gate = nn.ParameterList()
        self.conv_filter_bias = nn.ParameterList()
        self.conv_gate_bias = nn.ParameterList()
        for _ in range(2):
            fan = 1.0 / math.sqrt(c * kernel)
            self.conv_filter.append(
                nn.Parameter(torch.randn(c, c, kernel, generator=gen) * fan)
            )
            self.conv_gate.append(
                nn.Parameter(torch.randn(c, c, kernel, generator=gen) * fan)
            )
            self.conv_filter_bias.append(nn.Parameter(torch.zeros(c)))
            self.conv_gate_bias.append(nn.Parameter(torch.zeros(c)))
        # head inputs: endpoint features plus recent per-link lags; start at
        # the persistence forecast (weight 1 on the last lag) so training
        # only has to learn corrections to it
        self.head_lags = min(8, in_len)
        head_in = 2 * c + self.head_lags
        out_weight = torch.zeros(horizon, head_in)
        out_weight[:, -1] = 1.0
        self.out_weight = nn.Parameter(out_weight)
        self.out_bias = nn.Parameter(torch.zeros(horizon))
        self.link_scale = nn.Parameter(torch.ones(len(links)))
        self.link_bias = nn.Parameter(torch.zeros(len(links)))

        inc = torch.zeros(n, len(links))
        for j, (u, v) in enumerate(links):
            inc[u - 1, j] = 1.0
            inc[v - 1, j] = 1.0
        self.register_buffer("incidence", inc)
        ends = torch.tensor([[u - 1, v - 1] for (u, v) in links])
        self.register_buffer("link_ends", ends)

    # --- learned adjacency -------------------------------------------------

    def raw_adjacency(self) -> torch.Tensor:
        """Dense pre-top-k scores: ReLU(tanh(alpha (M1 M2^T - M2 M1^T)))."""
        m1 = torch.tanh(self.alpha * self.E1 @ self.Theta1)
        m2 = torch.tanh(self.alpha * self.E2 @ self.Theta2)
        return torch.relu(torch.tanh(self.alpha * (m1 @ m2.T - m2 @ m1.T)))

    def graph_learn_layer(self) -> torch.Tensor:
        """Learned adjacency with only the top-k entries kept per row."""
        return topk_sparsify(self.raw_adjacency(), self.topk)

    # --- forward pass ------------------------------------------------------

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Normalized window(s) -> normalized forecast.

        ``x`` is (in_len, links) or (batch, in_len, links); output matches
        with (horizon, links) rows.
        """
        squeeze = x.dim() == 2
        if squeeze:
            x = x.unsqueeze(0)
        b, t, n_links = x.shape
        if t != self.in_len or n_links != len(self.links):
            raise PredictorError(
                f"expected input ({self.in_len}, {len(self.links)}), got ({t}, {n_links})"
            )
        # node feature = sum of incident link loads: (b, n, t)
        h = torch.einsum("nl,btl->bnt", self.incidence, x)
        h = h.reshape(b * self.n, 1, t)
        h = torch.einsum("co,bot->bct", self.lift, h) + self.lift_bias[None, :, None]

        a = self.graph_learn_layer()
        row_sum = a.sum(dim=1, keepdim=True).clamp(min=1e-10)
        a_norm = a / row_sum

        pad = self.kernel - 1
        for blk in range(2):
            resid = h
            hp = torch.nn.functional.pad(h, (pad, 0))  # causal
            filt = torch.nn.functional.conv1d(
                hp, self.conv_filter[blk], self.conv_filter_bias[blk]
            )
            gate = torch.nn.functional.conv1d(
                hp, self.conv_gate[blk], self.conv_gate_bias[blk]
            )
            z = torch.tanh(filt) * torch.sigmoid(gate)
            zn = z.reshape(b, self.n, -1)
            mixed = self.beta * zn + (1 - self.beta) * torch.einsum(
                "uv,bvk->buk", a_norm, zn
            )
            h = mixed.reshape(b * self.n, *z.shape[1:]) + resid

        z_last = h[:, :, -1].reshape(b, self.n, -1)  # (b, n, c)
        lags = x[:, -self.head_lags :, :].transpose(1, 2)  # (b, links, lags)
        feats = torch.cat(
            [
                z_last[:, self.link_ends[:, 0]],
                z_last[:, self.link_ends[:, 1]],
                lags,
            ],
            dim=-1,
        )  # (b, links, 2c + lags)
        out = torch.einsum("hf,blf->bhl", self.out_weight, feats)
        out = out + self.out_bias[:, None]
        out = out * self.link_scale + self.link_bias
        return out.squeeze(0) if squeeze else out

    def check_finite(self) -> None:
        for name, p in self.named_parameters():
            if not torch.isfinite(p).all():
                raise PredictorError(f"non-finite parameter {name}")


def topk_sparsify(raw: torch.Tensor, k: int) -> torch.Tensor:
    """Keep the k largest entries per row, zero the rest."""
    _, idx = torch.topk(raw, k, dim=1)
    mask = torch.zeros_like(raw)
    mask.scatter_(1, idx, 1.0)
    return raw * mask


def apply_topology_delta(
    model: TrafficPredictor,
    raw_cache: torch.Tensor,
    affected,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Update the learned adjacency after embeddings of ``affected`` changed.

    Only the raw-score rows and columns touching affected nodes are
    recomputed; the per-row top-k filter is then reapplied. Equals a full
    :meth:`TrafficPredictor.graph_learn_layer` recomputation.
    """
    affected_idx = sorted(v - 1 for v in affected)
    raw = raw_cache.clone()
    if affected_idx:
        with torch.no_grad():
            m1 = torch.tanh(model.alpha * model.E1 @ model.Theta1)
            m2 = torch.tanh(model.alpha * model.E2 @ model.Theta2)
            idx = torch.tensor(affected_idx)
            scores_rows = model.alpha * (m1[idx] @ m2.T - m2[idx] @ m1.T)
            raw[idx, :] = torch.relu(torch.tanh(scores_rows))
            scores_cols = model.alpha * (m1 @ m2[idx].T - m2 @ m1[idx].T)
            raw[:, idx] = torch.relu(torch.tanh(scores_cols))
    return topk_sparsify(raw, model.topk), raw


@dataclass
class TraceRow:
    epoch: int
    iteration: int
    r: int
    loss: float


def _link_group_mask(model: TrafficPredictor, group: set[int]) -> torch.Tensor:
    mask = torch.zeros(len(model.links))
    for j, (u, v) in enumerate(model.links):
        if u in group or v in group:
            mask[j] = 1.0
    return mask


def train(
    model: TrafficPredictor,
    dataset: WindowedDataset,
    cfg: TrainConfig,
) -> tuple[TrafficPredictor, list[TraceRow]]:
    """Curriculum training loop.

    Per iteration: sample a batch, split the node set into ``split_groups``
    random groups, and take one gradient step per group on the mean absolute
    error over the first ``r`` horizon steps restricted to links touching
    the group. ``r`` starts at 1 and increments every ``step_size``
    iterations up to ``max_horizon``.
    """
    if dataset.n_samples == 0:
        raise PredictorError("empty dataset")
    if not 1 <= cfg.split_groups <= model.n:
        raise PredictorError("split_groups must be in [1, n]")
    torch.set_num_threads(1)
    rng = np.random.default_rng(cfg.seed)
    xs = torch.as_tensor(dataset.inputs)
    ys = torch.as_tensor(dataset.targets)
    t_max = min(cfg.max_horizon, model.horizon, dataset.out_len)

    if cfg.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr(1))
    elif cfg.optimizer == "sgd":
        opt = torch.optim.SGD(model.parameters(), lr=cfg.lr(1))
    else:
        raise PredictorError(f"unknown optimizer {cfg.optimizer!r}")

    trace: list[TraceRow] = []
    iteration = 1
    r = 1
    n_batches = max(1, math.ceil(dataset.n_samples / cfg.batch))
    nodes = np.arange(1, model.n + 1)
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.lr(epoch)
        for g in opt.param_groups:
            g["lr"] = lr
        for _ in range(n_batches):
            idx = rng.choice(
                dataset.n_samples,
                size=min(cfg.batch, dataset.n_samples),
                replace=False,
            )
            perm = rng.permutation(nodes)
            groups = [
                set(chunk) for chunk in np.array_split(perm, cfg.split_groups)
            ]
            if iteration % cfg.step_size == 0 and r < t_max:
                r += 1
            xb = xs[np.sort(idx)]
            yb = ys[np.sort(idx)]
            for group in groups:
                mask = _link_group_mask(model, group)
                if mask.sum() == 0:
                    continue
                pred = model(xb)[:, :r, :]
                err = (pred - yb[:, :r, :]).abs() * mask
                loss = err.sum() / (mask.sum() * r * len(idx))
                if not torch.isfinite(loss):
                    raise PredictorError(
                        f"training diverged at epoch {epoch} iteration {iteration}"
                    )
                opt.zero_grad()
                loss.backward()
                opt.step()
                trace.append(TraceRow(epoch, iteration, r, loss.item()))
            iteration += 1
        model.check_finite()
    return model, trace


def feedback_update(
    model: TrafficPredictor,
    x: torch.Tensor,
    y_real: torch.Tensor,
    gamma: float,
) -> TrafficPredictor:
    """One squared-error gradient step against observed traffic."""
    pred = model(x)
    if pred.shape != y_real.shape:
        raise PredictorError(
            f"feedback shape mismatch: {tuple(pred.shape)} vs {tuple(y_real.shape)}"
        )
    loss = ((pred - y_real) ** 2).mean()
    model.zero_grad()
    loss.backward()
    with torch.no_grad():
        for p in model.parameters():
            if p.grad is not None:
                p -= gamma * p.grad
    model.zero_grad()
    model.check_finite()
    return model


def evaluate(
    model: TrafficPredictor,
    test: WindowedDataset,
) -> dict[str, np.ndarray]:
    """Denormalized MAE and MSE per horizon step over a test set."""
    if test.n_samples == 0:
        raise PredictorError("empty test set")
    with torch.no_grad():
        pred = model(torch.as_tensor(test.inputs)).numpy()
    norm = test.normalization
    pred_raw = norm.invert(pred)
    true_raw = norm.invert(test.targets)
    err = pred_raw - true_raw
    return {
        "mae": np.abs(err).mean(axis=(0, 2)),
        "mse": (err**2).mean(axis=(0, 2)),
    }


def forecast_error(pred: np.ndarray, true: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-horizon-step (MAE, MSE) of denormalized forecasts."""
    err = np.asarray(pred) - np.asarray(true)
    return np.abs(err).mean(axis=-1), (err**2).mean(axis=-1)


def baseline_predict(kind: str, history: np.ndarray, horizon: int, decay: float = 0.5) -> Forecast:
    """Model-free forecasts from raw link history (slots, links).

    no-model repeats the last observed slot; ewma repeats an exponentially
    weighted mean with the given decay.
    """
    hist = np.asarray(history, dtype=float)
    if hist.ndim != 2 or hist.shape[0] == 0:
        raise PredictorError("empty history")
    if kind == "no-model":
        level = hist[-1]
    elif kind == "ewma":
        if not (0 < decay <= 1):
            raise PredictorError("decay must be in (0, 1]")
        level = hist[0]
        for row in hist[1:]:
            level = decay * row + (1 - decay) * level
    else:
        raise PredictorError(f"unknown baseline {kind!r}")
    values = np.tile(level, (horizon, 1))
    return Forecast(horizon=horizon, values=values, denormalized=True)


def baseline_errors(
    kind: str,
    series: TrafficSeries,
    test: WindowedDataset,
    decay: float = 0.5,
) -> dict[str, np.ndarray]:
    """Evaluate a model-free baseline on the same test windows."""
    norm = test.normalization
    true_raw = norm.invert(test.targets)
    maes, mses = [], []
    in_len, out_len = test.in_len, test.out_len
    for i, start in enumerate(test.start_slots):
        s0 = start - 1
        hist = series.values[s0 : s0 + in_len]
        fc = baseline_predict(kind, hist, out_len, decay=decay)
        err = fc.values - true_raw[i]
        maes.append(np.abs(err).mean(axis=1))
        mses.append((err**2).mean(axis=1))
    return {"mae": np.mean(maes, axis=0), "mse": np.mean(mses, axis=0)}


# --- checkpointing ---------------------------------------------------------


def save_checkpoint(model: TrafficPredictor, topo: Topology, path) -> None:
    blob = {
        "version": 1,
        "n": model.n,
        "links": model.links,
        "in_len": model.in_len,
        "horizon": model.horizon,
        "topk": model.topk,
        "alpha": model.alpha,
        "beta": model.beta,
        "kernel": model.kernel,
        "d_embed": model.E1.shape[1],
        "channels": model.lift.shape[0],
        "topology": {
            "n": topo.n,
            "edges": topo.edges,
            "latency": topo.latency,
            "capacity": topo.capacity,
            "original_ids": topo.original_ids,
        },
        "state": model.state_dict(),
    }
    torch.save(blob, path)


def load_checkpoint(path) -> tuple[TrafficPredictor, Topology]:
    blob = torch.load(path, weights_only=False)
    if blob.get("version") != 1:
        raise PredictorError(f"unsupported checkpoint version {blob.get('version')}")
    t = blob["topology"]
    topo = Topology(
        n=t["n"],
        edges=tuple(tuple(e) for e in t["edges"]),
        latency=t["latency"],
        capacity=t["capacity"],
        original_ids=t["original_ids"],
    )
    model = TrafficPredictor(
        topo,
        in_len=blob["in_len"],
        horizon=blob["horizon"],
        d_embed=blob["d_embed"],
        channels=blob["channels"],
        topk=blob["topk"],
        alpha=blob["alpha"],
        beta=blob["beta"],
        kernel=blob["kernel"],
    )
    model.load_state_dict(blob["state"])
    return model, topo


def trace_to_csv(trace: list[TraceRow]) -> str:
    lines = ["epoch,iteration,r,loss"]
    for row in trace:
        lines.append(f"{row.epoch},{row.iteration},{row.r},{row.loss!r}")
    return "\n".join(lines) + "\n"
