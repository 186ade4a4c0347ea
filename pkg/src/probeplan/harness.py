"""End-to-end pipeline: traffic -> forecast -> identify -> prune -> plan.

Configuration is a nested YAML file; the run report is JSON plus CSV side
files (loss and reward traces). Every stochastic stage derives its seed from
the single pipeline seed, so identical (config, seed) runs produce identical
reports apart from the timing section.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path as FilePath

import numpy as np
import torch
import yaml

from . import highload, planner, predictor, pruning, traffic
from .netgraph import Topology, dump_topology, load_topology, random_topology
from .planner import PlannerConfig, PolicyParams, ProbePlan
from .predictor import TrafficPredictor, TrainConfig
from .pruning import Subnetwork
from .traffic import TrafficProfile, TrafficSeries


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r}: {message}")
        self.stage = stage


DEFAULT_CONFIG: dict = {
    "seed": 7,
    "out_dir": "run",
    "topology": {"generate": {"n": 20, "extra_edge_prob": 0.25}},
    "traffic": {"slots": 2000, "profile": {}},
    "predictor": {
        "in_len": 187,
        "horizon": 4,
        "split": 0.9,
        "d_embed": 16,
        "channels": 16,
        "train": {
            "epochs": 20,
            "batch": 32,
            "step_size": 5,
            "split_groups": 1,
            "lr_schedule": 0.005,
        },
    },
    "identify": {"theta": 0.8, "mode": "max-observed"},
    "planner": {
        "a": 1.0,
        "t_max": 120.0,
        "train": {"instances": 200, "batch": 32, "epochs": 30},
    },
    "baselines": ["dfs", "euler", "netview", "sa"],
    "skip": [],
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        user = yaml.safe_load(fh) or {}
    return _merge(DEFAULT_CONFIG, user)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]


def _stage_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def build_topology(cfg: dict, base_dir: FilePath | None = None) -> Topology:
    tcfg = cfg["topology"]
    if tcfg.get("file"):
        path = FilePath(tcfg["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_topology(path.read_text())
    gen = tcfg.get("generate", {})
    return random_topology(
        n=gen.get("n", 20),
        extra_edge_prob=gen.get("extra_edge_prob", 0.25),
        seed=_stage_seed(cfg["seed"], "topology"),
        capacity=gen.get("capacity", 400.0),
    )


def build_traffic(cfg: dict, topo: Topology, base_dir=None) -> TrafficSeries:
    tcfg = cfg["traffic"]
    if tcfg.get("csv"):
        path = FilePath(tcfg["csv"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return traffic.ingest_csv(path.read_text(), topo)
    profile = TrafficProfile(**tcfg.get("profile", {}))
    return traffic.generate_traffic(
        topo,
        profile,
        slots=tcfg.get("slots", 2000),
        seed=_stage_seed(cfg["seed"], "traffic"),
    )


def planner_config(cfg: dict) -> PlannerConfig:
    pcfg = cfg["planner"]
    train = pcfg.get("train", {})
    return PlannerConfig(
        a=pcfg.get("a", 1.0),
        t_max=pcfg.get("t_max", 120.0),
        lam=pcfg.get("lam"),
        allow_transit=pcfg.get("allow_transit", True),
        embed_dim=pcfg.get("embed_dim", 32),
        hidden_dim=pcfg.get("hidden_dim", 64),
        actor_lr=train.get("actor_lr", 1e-3),
        critic_lr=train.get("critic_lr", 1e-3),
        instances=train.get("instances", 200),
        batch=train.get("batch", 32),
        epochs=train.get("epochs", 30),
        seed=_stage_seed(cfg["seed"], "planner"),
    )


def make_instance_generator(
    topo: Topology,
    cfg: PlannerConfig,
    max_targets: int = 6,
    full_topology: bool = False,
):
    """Training instance distribution: random high-load sets, pruned.

    With ``full_topology`` the whole base topology is used as the planning
    graph (the no-pruning ablation); otherwise each instance is the pruned
    subnetwork of its target set.
    """
    cache: dict[int, Subnetwork] = {}

    def gen(index: int) -> Subnetwork:
        if index not in cache:
            rng = np.random.default_rng((cfg.seed, index))
            size = int(rng.integers(1, max_targets + 1))
            targets = sorted(
                int(v) for v in rng.choice(topo.n, size=size, replace=False) + 1
            )
            if full_topology:
                cache[index] = Subnetwork(
                    nodes=set(topo.nodes),
                    edges=set(topo.edges),
                    terminals=frozenset(targets),
                )
            else:
                subnet = pruning.prune(topo, targets)
                if subnet.diagnostics:
                    # fall back to the full topology when augmentation failed
                    subnet = Subnetwork(
                        nodes=set(topo.nodes),
                        edges=set(topo.edges),
                        terminals=frozenset(targets),
                    )
                cache[index] = subnet
        return cache[index]

    return gen


def _plan_stats(
    name: str,
    plan: ProbePlan,
    topo: Topology,
    cfg: PlannerConfig,
    targets,
    wall_time: float,
) -> dict:
    t, _ = planner.plan_latency(plan, topo)
    targets = set(targets)
    covered = len(targets & plan.covered) / len(targets) if targets else 1.0
    return {
        "planner": name,
        "k": plan.k,
        "c": planner.control_overhead(plan, cfg.a),
        "t": t,
        "coverage": covered,
        "wall_time": wall_time,
    }


def run_pipeline(cfg: dict, out_dir=None) -> dict:
    """Execute every stage and return the run report (also written to disk)."""
    out = FilePath(out_dir if out_dir is not None else cfg.get("out_dir", "run"))
    out.mkdir(parents=True, exist_ok=True)
    skip = set(cfg.get("skip", []))
    report: dict = {
        "provenance": {
            "config_hash": config_hash(cfg),
            "seed": cfg["seed"],
            "version": 1,
        },
        "timing": {},
    }
    torch.set_num_threads(1)

    def timed(stage, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            raise PipelineError(stage, f"{exc} (artifacts in {out})") from exc
        report["timing"][stage] = time.perf_counter() - t0
        return result

    topo = timed("topology", lambda: build_topology(cfg))
    (out / "topology.txt").write_text(dump_topology(topo))

    series = timed("traffic", lambda: build_traffic(cfg, topo))
    (out / "traffic.csv").write_text(traffic.export_csv(series))

    pcfg = cfg["predictor"]
    in_len, horizon = pcfg["in_len"], pcfg["horizon"]
    train_set, test_set = timed(
        "dataset",
        lambda: traffic.prepare_dataset(series, in_len, horizon, pcfg["split"]),
    )
    if test_set.n_samples == 0:
        raise PipelineError("dataset", "no test windows")

    use_model = "predictor" not in skip
    if use_model:
        model = TrafficPredictor(
            topo,
            in_len=in_len,
            horizon=horizon,
            d_embed=pcfg.get("d_embed", 16),
            channels=pcfg.get("channels", 16),
            seed=_stage_seed(cfg["seed"], "predictor-init"),
        )
        tc = TrainConfig(
            max_horizon=horizon,
            seed=_stage_seed(cfg["seed"], "predictor-train"),
            **pcfg.get("train", {}),
        )
        model, trace = timed("train-predictor", lambda: predictor.train(model, train_set, tc))
        (out / "loss_trace.csv").write_text(predictor.trace_to_csv(trace))
        predictor.save_checkpoint(model, topo, out / "predictor.pt")
        metrics = predictor.evaluate(model, test_set)
        report["predictor"] = {
            "mae": [float(x) for x in metrics["mae"]],
            "mse": [float(x) for x in metrics["mse"]],
        }
    else:
        model = None
        report["predictor"] = {"skipped": True}
    for kind in ("no-model", "ewma"):
        base = predictor.baseline_errors(kind, series, test_set)
        report.setdefault("predictor_baselines", {})[kind] = {
            "mae": [float(x) for x in base["mae"]],
            "mse": [float(x) for x in base["mse"]],
        }

    icfg = cfg["identify"]
    ident = timed(
        "identify",
        lambda: identification_metrics(
            topo, series, test_set, model, icfg["theta"], icfg["mode"]
        ),
    )
    report["identification"] = ident["summary"]
    v_h = ident["high_load"]
    report["high_load_switches"] = sorted(v_h)

    subnet = timed("prune", lambda: pruning.prune(topo, v_h))
    naive = pruning.naive_subnetwork(topo, v_h)
    (out / "subnetwork.txt").write_text(pruning.dump_subnetwork(subnet, topo))
    report["subnetwork"] = {
        "nodes": len(subnet.nodes),
        "edges": len(subnet.edges),
        "naive_edges": len(naive.edges),
        "biconnected": pruning.is_biconnected(subnet),
        "diagnostics": list(subnet.diagnostics),
    }

    plan_cfg = planner_config(cfg)
    plans: list[dict] = []
    if "planner" not in skip:
        policy = PolicyParams(plan_cfg)
        gen = make_instance_generator(topo, plan_cfg)
        t0 = time.perf_counter()
        policy, stats = planner.train_policy(policy, gen, plan_cfg, topo)
        train_time = time.perf_counter() - t0
        report["timing"]["train-planner"] = train_time
        (out / "reward_trace.csv").write_text(planner.epoch_trace_csv(stats))
        t0 = time.perf_counter()
        plan = planner.decode_greedy(policy, subnet, topo, plan_cfg)
        plans.append(
            _plan_stats("learned", plan, topo, plan_cfg, v_h, time.perf_counter() - t0)
        )
        (out / "plan_learned.txt").write_text(
            planner.dump_plan(plan, topo, plan_cfg, seed=cfg["seed"])
        )
    for method in cfg.get("baselines", []):
        t0 = time.perf_counter()
        plan = planner.baseline_plan(
            method,
            subnet if method in ("netview", "sa") else topo,
            topo,
            v_h,
            plan_cfg,
            seed=_stage_seed(cfg["seed"], f"baseline-{method}"),
        )
        plans.append(
            _plan_stats(method, plan, topo, plan_cfg, v_h, time.perf_counter() - t0)
        )
    report["plans"] = plans

    write_report(report, out / "report.json")
    return report


def identification_metrics(
    topo: Topology,
    series: TrafficSeries,
    test_set,
    model: TrafficPredictor | None,
    theta: float,
    mode: str,
    max_windows: int = 50,
) -> dict:
    """Average precision/recall/F1 of predicted high-load sets over test
    windows, for the trained model (or the true future when skipped) and the
    no-model baseline. Also returns the final-window high-load set used by
    the downstream stages."""
    norm = test_set.normalization
    true_raw = norm.invert(test_set.targets)
    n_windows = min(test_set.n_samples, max_windows)
    idx = np.linspace(0, test_set.n_samples - 1, n_windows).astype(int)
    idx = sorted(set(int(i) for i in idx))
    if model is not None:
        with torch.no_grad():
            preds = model(torch.as_tensor(test_set.inputs[idx])).numpy()
        preds_raw = norm.invert(preds)
    else:
        preds_raw = true_raw[idx]
    rows_model, rows_nomodel = [], []
    final_high: frozenset[int] = frozenset()
    for j, i in enumerate(idx):
        actual = highload.identify_highload(
            highload.switch_load(topo, true_raw[i]), topo, theta, mode
        )
        pred = highload.identify_highload(
            highload.switch_load(topo, np.maximum(preds_raw[j], 0.0)),
            topo,
            theta,
            mode,
        )
        rows_model.append(highload.classification_metrics(pred, actual)[:3])
        s0 = test_set.start_slots[i] - 1
        hist = series.values[s0 : s0 + test_set.in_len]
        nm = predictor.baseline_predict("no-model", hist, test_set.out_len)
        nm_set = highload.identify_highload(
            highload.switch_load(topo, nm.values), topo, theta, mode
        )
        rows_nomodel.append(highload.classification_metrics(nm_set, actual)[:3])
        if i == idx[-1]:
            final_high = pred.switches
    model_avg = np.mean(rows_model, axis=0)
    nomodel_avg = np.mean(rows_nomodel, axis=0)
    return {
        "summary": {
            "model": {
                "precision": float(model_avg[0]),
                "recall": float(model_avg[1]),
                "f1": float(model_avg[2]),
            },
            "no_model": {
                "precision": float(nomodel_avg[0]),
                "recall": float(nomodel_avg[1]),
                "f1": float(nomodel_avg[2]),
            },
            "theta": theta,
            "mode": mode,
        },
        "high_load": final_high if final_high else frozenset({1}),
    }


def compare_planners(report: dict) -> list[dict]:
    """Planner comparison table sorted by path count, then latency."""
    plans = report.get("plans", [])
    if len(plans) < 2:
        raise ValueError("need at least 2 planners to compare")
    return sorted(plans, key=lambda row: (row["k"], row["t"], row["planner"]))


def ablation_pruning_speedup(
    topo: Topology,
    cfg: PlannerConfig,
    probe_epochs: int = 10,
) -> dict:
    """Train on full topology for ``probe_epochs``; then train on pruned
    subnetworks until the same mean reward, comparing wall time."""
    full_gen = make_instance_generator(topo, cfg, full_topology=True)
    policy_full = PolicyParams(cfg, seed=cfg.seed)
    full_cfg = PlannerConfig(**{**cfg.__dict__, "epochs": probe_epochs})
    _, full_stats = planner.train_policy(policy_full, full_gen, full_cfg, topo)
    target = full_stats[-1].mean_reward
    full_time = full_stats[-1].wall_time

    pruned_gen = make_instance_generator(topo, cfg)
    # warm the prune cache so instance construction is not timed
    for i in range(cfg.instances):
        pruned_gen(i)
    policy_pruned = PolicyParams(cfg, seed=cfg.seed)
    _, pruned_stats = planner.train_policy(
        policy_pruned, pruned_gen, cfg, topo, reward_target=target
    )
    reached = [s for s in pruned_stats if s.mean_reward <= target]
    return {
        "full_epoch_reward": target,
        "full_wall_time": full_time,
        "pruned_wall_time": pruned_stats[-1].wall_time,
        "pruned_reached_target": bool(reached),
        "pruned_time_to_target": reached[0].wall_time if reached else None,
    }


def write_report(report: dict, path) -> None:
    FilePath(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def read_report(path) -> dict:
    return json.loads(FilePath(path).read_text())


def report_without_timing(report: dict) -> dict:
    out = {k: v for k, v in report.items() if k != "timing"}
    if "plans" in out:
        out["plans"] = [
            {k: v for k, v in row.items() if k != "wall_time"}
            for row in out["plans"]
        ]
    return out
