"""Command-line interface for the telemetry planning pipeline."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from . import harness, highload, planner, predictor, pruning, traffic
from .harness import DEFAULT_CONFIG, load_config
from .netgraph import dump_topology, load_topology, random_topology


def _load_cfg(args) -> dict:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = dict(DEFAULT_CONFIG)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out:
        cfg["out_dir"] = args.out
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_topology(path: str):
    return load_topology(Path(path).read_text())


def cmd_gen_topo(args) -> int:
    cfg = _load_cfg(args)
    topo = random_topology(
        n=args.n, extra_edge_prob=args.extra_edge_prob, seed=cfg["seed"],
        capacity=args.capacity,
    )
    text = dump_topology(topo)
    out = _out_dir(cfg) / "topology.txt"
    out.write_text(text)
    print(f"wrote {out} ({topo.n} nodes, {len(topo.edges)} edges)")
    return 0


def cmd_gen_traffic(args) -> int:
    cfg = _load_cfg(args)
    topo = _read_topology(args.topology)
    profile = traffic.TrafficProfile(**cfg["traffic"].get("profile", {}))
    series = traffic.generate_traffic(topo, profile, args.slots, cfg["seed"])
    out = _out_dir(cfg) / "traffic.csv"
    out.write_text(traffic.export_csv(series))
    print(f"wrote {out} ({series.slots} slots, {len(series.links)} links)")
    return 0


def cmd_train_predictor(args) -> int:
    cfg = _load_cfg(args)
    topo = _read_topology(args.topology)
    series = traffic.ingest_csv(Path(args.traffic).read_text(), topo)
    pcfg = cfg["predictor"]
    train_set, _ = traffic.prepare_dataset(
        series, pcfg["in_len"], pcfg["horizon"], pcfg["split"]
    )
    model = predictor.TrafficPredictor(
        topo, in_len=pcfg["in_len"], horizon=pcfg["horizon"], seed=cfg["seed"]
    )
    tc = predictor.TrainConfig(
        max_horizon=pcfg["horizon"], seed=cfg["seed"], **pcfg.get("train", {})
    )
    model, trace = predictor.train(model, train_set, tc)
    out = _out_dir(cfg)
    predictor.save_checkpoint(model, topo, out / "predictor.pt")
    (out / "loss_trace.csv").write_text(predictor.trace_to_csv(trace))
    print(f"wrote {out / 'predictor.pt'} (final loss {trace[-1].loss:.6f})")
    return 0


def cmd_predict(args) -> int:
    cfg = _load_cfg(args)
    model, topo = predictor.load_checkpoint(args.model)
    series = traffic.ingest_csv(Path(args.traffic).read_text(), topo)
    pcfg = cfg["predictor"]
    train_set, test_set = traffic.prepare_dataset(
        series, model.in_len, model.horizon, pcfg["split"]
    )
    source = test_set if test_set.n_samples else train_set
    with torch.no_grad():
        pred = model(torch.as_tensor(source.inputs[-1])).numpy()
    raw = source.normalization.invert(pred)
    out = _out_dir(cfg) / "forecast.csv"
    fc = traffic.TrafficSeries(links=topo.edges, values=np.maximum(raw, 0.0))
    out.write_text(traffic.export_csv(fc))
    print(f"wrote {out} ({model.horizon} slots)")
    return 0


def cmd_identify(args) -> int:
    cfg = _load_cfg(args)
    topo = _read_topology(args.topology)
    fc = traffic.ingest_csv(Path(args.forecast).read_text(), topo)
    loads = highload.switch_load(topo, fc.values)
    icfg = cfg["identify"]
    hl = highload.identify_highload(loads, topo, icfg["theta"], icfg["mode"])
    out = _out_dir(cfg) / "highload.txt"
    out.write_text(" ".join(str(v) for v in sorted(hl.switches)) + "\n")
    print(f"high-load switches: {sorted(hl.switches)}")
    return 0


def cmd_prune(args) -> int:
    cfg = _load_cfg(args)
    topo = _read_topology(args.topology)
    targets = [int(p) for p in args.targets.split(",")]
    subnet = pruning.prune(topo, targets)
    out = _out_dir(cfg) / "subnetwork.txt"
    out.write_text(pruning.dump_subnetwork(subnet, topo))
    msg = f"wrote {out} ({len(subnet.nodes)} nodes, {len(subnet.edges)} edges)"
    if subnet.diagnostics:
        msg += f"; diagnostics: {subnet.diagnostics}"
    print(msg)
    return 0


def cmd_train_planner(args) -> int:
    cfg = _load_cfg(args)
    topo = _read_topology(args.topology)
    pcfg = harness.planner_config(cfg)
    policy = planner.PolicyParams(pcfg)
    gen = harness.make_instance_generator(topo, pcfg)
    policy, stats = planner.train_policy(policy, gen, pcfg, topo)
    out = _out_dir(cfg)
    torch.save(policy.state_dict(), out / "policy.pt")
    (out / "reward_trace.csv").write_text(planner.epoch_trace_csv(stats))
    print(f"wrote {out / 'policy.pt'} (final mean reward {stats[-1].mean_reward:.3f})")
    return 0


def _load_subnet_and_topo(args):
    topo = _read_topology(args.topology)
    subnet = pruning.load_subnetwork(Path(args.subnetwork).read_text())
    return subnet, topo


def cmd_plan(args) -> int:
    cfg = _load_cfg(args)
    subnet, topo = _load_subnet_and_topo(args)
    pcfg = harness.planner_config(cfg)
    policy = planner.PolicyParams(pcfg)
    policy.load_state_dict(torch.load(args.policy, weights_only=True))
    plan = planner.decode_greedy(policy, subnet, topo, pcfg)
    out = _out_dir(cfg) / "plan_learned.txt"
    out.write_text(planner.dump_plan(plan, topo, pcfg, seed=cfg["seed"]))
    print(f"wrote {out} (K={plan.k})")
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_cfg(args)
    subnet, topo = _load_subnet_and_topo(args)
    pcfg = harness.planner_config(cfg)
    graph = topo if args.method in ("dfs", "euler") else subnet
    plan = planner.baseline_plan(
        args.method, graph, topo, sorted(subnet.terminals), pcfg, seed=cfg["seed"]
    )
    out = _out_dir(cfg) / f"plan_{args.method}.txt"
    out.write_text(planner.dump_plan(plan, topo, pcfg, seed=cfg["seed"]))
    print(f"wrote {out} (K={plan.k})")
    return 0


def cmd_evaluate(args) -> int:
    report = harness.read_report(args.report)
    for row in harness.compare_planners(report):
        print(
            f"{row['planner']:>10}  K={row['k']:<3} C={row['c']:<8.2f} "
            f"T={row['t']:<10.2f} coverage={row['coverage']:.2f}"
        )
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_cfg(args)
    report = harness.run_pipeline(cfg)
    print(f"report written to {Path(cfg['out_dir']) / 'report.json'}")
    if len(report.get("plans", [])) >= 2:
        for row in harness.compare_planners(report):
            print(f"  {row['planner']:>10}  K={row['k']}  T={row['t']:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probeplan",
        description="Traffic-prediction-driven probe path planning toolkit",
    )
    parser.add_argument("--config", help="pipeline config YAML")
    parser.add_argument("--seed", type=int, help="override the pipeline seed")
    parser.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-topo", help="generate a random connected topology")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--extra-edge-prob", type=float, default=0.25)
    p.add_argument("--capacity", type=float, default=400.0)
    p.set_defaults(func=cmd_gen_topo)

    p = sub.add_parser("gen-traffic", help="generate synthetic link traffic")
    p.add_argument("--topology", required=True)
    p.add_argument("--slots", type=int, default=2000)
    p.set_defaults(func=cmd_gen_traffic)

    p = sub.add_parser("train-predictor", help="train the traffic forecaster")
    p.add_argument("--topology", required=True)
    p.add_argument("--traffic", required=True)
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("predict", help="forecast from a trained checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--traffic", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("identify", help="identify high-load switches")
    p.add_argument("--topology", required=True)
    p.add_argument("--forecast", required=True)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("prune", help="prune to a biconnected subnetwork")
    p.add_argument("--topology", required=True)
    p.add_argument("--targets", required=True, help="comma-separated node ids")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("train-planner", help="train the probe path policy")
    p.add_argument("--topology", required=True)
    p.set_defaults(func=cmd_train_planner)

    p = sub.add_parser("plan", help="greedy-decode a probe plan")
    p.add_argument("--topology", required=True)
    p.add_argument("--subnetwork", required=True)
    p.add_argument("--policy", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("baseline", help="run a classical planner")
    p.add_argument("--method", required=True, choices=["dfs", "euler", "netview", "sa"])
    p.add_argument("--topology", required=True)
    p.add_argument("--subnetwork", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="print the planner comparison table")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="run the full pipeline")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except harness.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
