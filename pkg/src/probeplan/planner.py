"""High-frequency probe path planning on a pruned subnetwork.

The learned planner rolls out a constrained MDP: actions are "append node to
the current probe path" or "0" (close it and open a new one); infeasible
actions are masked to probability zero, which makes every decoded plan cover
the high-load switches within the latency budget by construction. The policy
is a content-based attention decoder over per-node input tuples, trained with
an actor-critic policy gradient. Classical baselines (DFS cover, Euler
trails, shortest-path covering, simulated annealing) share the same plan
evaluation.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
from dataclasses import dataclass, field, replace

import numpy as np
import torch
from torch import nn

from .netgraph import Path, Topology, canonical_edge
from .pruning import Subnetwork

torch.set_default_dtype(torch.float64)


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProbePlan:
    """A set of probe paths over a subnetwork."""

    paths: tuple[tuple[int, ...], ...]

    @property
    def k(self) -> int:
        return len(self.paths)

    @property
    def covered(self) -> frozenset[int]:
        return frozenset(v for p in self.paths for v in p)


@dataclass
class PlannerConfig:
    """Objective and training hyper-parameters for the probe planner."""

    a: float = 1.0                 # overhead per probe path
    t_max: float = 100.0           # latency budget (microseconds)
    lam: float | None = None       # penalty; default 1e4 * a * n at use site
    allow_transit: bool = True     # revisit fulfilled nodes when stuck
    embed_dim: int = 32
    hidden_dim: int = 64
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    instances: int = 2000
    batch: int = 64
    epochs: int = 20
    seed: int = 0

    def penalty(self, n: int) -> float:
        return 1e4 * self.a * n if self.lam is None else self.lam


def plan_latency(plan: ProbePlan, topo: Topology) -> tuple[float, list[float]]:
    """Max and per-path probe latencies; empty plan reports 0."""
    per_path = []
    for p in plan.paths:
        per_path.append(
            sum(topo.edge_latency(a, b) for a, b in zip(p, p[1:]))
        )
    return (max(per_path) if per_path else 0.0), per_path


def control_overhead(plan: ProbePlan, a: float) -> float:
    if a <= 0:
        raise PlannerError("overhead scale must be positive")
    return a * plan.k


def reward(plan: ProbePlan, topo: Topology, cfg: PlannerConfig) -> float:
    """Minimized objective: a*K plus a penalty when latency exceeds T_max."""
    t, _ = plan_latency(plan, topo)
    flag = 1 if t > cfg.t_max else 0
    return control_overhead(plan, cfg.a) + cfg.penalty(topo.n) * flag


def validate_plan(plan: ProbePlan, subnet: Subnetwork) -> list[str]:
    diags = []
    for p in plan.paths:
        for a, b in zip(p, p[1:]):
            if canonical_edge(a, b) not in subnet.edges:
                diags.append(f"non-edge hop ({a},{b})")
        for v in p:
            if v not in subnet.nodes:
                diags.append(f"node {v} outside subnetwork")
    return diags


# --- episode mechanics -----------------------------------------------------


@dataclass
class EpisodeState:
    """Rollout state: current node (0 = opening a new path) and progress."""

    current: int
    uncovered: frozenset[int]
    finished_paths: tuple[tuple[int, ...], ...]
    current_path: tuple[int, ...]
    current_path_latency: float

    @property
    def terminal(self) -> bool:
        return not self.uncovered


def initial_state(targets) -> EpisodeState:
    return EpisodeState(
        current=0,
        uncovered=frozenset(targets),
        finished_paths=(),
        current_path=(),
        current_path_latency=0.0,
    )


def feasible_mask(
    state: EpisodeState,
    subnet: Subnetwork,
    topo: Topology,
    cfg: PlannerConfig,
) -> np.ndarray:
    """Boolean vector over actions [0, 1..n]; True means selectable.

    Masks nodes outside the subnetwork, nodes not adjacent to the current
    node, already-covered nodes, and any hop that would push the current
    path past the latency budget. Covered neighbors are re-admitted as
    transit hops only when nothing else is selectable (``allow_transit``).
    When every high-load switch is covered, all actions are masked.
    """
    mask = np.zeros(topo.n + 1, dtype=bool)
    if state.terminal:
        return mask
    if state.current == 0:
        for v in state.uncovered:
            if v in subnet.nodes:
                mask[v] = True
        return mask
    budget = cfg.t_max - state.current_path_latency
    transit: list[int] = []
    for w in subnet.neighbors(state.current):
        lat = topo.edge_latency(state.current, w)
        if lat > budget:
            continue
        if w in state.uncovered:
            mask[w] = True
        else:
            transit.append(w)
    if cfg.allow_transit and not mask[1:].any():
        for w in transit:
            mask[w] = True
    mask[0] = True  # close the current path (it is non-empty here)
    return mask


def step(
    state: EpisodeState,
    action: int,
    subnet: Subnetwork,
    topo: Topology,
) -> EpisodeState:
    """Apply an unmasked action; raises on contract violations."""
    if state.terminal:
        raise PlannerError("step on terminal state")
    if action == 0:
        if not state.current_path:
            raise PlannerError("cannot close an empty path")
        return replace(
            state,
            current=0,
            finished_paths=state.finished_paths + (state.current_path,),
            current_path=(),
            current_path_latency=0.0,
        )
    if action not in subnet.nodes:
        raise PlannerError(f"action {action} outside subnetwork")
    if state.current == 0:
        return replace(
            state,
            current=action,
            uncovered=state.uncovered - {action},
            current_path=(action,),
            current_path_latency=0.0,
        )
    if canonical_edge(state.current, action) not in subnet.edges:
        raise PlannerError(f"no subnet edge ({state.current},{action})")
    lat = topo.edge_latency(state.current, action)
    return replace(
        state,
        current=action,
        uncovered=state.uncovered - {action},
        current_path=state.current_path + (action,),
        current_path_latency=state.current_path_latency + lat,
    )


def finish_plan(state: EpisodeState) -> ProbePlan:
    paths = state.finished_paths
    if state.current_path:
        paths = paths + (state.current_path,)
    return ProbePlan(paths=paths)


# --- instance encoding and policy network ----------------------------------


def encode_instance(subnet: Subnetwork, topo: Topology) -> list[dict]:
    """One input tuple per action token: the synthetic "0" token plus each
    subnetwork node with its subnetwork adjacency and per-neighbor
    latencies. Restricting the inputs to the subnetwork is what makes the
    policy's work scale with the pruned instance, not the base topology."""
    inputs = [{"token": 0, "neighbors": (), "latencies": ()}]
    adj = subnet.adjacency()
    for v in sorted(subnet.nodes):
        nbrs = tuple(adj.get(v, ()))
        inputs.append(
            {
                "token": v,
                "in_subnet": True,
                "terminal": v in subnet.terminals,
                "neighbors": nbrs,
                "latencies": tuple(topo.edge_latency(v, w) for w in nbrs),
            }
        )
    return inputs


_STATIC_FEATS = 6
_DYNAMIC_FEATS = 5


def _static_features(inputs: list[dict], topo: Topology) -> np.ndarray:
    """Order-free per-token statistics of the input tuples.

    Neighbor lists are reduced to symmetric aggregates (degree, latency
    stats) so a consistent node relabeling simply permutes the rows.
    """
    max_lat = max(topo.latency.values())
    feats = np.zeros((len(inputs), _STATIC_FEATS))
    for i, x in enumerate(inputs):
        if x["token"] == 0:
            feats[i, 0] = 1.0
            continue
        feats[i, 1] = 1.0 if x.get("in_subnet") else 0.0
        feats[i, 2] = 1.0 if x.get("terminal") else 0.0
        lats = x["latencies"]
        feats[i, 3] = len(lats) / max(1, topo.n - 1)
        if lats:
            feats[i, 4] = min(lats) / max_lat
            feats[i, 5] = (sum(lats) / len(lats)) / max_lat
    return feats


def _dynamic_features(
    inputs: list[dict],
    state: EpisodeState,
    topo: Topology,
    cfg: PlannerConfig,
) -> np.ndarray:
    max_lat = max(topo.latency.values())
    feats = np.zeros((len(inputs), _DYNAMIC_FEATS))
    budget_frac = (
        max(0.0, cfg.t_max - state.current_path_latency) / cfg.t_max
        if cfg.t_max > 0
        else 0.0
    )
    for i, x in enumerate(inputs):
        v = x["token"]
        feats[i, 3] = 1.0 if state.current == 0 else 0.0
        feats[i, 4] = budget_frac
        if v == 0:
            continue
        if v in state.uncovered:
            feats[i, 0] = 1.0
        if state.current != 0 and state.current in x.get("neighbors", ()):
            feats[i, 1] = 1.0
            feats[i, 2] = topo.edge_latency(v, state.current) / max_lat
    return feats


class PolicyParams(nn.Module):
    """Attention-based decoder policy with a value head."""

    def __init__(self, cfg: PlannerConfig, seed: int | None = None):
        super().__init__()
        if seed is None:
            seed = cfg.seed
        torch.manual_seed(seed)
        d, h = cfg.embed_dim, cfg.hidden_dim
        in_dim = _STATIC_FEATS + _DYNAMIC_FEATS
        self.embed = nn.Linear(in_dim, d)
        self.gru = nn.GRUCell(d, h)
        self.w_a = nn.Linear(d + h, h)
        self.v_a = nn.Linear(h, 1, bias=False)
        self.w_c = nn.Linear(d + d, h)
        self.v_c = nn.Linear(h, 1, bias=False)
        self.critic_hidden = nn.Linear(d, h)
        self.critic_out = nn.Linear(h, 1)
        self.hidden_dim = h

    def initial_hidden(self) -> torch.Tensor:
        return torch.zeros(self.hidden_dim)

    def value(self, embedded: torch.Tensor) -> torch.Tensor:
        """Critic estimate from the mean input embedding."""
        pooled = embedded.mean(dim=0)
        return self.critic_out(torch.relu(self.critic_hidden(pooled))).squeeze(-1)


def policy_forward(
    policy: PolicyParams,
    embedded: torch.Tensor,
    hidden: torch.Tensor,
    mask: np.ndarray,
) -> torch.Tensor:
    """Action probabilities: content-based attention over the input set.

    Alignment scores over tokens give a context vector; output scores over
    tokens are softmaxed with masked entries forced to exactly zero.
    """
    if not mask.any():
        raise PlannerError("all actions masked")
    u = self_align(policy, embedded, hidden)
    a = torch.softmax(u, dim=0)
    context = (a[:, None] * embedded).sum(dim=0)
    cat = torch.cat(
        [embedded, context[None, :].expand(embedded.shape[0], -1)], dim=1
    )
    logits = policy.v_c(torch.tanh(policy.w_c(cat))).squeeze(-1)
    masked_logits = logits.masked_fill(
        ~torch.as_tensor(mask, dtype=torch.bool), float("-inf")
    )
    return torch.softmax(masked_logits, dim=0)


def self_align(
    policy: PolicyParams, embedded: torch.Tensor, hidden: torch.Tensor
) -> torch.Tensor:
    cat = torch.cat(
        [embedded, hidden[None, :].expand(embedded.shape[0], -1)], dim=1
    )
    return policy.v_a(torch.tanh(policy.w_a(cat))).squeeze(-1)


@dataclass
class Rollout:
    plan: ProbePlan
    log_prob: torch.Tensor
    value: torch.Tensor
    steps: int


def _embed_state(
    policy: PolicyParams,
    static: np.ndarray,
    inputs: list[dict],
    state: EpisodeState,
    topo: Topology,
    cfg: PlannerConfig,
) -> torch.Tensor:
    dyn = _dynamic_features(inputs, state, topo, cfg)
    feats = torch.as_tensor(np.concatenate([static, dyn], axis=1))
    return policy.embed(feats)


def rollout(
    policy: PolicyParams,
    subnet: Subnetwork,
    topo: Topology,
    cfg: PlannerConfig,
    sample: bool,
    rng: torch.Generator | None = None,
    need_grad: bool = True,
) -> Rollout:
    """Run one episode; greedy argmax when ``sample`` is False."""
    inputs = encode_instance(subnet, topo)
    static = _static_features(inputs, topo)
    # mask entries live in the full action space [0, 1..n]; inputs only
    # cover the subnetwork, so translate between the two index spaces
    tokens = np.array([x["token"] for x in inputs])
    state = initial_state(subnet.terminals)
    hidden = policy.initial_hidden()
    log_prob = torch.zeros(())
    value = None
    steps = 0
    ctx = torch.enable_grad() if need_grad else torch.no_grad()
    with ctx:
        while not state.terminal:
            embedded = _embed_state(policy, static, inputs, state, topo, cfg)
            if value is None:
                value = policy.value(embedded)
            mask = feasible_mask(state, subnet, topo, cfg)
            if not mask.any():
                raise PlannerError(
                    "dead end with uncovered switches; mask construction broken"
                )
            probs = policy_forward(policy, embedded, hidden, mask[tokens])
            if sample:
                choice = int(
                    torch.multinomial(probs, 1, generator=rng).item()
                )
            else:
                choice = int(torch.argmax(probs).item())
            log_prob = log_prob + torch.log(probs[choice])
            hidden = policy.gru(embedded[choice][None, :], hidden[None, :])[0]
            state = step(state, int(tokens[choice]), subnet, topo)
            steps += 1
    plan = finish_plan(state)
    if value is None:  # no uncovered switches at start
        value = torch.zeros(())
    return Rollout(plan=plan, log_prob=log_prob, value=value, steps=steps)


def decode_greedy(
    policy: PolicyParams,
    subnet: Subnetwork,
    topo: Topology,
    cfg: PlannerConfig,
) -> ProbePlan:
    """Always pick the highest-probability unmasked action."""
    return rollout(policy, subnet, topo, cfg, sample=False, need_grad=False).plan


@dataclass
class TrainEpochStats:
    epoch: int
    mean_reward: float
    violation_rate: float
    wall_time: float = 0.0


def train_policy(
    policy: PolicyParams,
    instance_gen,
    cfg: PlannerConfig,
    topo: Topology,
    reward_target: float | None = None,
) -> tuple[PolicyParams, list[TrainEpochStats]]:
    """Actor-critic policy gradient.

    ``instance_gen(index)`` returns the Subnetwork for training instance
    ``index``. Each epoch samples ``batch`` instances, rolls them out by
    sampling from the policy, and updates the actor with the
    advantage-weighted log-probability gradient and the critic with the
    squared advantage. Each epoch's ``mean_reward`` is a greedy evaluation
    on a fixed held-in subset; ``wall_time`` counts training only. Stops
    early once ``reward_target`` is reached, when given.
    """
    import time

    torch.set_num_threads(1)
    rng = torch.Generator().manual_seed(cfg.seed)
    np_rng = np.random.default_rng(cfg.seed)
    actor_params = [
        p
        for name, p in policy.named_parameters()
        if not name.startswith("critic")
    ]
    critic_params = [
        p for name, p in policy.named_parameters() if name.startswith("critic")
    ]
    opt_actor = torch.optim.Adam(actor_params, lr=cfg.actor_lr)
    opt_critic = torch.optim.Adam(critic_params, lr=cfg.critic_lr)
    stats: list[TrainEpochStats] = []
    # fixed held-in set for the per-epoch greedy evaluation; sampled-rollout
    # rewards mix exploration noise into the trace, greedy decodes do not
    eval_set = [instance_gen(i) for i in range(min(16, cfg.instances))]
    train_time = 0.0
    for epoch in range(1, cfg.epochs + 1):
        tick = time.perf_counter()
        idx = np_rng.integers(0, cfg.instances, size=cfg.batch)
        rewards = []
        violations = 0
        actor_terms = []
        critic_terms = []
        for i in idx:
            subnet = instance_gen(int(i))
            ro = rollout(policy, subnet, topo, cfg, sample=True, rng=rng)
            r = reward(ro.plan, topo, cfg)
            t, _ = plan_latency(ro.plan, topo)
            if t > cfg.t_max:
                violations += 1
            rewards.append(r)
            adv = r - ro.value.detach()
            actor_terms.append(adv * ro.log_prob)
            critic_terms.append((r - ro.value) ** 2)
        actor_loss = torch.stack(actor_terms).mean()
        critic_loss = torch.stack(critic_terms).mean()
        if not (torch.isfinite(actor_loss) and torch.isfinite(critic_loss)):
            raise PlannerError(f"non-finite loss at epoch {epoch}")
        opt_actor.zero_grad()
        opt_critic.zero_grad()
        (actor_loss + critic_loss).backward()
        opt_actor.step()
        opt_critic.step()
        train_time += time.perf_counter() - tick
        mean_r = float(
            np.mean(
                [
                    reward(decode_greedy(policy, s, topo, cfg), topo, cfg)
                    for s in eval_set
                ]
            )
        )
        stats.append(
            TrainEpochStats(
                epoch=epoch,
                mean_reward=mean_r,
                violation_rate=violations / len(idx),
                wall_time=train_time,
            )
        )
        if reward_target is not None and mean_r <= reward_target:
            break
    return policy, stats


# --- classical baselines ---------------------------------------------------


def split_by_budget(plan: ProbePlan, topo: Topology, t_max: float) -> ProbePlan:
    """Cut any path that exceeds the latency budget into feasible pieces.

    The latency budget applies to every probe path regardless of which
    planner produced it, so traversal-based covers are post-processed here.
    Node coverage is preserved; each cut restarts at the crossing node.
    """
    out: list[tuple[int, ...]] = []
    for p in plan.paths:
        cur = [p[0]]
        lat = 0.0
        for a, b in zip(p, p[1:]):
            t = topo.edge_latency(a, b)
            if lat + t > t_max:
                out.append(tuple(cur))
                cur = [b]
                lat = 0.0
            else:
                cur.append(b)
                lat += t
        out.append(tuple(cur))
    return ProbePlan(paths=tuple(out))


def _graph_adjacency(graph: Subnetwork | Topology) -> dict[int, list[int]]:
    if isinstance(graph, Topology):
        return {v: [w for w, _ in graph.neighbors(v)] for v in graph.nodes}
    return graph.adjacency()


def _graph_nodes(graph: Subnetwork | Topology) -> list[int]:
    if isinstance(graph, Topology):
        return list(graph.nodes)
    return sorted(graph.nodes)


def _graph_dijkstra(
    adj: dict[int, list[int]], topo: Topology, src: int
) -> dict[int, tuple[float, tuple[int, ...]]]:
    """All shortest paths from src within the given adjacency, lexicographic
    tie-breaking, latencies taken from the base topology."""
    best: dict[int, tuple[float, tuple[int, ...]]] = {}
    heap = [(0.0, (src,))]
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in best and best[node] <= (dist, path):
            continue
        best[node] = (dist, path)
        for w in adj[node]:
            cand = (dist + topo.edge_latency(node, w), path + (w,))
            if w not in best or cand < best[w]:
                heapq.heappush(heap, cand)
    return best


def dfs_plan(graph: Subnetwork | Topology, topo: Topology) -> ProbePlan:
    """DFS traversal path cover: each fresh descent extends the current
    path; a branch after backtracking starts a new path at the branch node."""
    adj = _graph_adjacency(graph)
    nodes = _graph_nodes(graph)
    root = nodes[0]
    visited = {root}
    paths: list[list[int]] = []
    cur = [root]

    def dfs(v: int) -> None:
        nonlocal cur
        for w in adj[v]:
            if w not in visited:
                visited.add(w)
                if cur[-1] == v:
                    cur.append(w)
                else:
                    paths.append(cur)
                    cur = [v, w]
                dfs(w)

    import sys

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10 * len(nodes) + 100))
    try:
        dfs(root)
    finally:
        sys.setrecursionlimit(old_limit)
    paths.append(cur)
    return ProbePlan(paths=tuple(tuple(p) for p in paths))


def euler_plan(graph: Subnetwork | Topology, topo: Topology) -> ProbePlan:
    """Cover every edge with max(1, odd/2) open trails.

    Odd-degree vertices are paired by virtual edges; an Euler circuit of the
    augmented multigraph is split at the virtual edges into real trails.
    """
    adj = _graph_adjacency(graph)
    nodes = _graph_nodes(graph)
    edges: list[tuple[int, int]] = sorted(
        {canonical_edge(v, w) for v in adj for w in adj[v]}
    )
    odd = sorted(v for v in nodes if len(adj[v]) % 2 == 1)
    multi: dict[int, list[tuple[int, int]]] = {v: [] for v in nodes}
    edge_id = 0
    virtual: set[int] = set()
    for (u, v) in edges:
        multi[u].append((v, edge_id))
        multi[v].append((u, edge_id))
        edge_id += 1
    for i in range(0, len(odd), 2):
        multi[odd[i]].append((odd[i + 1], edge_id))
        multi[odd[i + 1]].append((odd[i], edge_id))
        virtual.add(edge_id)
        edge_id += 1
    for v in multi:
        multi[v].sort()
    # Hierholzer circuit on the (now even-degree) multigraph
    used: set[int] = set()
    start = nodes[0]
    ptr = {v: 0 for v in nodes}
    path_stack: list[tuple[int, int | None]] = [(start, None)]
    circuit: list[tuple[int, int | None]] = []  # (node, edge used to reach it)
    while path_stack:
        v, _ = path_stack[-1]
        advanced = False
        while ptr[v] < len(multi[v]):
            w, eid = multi[v][ptr[v]]
            ptr[v] += 1
            if eid in used:
                continue
            used.add(eid)
            path_stack.append((w, eid))
            advanced = True
            break
        if not advanced:
            circuit.append(path_stack.pop())
    circuit.reverse()
    # split the closed circuit at virtual edges into real trails
    segments: list[list[int]] = [[circuit[0][0]]]
    for (node, via) in circuit[1:]:
        if via in virtual:
            segments.append([node])
        else:
            segments[-1].append(node)
    if len(segments) > 1:
        # the circuit wraps: its last segment ends where the first begins
        first = segments.pop(0)
        segments[-1].extend(first[1:])
    trails = [t for t in segments if len(t) > 1 or not virtual]
    return ProbePlan(paths=tuple(tuple(t) for t in trails))


def netview_plan(
    graph: Subnetwork | Topology, topo: Topology, targets
) -> ProbePlan:
    """Repeatedly route the closest-pair shortest path through uncovered
    targets until every target is covered."""
    adj = _graph_adjacency(graph)
    uncovered = set(targets)
    paths: list[tuple[int, ...]] = []
    while uncovered:
        if len(uncovered) == 1:
            paths.append((uncovered.pop(),))
            break
        best: tuple[float, tuple[int, ...]] | None = None
        for a in sorted(uncovered):
            table = _graph_dijkstra(adj, topo, a)
            for b in sorted(uncovered):
                if b <= a:
                    continue
                cand = table.get(b)
                if cand is not None and (best is None or cand < best):
                    best = cand
        if best is None:
            raise PlannerError("targets not mutually reachable")
        _, path = best
        paths.append(path)
        uncovered -= set(path)
    return ProbePlan(paths=tuple(paths))


# --- terminal-sequence plan representation (SA + exhaustive oracle) --------


def _terminal_distances(
    graph: Subnetwork | Topology, topo: Topology, terminals
) -> tuple[dict[tuple[int, int], float], dict[tuple[int, int], tuple[int, ...]]]:
    adj = _graph_adjacency(graph)
    dist: dict[tuple[int, int], float] = {}
    witness: dict[tuple[int, int], tuple[int, ...]] = {}
    for a in terminals:
        table = _graph_dijkstra(adj, topo, a)
        for b in terminals:
            if b == a:
                continue
            d, p = table[b]
            dist[(a, b)] = d
            witness[(a, b)] = p
    return dist, witness


def _realize(
    sequences: list[list[int]],
    witness: dict[tuple[int, int], tuple[int, ...]],
) -> ProbePlan:
    """Concatenate shortest paths between consecutive terminals."""
    paths = []
    for seq in sequences:
        walk: list[int] = [seq[0]]
        for a, b in zip(seq, seq[1:]):
            walk.extend(witness[(a, b)][1:])
        paths.append(tuple(walk))
    return ProbePlan(paths=tuple(paths))


def _seq_latency(seq: list[int], dist: dict[tuple[int, int], float]) -> float:
    return sum(dist[(a, b)] for a, b in zip(seq, seq[1:]))


def sa_plan(
    graph: Subnetwork | Topology,
    topo: Topology,
    targets,
    cfg: PlannerConfig,
    seed: int = 0,
    iterations: int = 4000,
    t0: float = 2.0,
    cooling: float = 0.995,
) -> ProbePlan:
    """Simulated annealing over plans.

    A plan is an ordered partition of the targets; it is realized by
    concatenating shortest paths between consecutive targets, which is
    latency-optimal for a fixed visiting order. Moves relocate or swap
    targets, split a sequence, or merge two sequences; geometric cooling.
    """
    terminals = sorted(set(targets))
    dist, witness = _terminal_distances(graph, topo, terminals)
    rng = random.Random(seed)
    lam = cfg.penalty(topo.n)

    def energy(seqs: list[list[int]]) -> float:
        worst = max((_seq_latency(s, dist) for s in seqs), default=0.0)
        flag = 1 if worst > cfg.t_max else 0
        # small latency term orders equal-K plans without changing the argmin
        return cfg.a * len(seqs) + lam * flag + 1e-9 * worst

    state = [[v] for v in terminals]
    best = [list(s) for s in state]
    e_cur = energy(state)
    e_best = e_cur
    temp = t0 * cfg.a
    for _ in range(iterations):
        cand = [list(s) for s in state]
        move = rng.randrange(4)
        if move == 0 and len(cand) >= 2:  # merge two sequences
            i, j = rng.sample(range(len(cand)), 2)
            cand[i] = cand[i] + cand[j]
            del cand[j]
        elif move == 1:  # relocate a target
            i = rng.randrange(len(cand))
            if len(cand[i]) == 0:
                continue
            v = cand[i].pop(rng.randrange(len(cand[i])))
            if not cand[i]:
                del cand[i]
            j = rng.randrange(len(cand) + 1)
            if j == len(cand):
                cand.append([v])
            else:
                pos = rng.randrange(len(cand[j]) + 1)
                cand[j].insert(pos, v)
        elif move == 2 and len(terminals) >= 2:  # swap two targets
            flat = [(i, k) for i, s in enumerate(cand) for k in range(len(s))]
            (i1, k1), (i2, k2) = rng.sample(flat, 2)
            cand[i1][k1], cand[i2][k2] = cand[i2][k2], cand[i1][k1]
        else:  # split a sequence
            longs = [i for i, s in enumerate(cand) if len(s) >= 2]
            if not longs:
                continue
            i = rng.choice(longs)
            cut = rng.randrange(1, len(cand[i]))
            cand.insert(i + 1, cand[i][cut:])
            cand[i] = cand[i][:cut]
        e_new = energy(cand)
        if e_new <= e_cur or rng.random() < math.exp((e_cur - e_new) / temp):
            state, e_cur = cand, e_new
            if e_cur < e_best:
                best, e_best = [list(s) for s in state], e_cur
        temp = max(temp * cooling, 1e-6)
    return _realize(best, witness)


def exhaustive_min_paths(
    graph: Subnetwork | Topology,
    topo: Topology,
    targets,
    cfg: PlannerConfig,
) -> tuple[int, ProbePlan | None]:
    """Exact minimum path count by enumeration (small target sets only).

    The cheapest walk covering a target subset in one path is the open-TSP
    value over the subset's shortest-path distances (Held-Karp); the minimum
    K is then a partition DP over feasible subsets. Returns (K, plan), or
    (0, None) when no feasible plan exists.
    """
    terminals = sorted(set(targets))
    m = len(terminals)
    if m == 0:
        return 0, ProbePlan(paths=())
    if m > 12:
        raise PlannerError("exhaustive oracle limited to 12 targets")
    dist, witness = _terminal_distances(graph, topo, terminals)
    full = (1 << m) - 1

    # Held-Karp open path value per subset
    subset_cost = [math.inf] * (1 << m)
    subset_order: list[list[int] | None] = [None] * (1 << m)
    dp: dict[tuple[int, int], tuple[float, tuple[int, ...]]] = {}
    for i in range(m):
        dp[(1 << i, i)] = (0.0, (i,))
    for mask_bits in range(1, 1 << m):
        for last in range(m):
            if (mask_bits, last) not in dp:
                continue
            d, order = dp[(mask_bits, last)]
            if d < subset_cost[mask_bits]:
                subset_cost[mask_bits] = d
                subset_order[mask_bits] = [terminals[i] for i in order]
            for nxt in range(m):
                if mask_bits & (1 << nxt):
                    continue
                nd = d + dist[(terminals[last], terminals[nxt])]
                key = (mask_bits | (1 << nxt), nxt)
                cand = (nd, order + (nxt,))
                if key not in dp or cand < dp[key]:
                    dp[key] = cand

    feasible = [
        mask_bits
        for mask_bits in range(1, full + 1)
        if subset_cost[mask_bits] <= cfg.t_max
    ]
    # partition DP: fewest feasible subsets covering all targets
    INF = m + 1
    best_k = [INF] * (full + 1)
    best_choice: list[int | None] = [None] * (full + 1)
    best_k[0] = 0
    for mask_bits in range(1, full + 1):
        sub = mask_bits
        while sub:
            if subset_cost[sub] <= cfg.t_max:
                rest = mask_bits & ~sub
                if best_k[rest] + 1 < best_k[mask_bits]:
                    best_k[mask_bits] = best_k[rest] + 1
                    best_choice[mask_bits] = sub
            sub = (sub - 1) & mask_bits
    if best_k[full] > m:
        return 0, None
    sequences = []
    cur = full
    while cur:
        sub = best_choice[cur]
        sequences.append(list(subset_order[sub]))
        cur &= ~sub
    return best_k[full], _realize(sequences, witness)


def baseline_plan(
    method: str,
    graph: Subnetwork | Topology,
    topo: Topology,
    targets,
    cfg: PlannerConfig,
    seed: int = 0,
    sa_iterations: int = 4000,
) -> ProbePlan:
    """Dispatch to one of the classical planners.

    Traversal covers (dfs, euler, netview) are split wherever a path would
    exceed the latency budget; sa enforces the budget in its objective.
    """
    if method == "dfs":
        plan = dfs_plan(graph, topo)
    elif method == "euler":
        plan = euler_plan(graph, topo)
    elif method == "netview":
        plan = netview_plan(graph, topo, targets)
    elif method == "sa":
        return sa_plan(graph, topo, targets, cfg, seed=seed, iterations=sa_iterations)
    else:
        raise PlannerError(f"unknown baseline {method!r}")
    return split_by_budget(plan, topo, cfg.t_max)


# --- plan file format ------------------------------------------------------


def dump_plan(
    plan: ProbePlan, topo: Topology, cfg: PlannerConfig, seed: int | None = None
) -> str:
    t, _ = plan_latency(plan, topo)
    c = control_overhead(plan, cfg.a) if plan.k else 0.0
    lines = [
        f"# K {plan.k}",
        f"# T {t!r}",
        f"# C {c!r}",
    ]
    if seed is not None:
        lines.append(f"# seed {seed}")
    for p in plan.paths:
        lines.append(" ".join(str(v) for v in p))
    return "\n".join(lines) + "\n"


def load_plan(text: str) -> ProbePlan:
    paths = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        paths.append(tuple(int(p) for p in line.split()))
    return ProbePlan(paths=tuple(paths))


def epoch_trace_csv(stats: list[TrainEpochStats]) -> str:
    lines = ["epoch,mean_reward,violation_rate"]
    for s in stats:
        lines.append(f"{s.epoch},{s.mean_reward!r},{s.violation_rate!r}")
    return "\n".join(lines) + "\n"
