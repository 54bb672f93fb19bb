"""Experiment orchestration.

Loads a YAML experiment config (or a bundled scenario), validates it
exhaustively, runs every (policy, horizon, seed) combination on a fresh
engine, and aggregates time-average regret into diff-stable CSV tables.
Also provides the asymptotic trend curve and log-log slope fits used to
check regret growth rates.

Determinism contract: a run is keyed by (master_seed, T, seed index); the
environment stream and every node stream derive from that key, so re-running
a config with the same master seed reproduces every file byte for byte.
"""

from __future__ import annotations

import importlib.resources
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from treebandit.engine import FeedbackModel, Simulation, TraceRecorder
from treebandit.env import (
    BernoulliTreeEnv,
    CostEnvironment,
    CsvMatrixEnv,
    bernoulli_tree_means,
    make_lower_bound_env,
    make_mec_env,
    make_multihop_env,
)
from treebandit.policy import (
    AnytimeEpsilonExp3,
    EpsilonExp3,
    Exp3Baseline,
    NodePolicy,
    NormalizedEG,
    OracleParams,
    OraclePolicy,
    StationaryPolicy,
    UniformRandomPolicy,
    classic_exp3_gamma,
    constant_forward_prob,
    default_params,
    eg_default_eta,
    exp_decay_forward_prob,
)
from treebandit.topology import TopologyError, TreeTopology, build_chain_tree, build_uniform_tree

DEFAULT_MASTER_SEED = 20240517
DEFAULT_ETA_SCALE = 10.0

POLICY_NAMES = (
    "eps_exp3",
    "anytime_eps_exp3",
    "normalized_eg",
    "exp3",
    "uniform",
    "stationary",
    "oracle_chain",
)
ENV_KINDS = (
    "bernoulli_tree",
    "lower_bound_chain",
    "deadline_mec",
    "deadline_multihop",
    "csv",
)


class HarnessError(ValueError):
    """Raised for invalid analysis inputs (bad fit points, missing anchor)."""


class ConfigError(ValueError):
    """Invalid experiment config; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]) -> None:
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# --------------------------------------------------------------------------
# config model


@dataclass
class ExperimentConfig:
    scenario: str
    topology: dict
    env: dict
    policies: list[dict]
    horizons: list[int]
    seeds: int = 20
    master_seed: int = DEFAULT_MASTER_SEED
    trace: dict | None = None
    description: str = ""

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        errors = validate_config_dict(raw)
        if errors:
            raise ConfigError(errors)
        return ExperimentConfig(
            scenario=str(raw["scenario"]),
            topology=dict(raw["topology"]),
            env=dict(raw["env"]),
            policies=[dict(p) for p in raw["policies"]],
            horizons=[int(t) for t in raw["horizons"]],
            seeds=int(raw.get("seeds", 20)),
            master_seed=int(raw.get("master_seed", DEFAULT_MASTER_SEED)),
            trace=dict(raw["trace"]) if raw.get("trace") else None,
            description=str(raw.get("description", "")),
        )


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return (_is_int(x) or isinstance(x, float)) and math.isfinite(float(x))


def build_topology(spec: dict) -> TreeTopology:
    kind = spec.get("kind")
    if kind == "uniform":
        return build_uniform_tree(int(spec["fanout"]), int(spec["depth"]))
    if kind == "chain":
        return build_chain_tree(int(spec["depth"]))
    raise ConfigError([f"topology.kind must be 'uniform' or 'chain', got {kind!r}"])


def _validate_topology(spec, errors: list[str]) -> TreeTopology | None:
    if not isinstance(spec, dict):
        errors.append("topology: must be a mapping")
        return None
    kind = spec.get("kind")
    if kind == "uniform":
        fanout, depth = spec.get("fanout"), spec.get("depth")
        if not _is_int(fanout) or fanout < 2:
            errors.append(f"topology.fanout: need an integer >= 2, got {fanout!r}")
        if not _is_int(depth) or depth < 1:
            errors.append(f"topology.depth: need an integer >= 1, got {depth!r}")
        if errors:
            return None
        return build_uniform_tree(fanout, depth)
    if kind == "chain":
        depth = spec.get("depth")
        if not _is_int(depth) or depth < 2:
            errors.append(f"topology.depth: need an integer >= 2 for a chain, got {depth!r}")
            return None
        return build_chain_tree(depth)
    errors.append(f"topology.kind: must be 'uniform' or 'chain', got {kind!r}")
    return None


def _validate_env(spec, topology: TreeTopology | None, errors: list[str]) -> None:
    if not isinstance(spec, dict):
        errors.append("env: must be a mapping")
        return
    kind = spec.get("kind")
    if kind not in ENV_KINDS:
        errors.append(f"env.kind: must be one of {ENV_KINDS}, got {kind!r}")
        return
    if kind == "bernoulli_tree":
        has_pmin = "p_min" in spec
        has_means = "means" in spec
        if has_pmin == has_means:
            errors.append("env: give exactly one of p_min or means")
        if has_pmin and not (_is_num(spec["p_min"]) and 0.0 <= spec["p_min"] <= 1.0):
            errors.append(f"env.p_min: must be in [0,1], got {spec['p_min']!r}")
        if has_means:
            means = spec["means"]
            if not isinstance(means, list) or not all(
                _is_num(m) and 0.0 <= m <= 1.0 for m in means
            ):
                errors.append("env.means: must be a list of numbers in [0,1]")
            elif topology is not None and len(means) != len(topology.leaves):
                errors.append(
                    f"env.means: {len(means)} entries for {len(topology.leaves)} leaves"
                )
        if "shift_fraction" in spec and spec["shift_fraction"] is not None:
            frac = spec["shift_fraction"]
            if not (_is_num(frac) and 0.0 < frac <= 1.0):
                errors.append(f"env.shift_fraction: must be in (0,1], got {frac!r}")
        if "shift_round" in spec and spec["shift_round"] is not None:
            if not (_is_int(spec["shift_round"]) and spec["shift_round"] >= 1):
                errors.append(f"env.shift_round: must be an integer >= 1, got {spec['shift_round']!r}")
        if "shift_leaf" in spec and spec["shift_leaf"] is not None:
            leaf = spec["shift_leaf"]
            if topology is not None and (
                not _is_int(leaf) or leaf not in topology.leaves
            ):
                errors.append(f"env.shift_leaf: {leaf!r} is not a leaf of the topology")
    elif kind == "lower_bound_chain":
        if topology is not None:
            if len(topology.leaves) != topology.depth + 1:
                errors.append("env.lower_bound_chain: needs a chain topology")
            delta = spec.get("delta")
            if delta is not None and not (
                _is_num(delta) and 0.0 < delta < 2.0 ** -topology.depth
            ):
                errors.append(
                    f"env.delta: must satisfy 0 < delta < 2**-{topology.depth}, got {delta!r}"
                )
    elif kind == "deadline_mec":
        if topology is not None and topology.depth != 2:
            errors.append("env.deadline_mec: needs topology.depth == 2")
    elif kind == "csv":
        path = spec.get("path")
        if not isinstance(path, str) or not path:
            errors.append("env.path: must name the cost matrix CSV file")
        elif not os.path.exists(path):
            errors.append(f"env.path: file not found: {path}")


def _env_has_shift(env_spec: dict) -> bool:
    if env_spec.get("kind") != "bernoulli_tree":
        return False
    return bool(env_spec.get("shift_fraction") or env_spec.get("shift_round"))


def _validate_policies(policies, env_spec, topology, errors: list[str]) -> None:
    if not isinstance(policies, list) or not policies:
        errors.append("policies: must be a non-empty list")
        return
    labels: set[str] = set()
    for k, entry in enumerate(policies):
        where = f"policies[{k}]"
        if not isinstance(entry, dict):
            errors.append(f"{where}: must be a mapping")
            continue
        name = entry.get("name")
        if name not in POLICY_NAMES:
            errors.append(f"{where}.name: must be one of {POLICY_NAMES}, got {name!r}")
            continue
        label = str(entry.get("label", name))
        if label in labels:
            errors.append(f"{where}.label: duplicate policy label {label!r}")
        labels.add(label)
        if name == "stationary":
            leaf = entry.get("leaf")
            if topology is not None and (not _is_int(leaf) or leaf not in topology.leaves):
                errors.append(f"{where}.leaf: {leaf!r} is not a leaf of the topology")
        if name == "oracle_chain":
            if topology is not None and any(
                len(topology.children[n]) != 2 for n in topology.non_leaves
            ):
                errors.append(f"{where}: oracle_chain needs binary non-leaf nodes")
            profile = entry.get("profile", "constant")
            if profile not in ("constant", "exp_decay"):
                errors.append(
                    f"{where}.profile: must be 'constant' or 'exp_decay', got {profile!r}"
                )
            q = entry.get("q", "horizon_tuned")
            if q != "horizon_tuned" and not (_is_num(q) and q > 0):
                errors.append(f"{where}.q: must be 'horizon_tuned' or a positive number")
        if name == "exp3":
            eta = entry.get("eta", "classic")
            if eta == "shift_matched" and isinstance(env_spec, dict) and not _env_has_shift(env_spec):
                errors.append(
                    f"{where}.eta: shift_matched needs an environment with a cost shift"
                )
            if eta not in ("classic", "shift_matched") and not (_is_num(eta) and eta > 0):
                errors.append(f"{where}.eta: must be 'classic', 'shift_matched' or > 0")
            gamma = entry.get("gamma", "classic")
            if gamma != "classic" and not (_is_num(gamma) and 0.0 <= gamma <= 1.0):
                errors.append(f"{where}.gamma: must be 'classic' or in [0,1]")
        for key in ("eta", "epsilon"):
            if name in ("eps_exp3", "normalized_eg") and key in entry:
                val = entry[key]
                if val != "horizon_tuned" and not (_is_num(val) and val >= 0):
                    errors.append(f"{where}.{key}: must be 'horizon_tuned' or a number >= 0")


def _validate_trace(trace, topology: TreeTopology | None, errors: list[str]) -> None:
    if trace is None:
        return
    if not isinstance(trace, dict):
        errors.append("trace: must be a mapping")
        return
    window = trace.get("window", 1000)
    if not _is_int(window) or window < 1:
        errors.append(f"trace.window: must be an integer >= 1, got {window!r}")
    watched = trace.get("watched")
    if not isinstance(watched, list) or not watched:
        errors.append("trace.watched: must be a non-empty list of [node, child] pairs")
        return
    for pair in watched:
        if not (isinstance(pair, list) and len(pair) == 2 and all(_is_int(p) for p in pair)):
            errors.append(f"trace.watched: bad pair {pair!r}")
            continue
        node, child = pair
        if topology is not None:
            if node >= topology.node_count or topology.is_leaf(node):
                errors.append(f"trace.watched: node {node} is not a non-leaf node")
            elif child not in topology.children[node]:
                errors.append(f"trace.watched: ({node},{child}) is not an edge")


def validate_config_dict(raw) -> list[str]:
    """Collect every problem with the config; an empty list means valid."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        return ["config: top level must be a mapping"]
    if not isinstance(raw.get("scenario"), str) or not raw.get("scenario"):
        errors.append("scenario: must be a non-empty string")
    topology: TreeTopology | None = None
    try:
        topology = _validate_topology(raw.get("topology"), errors)
    except TopologyError as exc:
        errors.append(f"topology: {exc}")
    _validate_env(raw.get("env"), topology, errors)
    _validate_policies(raw.get("policies"), raw.get("env"), topology, errors)
    horizons = raw.get("horizons")
    if not isinstance(horizons, list) or not horizons:
        errors.append("horizons: must be a non-empty list of integers >= 1")
    else:
        for t in horizons:
            if not _is_int(t) or t < 1:
                errors.append(f"horizons: every value must be an integer >= 1, got {t!r}")
                break
        if len(set(horizons)) != len(horizons):
            errors.append("horizons: values must be distinct")
    seeds = raw.get("seeds", 20)
    if not _is_int(seeds) or seeds < 1:
        errors.append(f"seeds: must be an integer >= 1, got {seeds!r}")
    master = raw.get("master_seed", DEFAULT_MASTER_SEED)
    if not _is_int(master) or master < 0:
        errors.append(f"master_seed: must be a non-negative integer, got {master!r}")
    _validate_trace(raw.get("trace"), topology, errors)
    return errors


# --------------------------------------------------------------------------
# bundled scenarios


def scenario_names() -> list[str]:
    root = importlib.resources.files("treebandit") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario(name: str) -> dict:
    root = importlib.resources.files("treebandit") / "scenarios"
    path = root / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(
            [f"scenario: no bundled scenario named {name!r}; available: {scenario_names()}"]
        )
    return yaml.safe_load(path.read_text())


def load_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError([f"config: file not found: {path}"])
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError([f"config: {path} does not contain a mapping"])
    return raw


# --------------------------------------------------------------------------
# factories


def resolve_shift_round(env_spec: dict, T: int) -> int | None:
    if env_spec.get("shift_round"):
        return int(env_spec["shift_round"])
    frac = env_spec.get("shift_fraction")
    if frac:
        return max(1, round(T * float(frac)))
    return None


def build_env(env_spec: dict, topology: TreeTopology, T: int) -> CostEnvironment:
    kind = env_spec["kind"]
    if kind == "bernoulli_tree":
        if "means" in env_spec:
            means = [float(m) for m in env_spec["means"]]
        else:
            means = bernoulli_tree_means(len(topology.leaves), float(env_spec["p_min"]))
        return BernoulliTreeEnv(
            means,
            shift_round=resolve_shift_round(env_spec, T),
            shift_leaf=(
                topology.leaf_index(int(env_spec["shift_leaf"]))
                if env_spec.get("shift_leaf") is not None
                else None
            ),
        )
    if kind == "lower_bound_chain":
        delta = env_spec.get("delta")
        if delta is None:
            delta = 2.0 ** -(topology.depth + 1)
        return make_lower_bound_env(
            topology.depth, float(delta), bool(env_spec.get("best_last_leaf", False))
        )
    if kind == "deadline_mec":
        return make_mec_env(
            topology,
            T,
            constant_rate=float(env_spec.get("constant_rate", 8.0)),
            ramp=tuple(env_spec.get("ramp", (2.0, 200.0))),
            proc_range=tuple(env_spec.get("proc_range", (0.5, 0.2))),
            miss_range=tuple(env_spec.get("miss_range", (0.005, 0.10))),
            deadline=float(env_spec.get("deadline", 1.0)),
        )
    if kind == "deadline_multihop":
        return make_multihop_env(
            topology,
            T,
            constant_rate=float(env_spec.get("constant_rate", 8.0)),
            ramp=tuple(env_spec.get("ramp", (2.0, 200.0))),
            deadline=float(env_spec.get("deadline", 1.0)),
        )
    if kind == "csv":
        return CsvMatrixEnv(env_spec["path"])
    raise ConfigError([f"env.kind: unknown kind {kind!r}"])


def policy_feedback(entry: dict) -> FeedbackModel:
    explicit = entry.get("feedback")
    if explicit == "one_hop":
        return FeedbackModel.COMPLETE_ONE_HOP
    if explicit == "bandit":
        return FeedbackModel.END_TO_END_BANDIT
    if entry["name"] == "normalized_eg":
        return FeedbackModel.COMPLETE_ONE_HOP
    return FeedbackModel.END_TO_END_BANDIT


def build_policies(
    entry: dict, topology: TreeTopology, T: int, env_spec: dict
) -> dict[int, NodePolicy]:
    """Instantiate one policy object per non-leaf node for one seeded run."""
    name = entry["name"]
    L = topology.depth
    D = topology.max_fanout
    route: set[int] = set()
    if name == "stationary":
        cur = int(entry["leaf"])
        while cur != -1:
            route.add(cur)
            cur = topology.parent[cur]
    out: dict[int, NodePolicy] = {}
    for node in topology.non_leaves:
        K = len(topology.children[node])
        leaves_only = topology.children_all_leaves(node)
        if name == "eps_exp3":
            params = default_params(T, L, D, leaves_only)
            eta = entry.get("eta", "horizon_tuned")
            eps = entry.get("epsilon", "horizon_tuned")
            out[node] = EpsilonExp3(
                K,
                eta=params.eta if eta == "horizon_tuned" else float(eta),
                epsilon=params.epsilon if eps == "horizon_tuned" else float(eps),
            )
        elif name == "anytime_eps_exp3":
            out[node] = AnytimeEpsilonExp3(
                K, depth=L, max_fanout=D, children_all_leaves=leaves_only
            )
        elif name == "normalized_eg":
            eta = entry.get("eta", "horizon_tuned")
            out[node] = NormalizedEG(
                K, eta=eg_default_eta(K, T) if eta == "horizon_tuned" else float(eta)
            )
        elif name == "exp3":
            gamma_spec = entry.get("gamma", "classic")
            gamma = classic_exp3_gamma(K, T) if gamma_spec == "classic" else float(gamma_spec)
            eta_spec = entry.get("eta", "classic")
            if eta_spec == "classic":
                eta = gamma / K
            elif eta_spec == "shift_matched":
                shift = resolve_shift_round(env_spec, T)
                if shift is None:
                    raise ConfigError(
                        ["policies: exp3 eta shift_matched needs an env cost shift"]
                    )
                eta = float(entry.get("eta_scale", DEFAULT_ETA_SCALE)) / shift
            else:
                eta = float(eta_spec)
            out[node] = Exp3Baseline(K, eta=eta, gamma=gamma)
        elif name == "uniform":
            out[node] = UniformRandomPolicy(K)
        elif name == "stationary":
            # Nodes off the root-to-leaf route never receive the job, so
            # their pinned child is arbitrary; position 0 keeps it valid.
            leaf = int(entry["leaf"])
            pinned = topology.child_toward(node, leaf) if node in route else 0
            out[node] = StationaryPolicy(K, pinned)
        elif name == "oracle_chain":
            q_spec = entry.get("q", "horizon_tuned")
            q = T ** (-1.0 / L) if q_spec == "horizon_tuned" else float(q_spec)
            profile = entry.get("profile", "constant")
            fn = constant_forward_prob(q) if profile == "constant" else exp_decay_forward_prob(q)
            out[node] = OraclePolicy(K, OracleParams(fn))
        else:
            raise ConfigError([f"policies: unknown policy name {name!r}"])
    return out


# --------------------------------------------------------------------------
# experiment runner


@dataclass(frozen=True)
class AggregateResult:
    """One results row: replicated runs of one policy at one horizon."""

    scenario: str
    policy: str
    D: int
    L: int
    T: int
    seed_count: int
    mean_time_avg_regret: float
    stddev: float


@dataclass(frozen=True)
class SeedResult:
    scenario: str
    policy: str
    T: int
    seed: int
    cumulative_cost: float
    optimal_stationary_cost: float
    regret: float


@dataclass
class ExperimentResults:
    config: ExperimentConfig
    aggregates: list[AggregateResult] = field(default_factory=list)
    seed_rows: list[SeedResult] = field(default_factory=list)
    traces: dict[tuple[str, int], list[tuple[int, int, int, float]]] = field(
        default_factory=dict
    )

    def regret_by_T(self, policy: str) -> dict[int, float]:
        """Mean TOTAL regret per horizon for one policy label."""
        return {
            row.T: row.mean_time_avg_regret * row.T
            for row in self.aggregates
            if row.policy == policy
        }

    def time_avg_by_T(self, policy: str) -> dict[int, float]:
        return {
            row.T: row.mean_time_avg_regret
            for row in self.aggregates
            if row.policy == policy
        }


def run_one(
    config: ExperimentConfig,
    policy_entry: dict,
    T: int,
    seed: int,
    with_trace: bool = False,
):
    """Run a single seeded replication; returns (SeedResult, trace rows)."""
    topology = build_topology(config.topology)
    env = build_env(config.env, topology, T)
    policies = build_policies(policy_entry, topology, T, config.env)
    sim = Simulation(
        topology,
        policies,
        env,
        policy_feedback(policy_entry),
        entropy=(config.master_seed, T, seed),
    )
    trace = None
    if with_trace and config.trace is not None:
        trace = TraceRecorder(
            window=int(config.trace.get("window", 1000)),
            watched=tuple((int(a), int(b)) for a, b in config.trace["watched"]),
        )
    ledger = sim.run(T, trace=trace)
    label = str(policy_entry.get("label", policy_entry["name"]))
    row = SeedResult(
        scenario=config.scenario,
        policy=label,
        T=T,
        seed=seed,
        cumulative_cost=float(ledger.cumulative_algorithm_cost),
        optimal_stationary_cost=float(ledger.optimal_stationary_cost()),
        regret=float(ledger.regret()),
    )
    return row, (trace.rows if trace is not None else [])


def run_experiment(
    config: ExperimentConfig,
    with_trace: bool = False,
    progress=None,
) -> ExperimentResults:
    """Run the full (policy x horizon x seed) grid and aggregate.

    Seeds are independent replications; aggregation is an exact mean/stddev
    over the seed list, so it is invariant to execution order.
    """
    topology = build_topology(config.topology)
    D = topology.max_fanout
    L = topology.depth
    results = ExperimentResults(config)
    for entry in config.policies:
        label = str(entry.get("label", entry["name"]))
        for T in sorted(config.horizons):
            t0 = time.perf_counter()
            ta_values = []
            trace_acc: np.ndarray | None = None
            trace_key_rows: list[tuple[int, int, int]] | None = None
            for seed in range(config.seeds):
                row, trace_rows = run_one(config, entry, T, seed, with_trace)
                results.seed_rows.append(row)
                ta_values.append(row.regret / T if T > 0 else 0.0)
                if trace_rows:
                    if trace_acc is None:
                        trace_key_rows = [(r[0], r[1], r[2]) for r in trace_rows]
                        trace_acc = np.zeros(len(trace_rows))
                    trace_acc += [r[3] for r in trace_rows]
            mean = float(np.mean(ta_values))
            std = float(np.std(ta_values, ddof=1)) if len(ta_values) > 1 else 0.0
            results.aggregates.append(
                AggregateResult(config.scenario, label, D, L, T, config.seeds, mean, std)
            )
            if trace_acc is not None and trace_key_rows is not None:
                results.traces[(label, T)] = [
                    (we, n, c, float(p))
                    for (we, n, c), p in zip(trace_key_rows, trace_acc / config.seeds)
                ]
            if progress is not None:
                progress(label, T, mean, std, time.perf_counter() - t0)
    results.aggregates.sort(key=lambda r: (r.scenario, r.policy, r.T))
    results.seed_rows.sort(key=lambda r: (r.scenario, r.policy, r.T, r.seed))
    return results


# --------------------------------------------------------------------------
# analysis


def asymptotic_trend(
    time_avg_by_T: dict[int, float], L: int, anchor_T: int
) -> list[tuple[int, float]]:
    """Reference decay curve R / T^{1/(L+1)} anchored at a measured point.

    R is set so the curve passes exactly through the measurement at
    anchor_T; the returned curve covers every horizon in the input.
    """
    if anchor_T not in time_avg_by_T:
        raise HarnessError(f"anchor T={anchor_T} not in the measured grid")
    if L < 1:
        raise HarnessError(f"L must be >= 1, got {L}")
    power = 1.0 / (L + 1)
    R = time_avg_by_T[anchor_T] * anchor_T**power
    return [(T, R / T**power) for T in sorted(time_avg_by_T)]


def fit_loglog_slope(points, with_flags: bool = False):
    """OLS slope of log(regret) against log(T).

    Nonpositive regret values are floored at 1e-9 before taking logs; the
    optional flags report which points were floored.
    """
    pts = sorted((int(t), float(r)) for t, r in points)
    if len(pts) < 3:
        raise HarnessError(f"need at least 3 points to fit a slope, got {len(pts)}")
    if any(t <= 0 for t, _ in pts):
        raise HarnessError("every horizon must be positive")
    if len({t for t, _ in pts}) != len(pts):
        raise HarnessError("horizons must be distinct")
    floor = 1e-9
    flags = tuple(r < floor for _, r in pts)
    logt = np.log([t for t, _ in pts])
    logr = np.log([max(r, floor) for _, r in pts])
    slope = float(np.polyfit(logt, logr, 1)[0])
    if with_flags:
        return slope, flags
    return slope


# --------------------------------------------------------------------------
# CSV output


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_results_csv(path: str, aggregates: list[AggregateResult]) -> None:
    _write_csv(
        path,
        ["scenario", "policy", "D", "L", "T", "seed_count", "mean_time_avg_regret", "stddev"],
        [
            (r.scenario, r.policy, r.D, r.L, r.T, r.seed_count, r.mean_time_avg_regret, r.stddev)
            for r in aggregates
        ],
    )


def write_per_seed_csv(path: str, rows: list[SeedResult]) -> None:
    _write_csv(
        path,
        ["scenario", "policy", "T", "seed", "cumulative_cost", "optimal_stationary_cost", "regret"],
        [
            (r.scenario, r.policy, r.T, r.seed, r.cumulative_cost, r.optimal_stationary_cost, r.regret)
            for r in rows
        ],
    )


def write_trace_csv(path: str, rows) -> None:
    _write_csv(
        path,
        ["round_window_end", "node_id", "child_id", "mean_selection_probability"],
        rows,
    )


def write_outputs(results: ExperimentResults, out_dir: str, per_seed: bool = True) -> list[str]:
    """Write every output table for a finished experiment; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    results_path = os.path.join(out_dir, "results.csv")
    write_results_csv(results_path, results.aggregates)
    written.append(results_path)
    if per_seed:
        seed_path = os.path.join(out_dir, "per_seed.csv")
        write_per_seed_csv(seed_path, results.seed_rows)
        written.append(seed_path)
    for (label, T) in sorted(results.traces):
        trace_path = os.path.join(out_dir, f"trace_{label}_T{T}.csv")
        write_trace_csv(trace_path, results.traces[(label, T)])
        written.append(trace_path)
    return written
