"""Distributed online learning on tree-structured multi-stage systems.

Library + CLI simulator: per-node forwarding policies (exponential weights
under complete one-hop feedback, epsilon-mixed EXP3 under end-to-end bandit
feedback, doubling-trick anytime variant, per-node EXP3 baseline, stationary
and oracle policies), cost environments, a round-by-round engine with regret
accounting, and an experiment harness with bundled scenario configs.
"""

from treebandit.engine import (
    EngineError,
    FeedbackModel,
    RegretLedger,
    RoundOutcome,
    Simulation,
    TraceRecorder,
    rng_streams,
)
from treebandit.env import (
    BernoulliTreeEnv,
    CostEnvironment,
    CsvMatrixEnv,
    DeadlineLatencyEnv,
    EnvError,
    LowerBoundChainEnv,
    RateSchedule,
    bernoulli_tree_means,
    hypoexponential_survival,
    make_lower_bound_env,
    make_mec_env,
    make_multihop_env,
)
from treebandit.harness import (
    AggregateResult,
    ConfigError,
    ExperimentConfig,
    ExperimentResults,
    HarnessError,
    SeedResult,
    asymptotic_trend,
    build_env,
    build_policies,
    build_topology,
    fit_loglog_slope,
    load_scenario,
    run_experiment,
    run_one,
    scenario_names,
    validate_config_dict,
    write_outputs,
)
from treebandit.policy import (
    AnytimeEpsilonExp3,
    EpsilonExp3,
    Exp3Baseline,
    ModeDraw,
    NodePolicy,
    NormalizedEG,
    NumericalError,
    OracleParams,
    OraclePolicy,
    PolicyError,
    PolicyParams,
    StationaryPolicy,
    UniformRandomPolicy,
    anytime_segment,
    classic_exp3_gamma,
    constant_forward_prob,
    default_params,
    eg_default_eta,
    exp_decay_forward_prob,
    stable_softmax,
)
from treebandit.topology import (
    TopologyError,
    TreeTopology,
    build_chain_tree,
    build_uniform_tree,
    load_topology,
    parse_adjacency,
)

__all__ = [
    "AggregateResult",
    "AnytimeEpsilonExp3",
    "BernoulliTreeEnv",
    "ConfigError",
    "CostEnvironment",
    "CsvMatrixEnv",
    "DeadlineLatencyEnv",
    "EngineError",
    "EnvError",
    "EpsilonExp3",
    "Exp3Baseline",
    "ExperimentConfig",
    "ExperimentResults",
    "FeedbackModel",
    "HarnessError",
    "LowerBoundChainEnv",
    "ModeDraw",
    "NodePolicy",
    "NormalizedEG",
    "NumericalError",
    "OracleParams",
    "OraclePolicy",
    "PolicyError",
    "PolicyParams",
    "RateSchedule",
    "RegretLedger",
    "RoundOutcome",
    "SeedResult",
    "Simulation",
    "StationaryPolicy",
    "TopologyError",
    "TraceRecorder",
    "TreeTopology",
    "UniformRandomPolicy",
    "anytime_segment",
    "asymptotic_trend",
    "bernoulli_tree_means",
    "build_chain_tree",
    "build_env",
    "build_policies",
    "build_topology",
    "build_uniform_tree",
    "classic_exp3_gamma",
    "constant_forward_prob",
    "default_params",
    "eg_default_eta",
    "exp_decay_forward_prob",
    "fit_loglog_slope",
    "hypoexponential_survival",
    "load_scenario",
    "load_topology",
    "make_lower_bound_env",
    "make_mec_env",
    "make_multihop_env",
    "parse_adjacency",
    "rng_streams",
    "run_experiment",
    "run_one",
    "scenario_names",
    "stable_softmax",
    "validate_config_dict",
    "write_outputs",
]

__version__ = "0.1.0"
