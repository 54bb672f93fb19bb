"""Harness tests: config validation, bundled scenarios, factories,
experiment aggregation, trend/slope analysis, and CSV output."""

import math
import os

import numpy as np
import pytest

from treebandit.engine import FeedbackModel
from treebandit.env import (
    BernoulliTreeEnv,
    CsvMatrixEnv,
    DeadlineLatencyEnv,
    bernoulli_tree_means,
    make_lower_bound_env,
)
from treebandit.harness import (
    DEFAULT_MASTER_SEED,
    AggregateResult,
    ConfigError,
    ExperimentConfig,
    HarnessError,
    SeedResult,
    asymptotic_trend,
    build_env,
    build_policies,
    build_topology,
    fit_loglog_slope,
    load_config_file,
    load_scenario,
    policy_feedback,
    resolve_shift_round,
    run_experiment,
    run_one,
    scenario_names,
    validate_config_dict,
    write_outputs,
    write_per_seed_csv,
    write_results_csv,
)
from treebandit.policy import (
    AnytimeEpsilonExp3,
    EpsilonExp3,
    Exp3Baseline,
    NormalizedEG,
    OraclePolicy,
    StationaryPolicy,
    UniformRandomPolicy,
    classic_exp3_gamma,
    default_params,
    eg_default_eta,
)
from treebandit.topology import build_uniform_tree


def base_config(**overrides):
    raw = {
        "scenario": "unit",
        "topology": {"kind": "uniform", "fanout": 2, "depth": 2},
        "env": {"kind": "bernoulli_tree", "p_min": 0.2},
        "policies": [{"name": "uniform"}],
        "horizons": [10, 20],
        "seeds": 2,
        "master_seed": 99,
    }
    raw.update(overrides)
    return raw


# --------------------------------------------------------------------------
# validation


def test_valid_config_has_no_errors():
    assert validate_config_dict(base_config()) == []


def test_top_level_must_be_mapping():
    assert validate_config_dict([1, 2]) == ["config: top level must be a mapping"]


def test_missing_scenario_reported():
    raw = base_config()
    del raw["scenario"]
    assert any(msg.startswith("scenario:") for msg in validate_config_dict(raw))


@pytest.mark.parametrize(
    "patch, key",
    [
        ({"topology": {"kind": "ring"}}, "topology.kind"),
        ({"topology": {"kind": "uniform", "fanout": 1, "depth": 2}}, "topology.fanout"),
        ({"topology": {"kind": "uniform", "fanout": 2, "depth": 0}}, "topology.depth"),
        ({"topology": {"kind": "chain", "depth": 1}}, "topology.depth"),
        ({"env": {"kind": "weather"}}, "env.kind"),
        ({"env": {"kind": "bernoulli_tree", "p_min": 1.5}}, "env.p_min"),
        ({"env": {"kind": "bernoulli_tree", "p_min": 0.2, "shift_fraction": 2}}, "env.shift_fraction"),
        ({"env": {"kind": "bernoulli_tree", "p_min": 0.2, "shift_round": 0}}, "env.shift_round"),
        ({"env": {"kind": "bernoulli_tree", "p_min": 0.2, "shift_leaf": 1}}, "env.shift_leaf"),
        ({"policies": [{"name": "sarsa"}]}, "policies[0].name"),
        ({"policies": [{"name": "stationary", "leaf": 1}]}, "policies[0].leaf"),
        ({"policies": [{"name": "exp3", "gamma": 2.0}]}, "policies[0].gamma"),
        ({"policies": [{"name": "exp3", "eta": "shift_matched"}]}, "policies[0].eta"),
        ({"seeds": 0}, "seeds"),
        ({"master_seed": -1}, "master_seed"),
        ({"trace": {"window": 0, "watched": [[0, 1]]}}, "trace.window"),
        ({"trace": {"window": 5, "watched": [[0, 3]]}}, "trace.watched"),
        ({"trace": {"window": 5, "watched": [[3, 7]]}}, "trace.watched"),
    ],
)
def test_errors_name_the_offending_key(patch, key):
    errors = validate_config_dict(base_config(**patch))
    assert errors, f"expected an error for {patch}"
    assert any(key in msg for msg in errors)


def test_means_length_checked_against_leaves():
    raw = base_config(env={"kind": "bernoulli_tree", "means": [0.1, 0.2, 0.3]})
    assert any("4 leaves" in msg for msg in validate_config_dict(raw))


def test_pmin_and_means_are_exclusive():
    raw = base_config(env={"kind": "bernoulli_tree", "p_min": 0.2, "means": [0.1] * 4})
    assert any("exactly one of p_min or means" in msg for msg in validate_config_dict(raw))
    raw = base_config(env={"kind": "bernoulli_tree"})
    assert any("exactly one of p_min or means" in msg for msg in validate_config_dict(raw))


def test_lower_bound_env_requires_chain_topology():
    raw = base_config(env={"kind": "lower_bound_chain", "delta": 0.1})
    assert any("chain topology" in msg for msg in validate_config_dict(raw))
    raw = base_config(
        topology={"kind": "chain", "depth": 2},
        env={"kind": "lower_bound_chain", "delta": 0.5},
        policies=[{"name": "uniform"}],
    )
    assert any("env.delta" in msg for msg in validate_config_dict(raw))


def test_mec_env_requires_depth_two():
    raw = base_config(
        topology={"kind": "uniform", "fanout": 2, "depth": 3},
        env={"kind": "deadline_mec"},
    )
    assert any("deadline_mec" in msg for msg in validate_config_dict(raw))


def test_duplicate_policy_labels_rejected():
    raw = base_config(policies=[{"name": "uniform"}, {"name": "uniform"}])
    assert any("duplicate policy label" in msg for msg in validate_config_dict(raw))


def test_distinct_labels_for_same_policy_accepted():
    raw = base_config(
        policies=[
            {"name": "uniform", "label": "a"},
            {"name": "uniform", "label": "b"},
        ]
    )
    assert validate_config_dict(raw) == []


def test_horizons_must_be_distinct_positive_integers():
    assert any("distinct" in m for m in validate_config_dict(base_config(horizons=[10, 10])))
    assert any("horizons" in m for m in validate_config_dict(base_config(horizons=[0])))
    assert any("horizons" in m for m in validate_config_dict(base_config(horizons=[])))


def test_multiple_errors_collected_in_one_pass():
    raw = base_config(
        topology={"kind": "uniform", "fanout": 1, "depth": 0},
        seeds=0,
        horizons=[],
    )
    errors = validate_config_dict(raw)
    assert len(errors) >= 4


def test_from_dict_round_trip_and_defaults():
    cfg = ExperimentConfig.from_dict(base_config())
    assert cfg.scenario == "unit"
    assert cfg.horizons == [10, 20]
    assert cfg.seeds == 2
    assert cfg.master_seed == 99
    assert cfg.trace is None
    minimal = base_config()
    del minimal["seeds"]
    del minimal["master_seed"]
    cfg = ExperimentConfig.from_dict(minimal)
    assert cfg.seeds == 20
    assert cfg.master_seed == DEFAULT_MASTER_SEED


def test_from_dict_raises_with_all_errors():
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(base_config(seeds=0, horizons=[]))
    assert len(exc.value.errors) == 2


# --------------------------------------------------------------------------
# bundled scenarios


def test_bundled_scenario_names():
    assert scenario_names() == [
        "fig10-multihop",
        "fig7-D2L2",
        "fig7-D2L3",
        "fig7-D2L4",
        "fig7-D4L2",
        "fig7-D4L3",
        "fig7-D4L4",
        "fig8-transient",
        "fig9-mec",
        "lowerbound-chain",
    ]


def test_every_bundled_scenario_validates():
    for name in scenario_names():
        raw = load_scenario(name)
        assert validate_config_dict(raw) == [], name
        assert raw["scenario"] == name


def test_unknown_scenario_lists_available():
    with pytest.raises(ConfigError, match="no bundled scenario"):
        load_scenario("fig99")


def test_load_config_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("scenario: filetest\n")
    assert load_config_file(str(path)) == {"scenario": "filetest"}
    with pytest.raises(ConfigError, match="not found"):
        load_config_file(str(tmp_path / "missing.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config_file(str(bad))


# --------------------------------------------------------------------------
# factories


def test_build_topology_kinds():
    topo = build_topology({"kind": "uniform", "fanout": 3, "depth": 2})
    assert (topo.max_fanout, topo.depth, len(topo.leaves)) == (3, 2, 9)
    chain = build_topology({"kind": "chain", "depth": 3})
    assert (chain.depth, len(chain.leaves)) == (3, 4)
    with pytest.raises(ConfigError):
        build_topology({"kind": "star"})


def test_resolve_shift_round():
    assert resolve_shift_round({"shift_round": 50, "shift_fraction": 0.5}, 1000) == 50
    assert resolve_shift_round({"shift_fraction": 0.01}, 1000) == 10
    assert resolve_shift_round({"shift_fraction": 0.0001}, 100) == 1
    assert resolve_shift_round({}, 1000) is None


def test_build_env_bernoulli_with_shift_leaf():
    topo = build_uniform_tree(2, 2)
    env = build_env(
        {"kind": "bernoulli_tree", "p_min": 0.2, "shift_fraction": 0.1, "shift_leaf": 3},
        topo,
        100,
    )
    assert isinstance(env, BernoulliTreeEnv)
    assert np.allclose(env.expected_costs(5), bernoulli_tree_means(4, 0.2))
    shifted = env.expected_costs(10)
    assert shifted[topo.leaf_index(3)] == 0.0


def test_build_env_lower_bound_default_delta():
    topo = build_topology({"kind": "chain", "depth": 2})
    env = build_env({"kind": "lower_bound_chain"}, topo, 100)
    reference = make_lower_bound_env(2, 2.0 ** -3)
    assert np.allclose(env.expected_costs(0), reference.expected_costs(0))


def test_build_env_csv(tmp_path):
    path = tmp_path / "costs.csv"
    path.write_text("1,2\n0.1,0.2\n0.3,0.4\n")
    topo = build_uniform_tree(2, 1)
    env = build_env({"kind": "csv", "path": str(path)}, topo, 2)
    assert isinstance(env, CsvMatrixEnv)
    assert np.allclose(env.expected_costs(1), [0.1, 0.2])
    assert np.allclose(env.expected_costs(2), [0.3, 0.4])


def test_build_env_mec_uses_horizon():
    topo = build_uniform_tree(2, 2)
    env = build_env({"kind": "deadline_mec"}, topo, 500)
    assert isinstance(env, DeadlineLatencyEnv)
    assert env.n_leaves == 4


def test_policy_feedback_defaults_and_override():
    assert policy_feedback({"name": "normalized_eg"}) is FeedbackModel.COMPLETE_ONE_HOP
    assert policy_feedback({"name": "eps_exp3"}) is FeedbackModel.END_TO_END_BANDIT
    assert (
        policy_feedback({"name": "eps_exp3", "feedback": "one_hop"})
        is FeedbackModel.COMPLETE_ONE_HOP
    )
    assert (
        policy_feedback({"name": "normalized_eg", "feedback": "bandit"})
        is FeedbackModel.END_TO_END_BANDIT
    )


def test_build_policies_eps_exp3_horizon_tuned():
    topo = build_uniform_tree(2, 2)
    pols = build_policies({"name": "eps_exp3"}, topo, 1000, {})
    assert set(pols) == {0, 1, 2}
    root = pols[0]
    expected = default_params(1000, 2, 2, children_all_leaves=False)
    assert isinstance(root, EpsilonExp3)
    assert root.eta == expected.eta
    assert root.epsilon == expected.epsilon
    leaf_parent = pols[1]
    assert leaf_parent.eta == expected.eta
    assert leaf_parent.epsilon == 0.0


def test_build_policies_eps_exp3_explicit_overrides():
    topo = build_uniform_tree(2, 1)
    pols = build_policies({"name": "eps_exp3", "eta": 0.5, "epsilon": 0.25}, topo, 10, {})
    assert pols[0].eta == 0.5
    assert pols[0].epsilon == 0.25


def test_build_policies_exp3_classic():
    topo = build_uniform_tree(2, 1)
    pols = build_policies({"name": "exp3"}, topo, 1000, {})
    pol = pols[0]
    gamma = classic_exp3_gamma(2, 1000)
    assert isinstance(pol, Exp3Baseline)
    assert pol.gamma == gamma
    assert pol.eta == gamma / 2


def test_build_policies_exp3_shift_matched():
    topo = build_uniform_tree(2, 1)
    env_spec = {"kind": "bernoulli_tree", "p_min": 0.2, "shift_fraction": 0.1}
    pols = build_policies(
        {"name": "exp3", "gamma": 0.002, "eta": "shift_matched", "eta_scale": 10.0},
        topo,
        1000,
        env_spec,
    )
    assert pols[0].gamma == 0.002
    assert pols[0].eta == 10.0 / 100
    with pytest.raises(ConfigError, match="shift"):
        build_policies({"name": "exp3", "eta": "shift_matched"}, topo, 1000, {})


def test_build_policies_normalized_eg_eta():
    topo = build_uniform_tree(3, 1)
    pols = build_policies({"name": "normalized_eg"}, topo, 400, {})
    assert isinstance(pols[0], NormalizedEG)
    assert pols[0].eta == eg_default_eta(3, 400)
    pols = build_policies({"name": "normalized_eg", "eta": 0.125}, topo, 400, {})
    assert pols[0].eta == 0.125


def test_build_policies_oracle_chain_q():
    topo = build_topology({"kind": "chain", "depth": 2})
    pols = build_policies({"name": "oracle_chain"}, topo, 10000, {})
    assert all(isinstance(p, OraclePolicy) for p in pols.values())
    q = 10000 ** -0.5
    for pol in pols.values():
        assert pol.params.forward_prob_fn(0) == pytest.approx(min(0.5, q))


def test_build_policies_stationary_routes_toward_leaf():
    topo = build_uniform_tree(2, 2)
    pols = build_policies({"name": "stationary", "leaf": 6}, topo, 10, {})
    assert isinstance(pols[0], StationaryPolicy)
    assert list(pols[0].distribution()) == [0.0, 1.0]
    assert list(pols[2].distribution()) == [0.0, 1.0]
    assert list(pols[1].distribution()) == [1.0, 0.0]


def test_build_policies_uniform_and_anytime_types():
    topo = build_uniform_tree(2, 2)
    assert isinstance(build_policies({"name": "uniform"}, topo, 10, {})[0], UniformRandomPolicy)
    assert isinstance(
        build_policies({"name": "anytime_eps_exp3"}, topo, 10, {})[0], AnytimeEpsilonExp3
    )


# --------------------------------------------------------------------------
# experiment runner


def test_run_one_stationary_on_best_leaf_has_zero_regret():
    cfg = ExperimentConfig.from_dict(
        base_config(
            env={"kind": "bernoulli_tree", "means": [1.0, 1.0, 1.0, 0.0]},
            policies=[{"name": "stationary", "leaf": 6}],
        )
    )
    row, trace_rows = run_one(cfg, cfg.policies[0], 20, 0)
    assert row.regret == 0.0
    assert row.cumulative_cost == 0.0
    assert trace_rows == []


def test_run_experiment_shapes_and_aggregation():
    cfg = ExperimentConfig.from_dict(
        base_config(policies=[{"name": "uniform"}, {"name": "stationary", "leaf": 3}])
    )
    res = run_experiment(cfg)
    assert len(res.aggregates) == 4
    assert len(res.seed_rows) == 8
    for agg in res.aggregates:
        assert (agg.D, agg.L, agg.seed_count) == (2, 2, 2)
        rows = [
            r
            for r in res.seed_rows
            if (r.policy, r.T) == (agg.policy, agg.T)
        ]
        assert len(rows) == 2
        ta = [r.regret / r.T for r in rows]
        assert agg.mean_time_avg_regret == pytest.approx(np.mean(ta))
        assert agg.stddev == pytest.approx(np.std(ta, ddof=1))


def test_run_experiment_single_seed_stddev_zero():
    cfg = ExperimentConfig.from_dict(base_config(seeds=1, horizons=[15]))
    res = run_experiment(cfg)
    assert [a.stddev for a in res.aggregates] == [0.0]


def test_run_experiment_is_deterministic():
    cfg = ExperimentConfig.from_dict(base_config())
    first = run_experiment(cfg)
    second = run_experiment(cfg)
    assert first.aggregates == second.aggregates
    assert first.seed_rows == second.seed_rows


def test_run_experiment_master_seed_changes_draws():
    cfg_a = ExperimentConfig.from_dict(base_config())
    cfg_b = ExperimentConfig.from_dict(base_config(master_seed=100))
    costs_a = [r.cumulative_cost for r in run_experiment(cfg_a).seed_rows]
    costs_b = [r.cumulative_cost for r in run_experiment(cfg_b).seed_rows]
    assert costs_a != costs_b


def test_regret_tables_by_policy():
    cfg = ExperimentConfig.from_dict(base_config())
    res = run_experiment(cfg)
    total = res.regret_by_T("uniform")
    ta = res.time_avg_by_T("uniform")
    assert set(total) == {10, 20}
    for T in total:
        assert total[T] == pytest.approx(ta[T] * T)
    assert res.regret_by_T("nope") == {}


def test_traces_only_collected_when_requested():
    cfg = ExperimentConfig.from_dict(
        base_config(
            horizons=[25],
            trace={"window": 10, "watched": [[0, 1], [1, 3]]},
            policies=[{"name": "stationary", "leaf": 3}, {"name": "uniform"}],
        )
    )
    assert run_experiment(cfg, with_trace=False).traces == {}
    res = run_experiment(cfg, with_trace=True)
    assert set(res.traces) == {("stationary", 25), ("uniform", 25)}
    stationary_rows = res.traces[("stationary", 25)]
    assert stationary_rows == [
        (10, 0, 1, 1.0),
        (10, 1, 3, 1.0),
        (20, 0, 1, 1.0),
        (20, 1, 3, 1.0),
    ]
    for _, _, _, prob in res.traces[("uniform", 25)]:
        assert prob == 0.5


# --------------------------------------------------------------------------
# analysis


def test_asymptotic_trend_anchored_examples():
    measured = {10**4: 0.08, 10**6: 0.05}
    trend = asymptotic_trend(measured, L=2, anchor_T=10**4)
    assert trend[0] == (10**4, pytest.approx(0.08))
    assert trend[1] == (10**6, pytest.approx(0.08 * 10 ** (-2 / 3)))
    assert trend[1][1] == pytest.approx(0.017235477)
    values = [v for _, v in trend]
    assert values == sorted(values, reverse=True)


def test_asymptotic_trend_errors():
    with pytest.raises(HarnessError, match="anchor"):
        asymptotic_trend({100: 0.1}, L=2, anchor_T=10)
    with pytest.raises(HarnessError, match="L must be"):
        asymptotic_trend({100: 0.1}, L=0, anchor_T=100)


def test_fit_loglog_slope_recovers_power_laws():
    ts = [10**2, 10**3, 10**4, 10**5]
    for exponent in (2 / 3, 1.0, 0.5):
        pts = [(t, 3.7 * t**exponent) for t in ts]
        assert fit_loglog_slope(pts) == pytest.approx(exponent, abs=1e-9)


def test_fit_loglog_slope_floors_nonpositive_points():
    pts = [(10, 0.0), (100, 1.0), (1000, 10.0)]
    slope, flags = fit_loglog_slope(pts, with_flags=True)
    assert flags == (True, False, False)
    assert math.isfinite(slope)
    slope2, flags2 = fit_loglog_slope([(10, 1.0), (100, 10.0), (1000, 100.0)], with_flags=True)
    assert flags2 == (False, False, False)
    assert slope2 == pytest.approx(1.0, abs=1e-9)


def test_fit_loglog_slope_input_errors():
    with pytest.raises(HarnessError, match="at least 3"):
        fit_loglog_slope([(10, 1.0), (100, 2.0)])
    with pytest.raises(HarnessError, match="positive"):
        fit_loglog_slope([(0, 1.0), (100, 2.0), (1000, 3.0)])
    with pytest.raises(HarnessError, match="distinct"):
        fit_loglog_slope([(10, 1.0), (10, 2.0), (1000, 3.0)])


# --------------------------------------------------------------------------
# CSV output


def test_results_csv_format(tmp_path):
    path = str(tmp_path / "results.csv")
    write_results_csv(
        path,
        [AggregateResult("s", "p", 2, 2, 100, 3, 0.1, 0.05)],
    )
    lines = open(path).read().splitlines()
    assert lines[0] == "scenario,policy,D,L,T,seed_count,mean_time_avg_regret,stddev"
    assert lines[1] == "s,p,2,2,100,3,0.1,0.05"


def test_per_seed_csv_uses_repr_floats(tmp_path):
    path = str(tmp_path / "per_seed.csv")
    write_per_seed_csv(
        path,
        [SeedResult("s", "p", 100, 0, 1 / 3, 0.25, 1 / 3 - 0.25)],
    )
    lines = open(path).read().splitlines()
    assert lines[0] == "scenario,policy,T,seed,cumulative_cost,optimal_stationary_cost,regret"
    assert lines[1] == f"s,p,100,0,{1 / 3!r},0.25,{1 / 3 - 0.25!r}"


def test_write_outputs_paths_and_trace_files(tmp_path):
    cfg = ExperimentConfig.from_dict(
        base_config(
            horizons=[25],
            seeds=1,
            trace={"window": 10, "watched": [[0, 1]]},
            policies=[{"name": "stationary", "leaf": 3, "label": "pin3"}],
        )
    )
    res = run_experiment(cfg, with_trace=True)
    out = str(tmp_path / "out")
    written = write_outputs(res, out)
    assert written == [
        os.path.join(out, "results.csv"),
        os.path.join(out, "per_seed.csv"),
        os.path.join(out, "trace_pin3_T25.csv"),
    ]
    for path in written:
        assert os.path.exists(path)
    trace_lines = open(written[2]).read().splitlines()
    assert trace_lines[0] == "round_window_end,node_id,child_id,mean_selection_probability"
    assert trace_lines[1:] == ["10,0,1,1.0", "20,0,1,1.0"]


def test_write_outputs_can_skip_per_seed(tmp_path):
    cfg = ExperimentConfig.from_dict(base_config(horizons=[5], seeds=1))
    res = run_experiment(cfg)
    written = write_outputs(res, str(tmp_path), per_seed=False)
    assert [os.path.basename(p) for p in written] == ["results.csv"]


def test_write_outputs_byte_identical_across_reruns(tmp_path):
    cfg = ExperimentConfig.from_dict(base_config())
    blobs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        write_outputs(run_experiment(cfg), out)
        blobs.append(
            (open(os.path.join(out, "results.csv"), "rb").read(),
             open(os.path.join(out, "per_seed.csv"), "rb").read())
        )
    assert blobs[0] == blobs[1]
