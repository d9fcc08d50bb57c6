import csv
import json
import math

import numpy as np
import pytest

from superhawkes.experiments import (
    STRATEGIES,
    ExperimentConfig,
    ExperimentReport,
    TrialResult,
    design_cost,
    relative_error,
    run_experiment,
    superposition_plan,
    trial_seed,
)

TINY = dict(K=[2], D=[3], seqs_per_model=4, T=40.0, trials=2, seed=5)


def test_relative_error_examples():
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert relative_error(A, A) == 0.0
    assert relative_error(2 * A, A) == pytest.approx(1.0)
    assert relative_error(np.zeros((2, 2)), A) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        relative_error(A, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        relative_error(A, np.ones((3, 3)))


def test_superposition_plan_pairs_index_across_models():
    plan = superposition_plan(2, 20)
    assert len(plan) == 20 and all(len(g) == 2 for g in plan)
    assert plan[3] == [(0, 3), (1, 3)]
    assert superposition_plan(1, 3) == [[(0, 0)], [(0, 1)], [(0, 2)]]


def test_superposition_plan_unequal_counts():
    with pytest.warns(UserWarning, match="unequal"):
        plan = superposition_plan(3, [20, 20, 19])
    assert len(plan) == 19
    with pytest.raises(ValueError):
        superposition_plan(2, [3])


def test_config_validation_and_roundtrip():
    cfg = ExperimentConfig.from_dict(TINY)
    assert cfg.K == (2,) and cfg.strategies == STRATEGIES
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    json.dumps(cfg.to_dict())
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({**TINY, "bogus": 1})
    with pytest.raises(ValueError):
        ExperimentConfig(trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(strategies=["nope"])
    with pytest.raises(ValueError):
        ExperimentConfig(estimator="nope")


def test_trial_seeds_distinct_and_stable():
    seeds = {trial_seed(0, K, D, t) for K in (2, 5) for D in (5, 10) for t in range(10)}
    assert len(seeds) == 40
    assert trial_seed(3, 2, 5, 1) == trial_seed(3, 2, 5, 1)


def test_run_is_deterministic_and_thread_independent():
    cfg = ExperimentConfig.from_dict(TINY)
    a = run_experiment(cfg)
    b = run_experiment(cfg, threads=3)
    assert [(r.strategy, r.trial, r.rel_error) for r in a.results] == \
           [(r.strategy, r.trial, r.rel_error) for r in b.results]
    assert len(a.results) == 2 * len(STRATEGIES)
    assert not a.failures()
    assert all(np.isfinite(r.rel_error) for r in a.results)


def test_summary_statistics():
    cfg = ExperimentConfig(K=[2], D=[3], trials=3, strategies=["superposition_hp"])
    results = [TrialResult("ls", "superposition_hp", 2, 3, t, e, 0.0, 0) for t, e in enumerate([0.1, 0.2, 0.6])]
    rep = ExperimentReport(cfg, results)
    row = rep.summary()[0]
    assert row["mean_rel_error"] == pytest.approx(0.3)
    assert row["std_rel_error"] == pytest.approx(np.std([0.1, 0.2, 0.6], ddof=1))
    assert rep.mhp_beats_super() == {}


def test_failed_trials_are_recorded_not_fatal():
    cfg = ExperimentConfig(K=[2], D=[3], trials=2, strategies=["superposition_hp"])
    results = [TrialResult("ls", "superposition_hp", 2, 3, 0, 0.4, 0.0, 0),
               TrialResult("ls", "superposition_hp", 2, 3, 1, math.nan, 0.0, 0, "ValueError: x")]
    rep = ExperimentReport(cfg, results)
    assert len(rep.failures()) == 1
    assert rep.summary()[0]["n_trials"] == 1


def test_writers(tmp_path):
    rep = run_experiment(ExperimentConfig.from_dict({**TINY, "trials": 1}))
    rep.write(tmp_path)
    with (tmp_path / "results.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["estimator", "strategy", "K", "D", "trial", "rel_error", "seconds"]
    assert len(rows) == len(STRATEGIES)
    with (tmp_path / "summary.csv").open() as fh:
        summary = list(csv.DictReader(fh))
    assert {r["strategy"] for r in summary} == set(STRATEGIES)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["seed"] == 5
    assert report["mhp_beats_super"][0]["K"] == 2


def test_design_cost_reports_ratio():
    out = design_cost(2, total_events=400, D=2, repeats=1)
    assert out["M"] == 2 and out["I"] == 200
    assert out["ratio"] == pytest.approx(out["super_seconds"] / out["multi_seconds"])
