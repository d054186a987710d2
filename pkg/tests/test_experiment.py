"""Harness tests: presets, record files, determinism, summaries, CLI."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from tneda.cli import main, parse_seed_spec
from tneda.evolve import (
    BoltzmannSelection,
    ChainBayesSampler,
    CrossoverSampler,
    GreedyTopK,
    PopulationUpdate,
    PositiveMpsSampler,
    TournamentSelection,
)
from tneda.experiment import (
    SOLVER_PRESETS,
    ConfigError,
    ExperimentConfig,
    build_problem,
    build_solver,
    read_records,
    run_experiment,
    summarize,
    validate_record,
    write_summary_csv,
)


def fast_config(tmp_path, seeds=(0, 1), solver_extra=None, problem=None, optimum="auto"):
    solver = {
        "preset": "TN1",
        "n_parents": 40,
        "n_children": 40,
        "n_init": 40,
        "generations": 8,
        "t_max": 8,
        "call_budget": 400,
    }
    solver.update(solver_extra or {})
    return ExperimentConfig(
        problem=problem or {"kind": "onemax", "n_bits": 12},
        solver=solver,
        seeds=list(seeds),
        out_dir=str(tmp_path / "results"),
        optimum=optimum,
    )


class TestPresets:
    def test_all_presets_build(self):
        for name in SOLVER_PRESETS:
            plan = build_solver({"preset": name})
            assert plan.cfg.call_budget == 60_000

    def test_ga2_expansion(self):
        plan = build_solver({"preset": "GA2"})
        assert isinstance(plan.selection, TournamentSelection)
        assert plan.selection.arity == 3
        assert plan.cfg.mutation_rate == 0.0
        assert plan.cfg.elitism
        assert plan.make_model() .__class__ is CrossoverSampler

    def test_tn1_expansion(self):
        plan = build_solver({"preset": "TN1"})
        assert isinstance(plan.selection, BoltzmannSelection)
        assert plan.selection.pool_size == 1000
        assert plan.cfg.n_children == 1000
        assert plan.cfg.mutation_rate == 0.01
        model = plan.make_model()
        assert model.train_cfg.chi_max == 2
        assert model.train_cfg.learning_rate == 0.15
        assert model.train_cfg.grad_steps_per_pair == 1

    def test_tn2_uses_full_bank(self):
        plan = build_solver({"preset": "TN2"})
        assert plan.selection.pool_size is None
        assert plan.cfg.mutation_rate == 0.0

    def test_tn3_expansion(self):
        plan = build_solver({"preset": "TN3"})
        assert isinstance(plan.selection, GreedyTopK)
        assert plan.selection.k == 10
        assert plan.cfg.n_children == 100
        assert plan.cfg.population_update is PopulationUpdate.REPLACE_WITH_NEW_UNIQUE
        assert isinstance(plan.make_model(), PositiveMpsSampler)

    def test_bn_solvers(self):
        bn1 = build_solver({"preset": "BN1"})
        assert isinstance(bn1.make_model(), ChainBayesSampler)
        assert bn1.cfg.mutation_rate == 0.01
        bn2 = build_solver({"preset": "BN2"})
        assert isinstance(bn2.selection, TournamentSelection)

    def test_explicit_fields_override_preset(self):
        plan = build_solver({"preset": "TN1", "mutation_rate": 0.05, "chi": 4})
        assert plan.cfg.mutation_rate == 0.05
        assert plan.make_model().train_cfg.chi_max == 4

    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigError, match="preset"):
            build_solver({"preset": "TN9"})

    def test_diagnostics_reference(self):
        plan = build_solver(
            {"preset": "TN1", "diagnostics": {"reference": {"chi": 20}}}
        )
        assert plan.make_reference().train_cfg.chi_max == 20
        assert plan.make_reference().alpha_noise == 0.0


class TestBuildProblem:
    def test_file_problems(self, tmp_path):
        knap = tmp_path / "toy.knap"
        knap.write_text("3 5\n6 1\n10 2\n12 3\n")
        p = build_problem({"kind": "knapsack", "path": str(knap)})
        assert p.n_bits == 3
        cnf = tmp_path / "toy.cnf"
        cnf.write_text("p cnf 3 1\n1 -2 3 0\n")
        q = build_problem({"kind": "maxsat", "path": str(cnf)})
        assert q.n_clauses == 1

    def test_portfolio_random_with_ordering(self):
        p = build_problem(
            {"kind": "portfolio_random", "n_assets": 10, "seed": 3, "n_min": 2, "n_max": 4}
        )
        assert p.n_bits == 10

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            build_problem({"kind": "tsp"})

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            build_problem({"kind": "maxsat", "path": "/nonexistent.cnf"})


class TestRunExperiment:
    def test_writes_runs_and_summary(self, tmp_path):
        config = fast_config(tmp_path, seeds=range(3))
        manifest = run_experiment(config)
        assert len(manifest["runs"]) == 3
        assert Path(manifest["summary"]).exists()
        records = read_records(tmp_path / "results")
        assert records
        for record in records:
            validate_record(record)

    def test_relative_error_against_known_optimum(self, tmp_path):
        config = fast_config(tmp_path, seeds=(0,))
        manifest = run_experiment(config)
        records = read_records(manifest["runs"][0])
        for record in records:
            assert record["relative_error"] == pytest.approx(
                (record["best"] + 12.0) / 12.0
            )

    def test_rerun_identical_except_wall_time(self, tmp_path):
        config_a = fast_config(tmp_path / "a", seeds=(3, 4))
        config_b = fast_config(tmp_path / "b", seeds=(3, 4))
        run_experiment(config_a)
        run_experiment(config_b)

        def strip(path):
            lines = []
            for line in Path(path).read_text().splitlines():
                record = json.loads(line)
                record.pop("wall_time_s")
                lines.append(json.dumps(record, sort_keys=True))
            return "\n".join(lines)

        for seed in (3, 4):
            a = strip(tmp_path / "a" / "results" / f"run_{seed:05d}.jsonl")
            b = strip(tmp_path / "b" / "results" / f"run_{seed:05d}.jsonl")
            assert a == b

    def test_parallel_matches_sequential(self, tmp_path):
        config_a = fast_config(tmp_path / "seq", seeds=(0, 1))
        config_b = fast_config(tmp_path / "par", seeds=(0, 1))
        run_experiment(config_a, jobs=1)
        run_experiment(config_b, jobs=2)
        for seed in (0, 1):
            a = [
                {k: v for k, v in json.loads(l).items() if k != "wall_time_s"}
                for l in (tmp_path / "seq" / "results" / f"run_{seed:05d}.jsonl").read_text().splitlines()
            ]
            b = [
                {k: v for k, v in json.loads(l).items() if k != "wall_time_s"}
                for l in (tmp_path / "par" / "results" / f"run_{seed:05d}.jsonl").read_text().splitlines()
            ]
            assert a == b

    def test_budget_must_exceed_init(self, tmp_path):
        config = fast_config(tmp_path, solver_extra={"call_budget": 40})
        with pytest.raises(ConfigError, match="budget"):
            run_experiment(config)

    def test_diagnostics_fields_emitted(self, tmp_path):
        config = fast_config(
            tmp_path,
            seeds=(0,),
            solver_extra={"diagnostics": {"reference": {"chi": 4}}},
        )
        manifest = run_experiment(config)
        records = read_records(manifest["runs"][0])
        assert any(r["kl_primary"] is not None or r["kl_primary_infinite"] for r in records)
        for record in records:
            validate_record(record)


class TestSummarize:
    def test_single_run_median_equals_mean(self):
        records = [
            {"generation": 1, "best": -3.0, "relative_error": 0.5, "calls": 10},
            {"generation": 2, "best": -5.0, "relative_error": 0.25, "calls": 20},
        ]
        rows = summarize(records)
        assert rows[0]["best_median"] == rows[0]["best_mean"] == -3.0
        assert rows[0]["best_stderr"] is None

    def test_quartiles_match_hand_computation(self):
        # five runs at one generation: type-7 quartiles of [1..5] are 2 and 4
        records = [
            {"generation": 1, "best": float(v), "relative_error": None, "calls": 1}
            for v in (1, 2, 3, 4, 5)
        ]
        row = summarize(records)[0]
        assert row["best_q1"] == 2.0
        assert row["best_median"] == 3.0
        assert row["best_q3"] == 4.0
        # and of [1..4]: 1.75 / 2.5 / 3.25
        row4 = summarize(records[:4])[0]
        assert row4["best_q1"] == pytest.approx(1.75)
        assert row4["best_median"] == pytest.approx(2.5)
        assert row4["best_q3"] == pytest.approx(3.25)

    def test_standard_error_definition(self):
        values = [1.0, 2.0, 4.0, 9.0]
        records = [
            {"generation": 1, "best": v, "relative_error": v, "calls": 1} for v in values
        ]
        row = summarize(records)[0]
        expected = np.std(values, ddof=1) / math.sqrt(4)
        assert row["best_stderr"] == pytest.approx(expected)
        assert row["rel_err_stderr"] == pytest.approx(expected)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        records = [
            {"generation": g, "best": float(rng.normal()), "relative_error": None, "calls": g}
            for g in (1, 2, 3) for _ in range(7)
        ]
        shuffled = list(records)
        rng.shuffle(shuffled)
        assert summarize(records) == summarize(shuffled)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize([])

    def test_csv_roundtrip_fields(self, tmp_path):
        records = [{"generation": 1, "best": -1.0, "relative_error": 0.1, "calls": 5}]
        path = tmp_path / "summary.csv"
        write_summary_csv(summarize(records), path)
        header = path.read_text().splitlines()[0]
        assert header.startswith("generation,n_runs,best_median")


class TestCli:
    def write_config(self, tmp_path, **kwargs):
        config = fast_config(tmp_path, **kwargs)
        payload = {
            "problem": config.problem,
            "solver": config.solver,
            "seeds": config.seeds,
            "out": config.out_dir,
            "optimum": config.optimum,
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(payload))
        return path

    def test_seed_spec_forms(self):
        assert parse_seed_spec("0..3") == [0, 1, 2, 3]
        assert parse_seed_spec("5") == [5]
        assert parse_seed_spec("1,9,4") == [1, 9, 4]

    def test_run_and_summarize(self, tmp_path, capsys):
        config_path = self.write_config(tmp_path, seeds=(0,))
        assert main(["run", "--config", str(config_path), "--seeds", "0..1"]) == 0
        out_dir = tmp_path / "results"
        assert (out_dir / "run_00000.jsonl").exists()
        assert (out_dir / "run_00001.jsonl").exists()
        summary = tmp_path / "again.csv"
        assert main(["summarize", "--in", str(out_dir), "--out", str(summary)]) == 0
        assert summary.exists()

    def test_bad_preset_is_config_error(self, tmp_path):
        config_path = self.write_config(tmp_path, solver_extra={"preset": "XX"})
        assert main(["run", "--config", str(config_path)]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2

    def test_missing_records_dir(self, tmp_path):
        code = main(["summarize", "--in", str(tmp_path / "void"), "--out", str(tmp_path / "s.csv")])
        assert code == 3
