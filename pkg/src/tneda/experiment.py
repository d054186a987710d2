"""Config-driven experiment harness: solver x problem x seed grids.

A JSON config names a problem, a solver (one of the benchmark presets or
fully explicit fields), the seeds, and an output directory. Each seed
produces one JSON-lines file of per-generation records; a CSV summary
aggregates medians, quartiles, means, and standard errors per generation.
The artifact emits data, not plots.

Records are deterministic for a fixed config and seed except for the
``wall_time_s`` field.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import run_with_reference
from .evolve import (
    AdaptiveGapSchedule,
    AnnealedSchedule,
    BoltzmannSelection,
    BornMachineSampler,
    ChainBayesSampler,
    CrossoverSampler,
    EdaConfig,
    GreedyTopK,
    PopulationUpdate,
    PositiveMpsSampler,
    TournamentSelection,
    run_eda,
)
from .models import TrainConfig
from .ordering import order_assets
from .problems import (
    DeceptiveTrap,
    KnapsackProblem,
    MaxSatProblem,
    OneMax,
    PortfolioProblem,
    brute_force_optimum,
    knapsack_optimum_dp,
    load_covariance_csv,
    parse_dimacs_cnf,
    parse_knapsack,
    random_covariance,
    random_knapsack,
    relative_error,
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


_POPULATION = 1000
_BUDGET = 60_000
_T_MAX = _BUDGET // _POPULATION

_TN_TRAIN = {
    "chi": 2,
    "learning_rate": 0.15,
    "sweeps": 1,
    "grad_steps_per_pair": 1,
    "svd_cutoff": 1e-6,
    "fresh_init": True,
}

_GEO_COMMON = {
    "selection": "boltzmann",
    "schedule": "annealed",
    "n_parents": _POPULATION,
    "n_children": _POPULATION,
    "n_init": _POPULATION,
    "t_max": _T_MAX,
    "generations": 4 * _T_MAX,
    "call_budget": _BUDGET,
    "population_update": "append",
}

#: The benchmark solver matrix; every number is frozen by the presets and
#: any explicit field in the config overrides the preset value.
SOLVER_PRESETS: dict[str, dict] = {
    # Born machine, Boltzmann over the best 1000 banked solutions, mutation
    "TN1": {"model": "born", **_TN_TRAIN, **_GEO_COMMON, "pool_size": 1000, "mutation_rate": 0.01},
    # Born machine, Boltzmann over every unique banked solution, no mutation
    "TN2": {"model": "born", **_TN_TRAIN, **_GEO_COMMON, "pool_size": None, "mutation_rate": 0.0},
    # incrementally updated positive MPS, greedy top 10 of 100 samples
    "TN3": {
        "model": "positive_mps",
        "chi": 2,
        "learning_rate": 0.15,
        "sweeps": 1,
        "fresh_init": False,
        "selection": "greedy",
        "top_k": 10,
        "n_parents": 10,
        "n_children": 100,
        "n_init": 100,
        "generations": 2400,
        "call_budget": _BUDGET,
        "population_update": "replace",
        "mutation_rate": 0.0,
    },
    # chain Bayes networks, maximum likelihood each generation
    "BN1": {"model": "chain_bayes", "smoothing": 1.0, **_GEO_COMMON, "pool_size": 1000, "mutation_rate": 0.01},
    "BN2": {
        "model": "chain_bayes",
        "smoothing": 1.0,
        "selection": "tournament",
        "arity": 3,
        "n_parents": _POPULATION,
        "n_children": _POPULATION,
        "n_init": _POPULATION,
        "generations": 4 * _T_MAX,
        "call_budget": _BUDGET,
        "population_update": "replace",
        "mutation_rate": 0.0,
    },
    # genetic algorithms with two-point crossover at rate 1
    "GA1": {
        "model": "crossover",
        **_GEO_COMMON,
        "pool_size": 1000,
        "mutation_rate": 0.01,
        "population_update": "replace",
        "elitism": True,
    },
    "GA2": {
        "model": "crossover",
        "selection": "tournament",
        "arity": 3,
        "n_parents": _POPULATION,
        "n_children": _POPULATION,
        "n_init": _POPULATION,
        "generations": 4 * _T_MAX,
        "call_budget": _BUDGET,
        "population_update": "replace",
        "elitism": True,
        "mutation_rate": 0.0,
    },
}


@dataclass
class ExperimentConfig:
    problem: dict
    solver: dict
    seeds: list[int]
    out_dir: str
    optimum: float | str | None = "auto"

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(raw, base_dir=Path(path).parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "ExperimentConfig":
        for key in ("problem", "solver", "seeds", "out"):
            if key not in raw:
                raise ConfigError(f"config is missing the {key!r} key")
        seeds = raw["seeds"]
        if isinstance(seeds, dict):
            seeds = list(range(int(seeds["start"]), int(seeds["start"]) + int(seeds["count"])))
        seeds = [int(s) for s in seeds]
        if not seeds:
            raise ConfigError("need at least one seed")
        problem = dict(raw["problem"])
        if base_dir is not None and "path" in problem:
            problem["path"] = str((Path(base_dir) / problem["path"]).resolve())
        return cls(
            problem=problem,
            solver=dict(raw["solver"]),
            seeds=seeds,
            out_dir=str(raw["out"]),
            optimum=raw.get("optimum", "auto"),
        )


def build_problem(spec: dict):
    """Problem instance from its config stanza."""
    kind = spec.get("kind")
    try:
        if kind == "onemax":
            return OneMax(int(spec["n_bits"]))
        if kind == "trap":
            return DeceptiveTrap(int(spec["n_blocks"]))
        if kind == "knapsack":
            return parse_knapsack(Path(spec["path"]).read_text())
        if kind == "knapsack_random":
            return random_knapsack(int(spec["n_bits"]), spec.get("seed", 0))
        if kind == "maxsat":
            return parse_dimacs_cnf(Path(spec["path"]).read_text())
        if kind in ("portfolio", "portfolio_random"):
            if kind == "portfolio":
                sigma = load_covariance_csv(
                    Path(spec["path"]).read_text(), spec.get("mode", "covariance")
                )
            else:
                sigma = random_covariance(int(spec["n_assets"]), spec.get("seed", 0))
            if spec.get("ward_ordering", True):
                perm = order_assets(sigma)
                sigma = sigma[np.ix_(perm, perm)]
            return PortfolioProblem(
                sigma,
                n_min=int(spec["n_min"]),
                n_max=int(spec["n_max"]),
                penalty_c=float(spec.get("penalty_c", 100.0)),
            )
    except KeyError as exc:
        raise ConfigError(f"problem kind {kind!r} is missing field {exc}") from None
    except FileNotFoundError as exc:
        raise ConfigError(f"problem file not readable: {exc}") from None
    raise ConfigError(f"unknown problem kind {kind!r}")


def resolve_optimum(problem, requested) -> float | None:
    """None, an explicit value, or "auto" (known value, DP, or enumeration)."""
    if requested is None:
        return None
    if isinstance(requested, (int, float)):
        return float(requested)
    if requested != "auto":
        raise ConfigError(f"optimum must be a number, null, or 'auto', got {requested!r}")
    if problem.optimum is not None:
        return float(problem.optimum)
    if isinstance(problem, KnapsackProblem):
        return knapsack_optimum_dp(problem)
    if problem.n_bits <= 24:
        return brute_force_optimum(problem)[1]
    if isinstance(problem, MaxSatProblem):
        return None  # unknown best; relative errors omitted
    return None


@dataclass
class SolverPlan:
    """Everything needed to run one seed: fresh model, policy, loop config."""

    make_model: callable
    selection: object
    cfg: EdaConfig
    diagnostics: dict | None = None
    make_reference: callable | None = None


def _merged_solver_spec(spec: dict) -> dict:
    spec = dict(spec)
    preset = spec.pop("preset", None)
    if preset is None:
        return spec
    if preset not in SOLVER_PRESETS:
        raise ConfigError(f"unknown solver preset {preset!r} (have {sorted(SOLVER_PRESETS)})")
    merged = dict(SOLVER_PRESETS[preset])
    merged.update(spec)
    return merged


def _train_config(spec: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=float(spec.get("learning_rate", 0.15)),
        chi_max=int(spec.get("chi", 2)),
        sweeps=int(spec.get("sweeps", 1)),
        svd_cutoff=float(spec.get("svd_cutoff", 1e-6)),
        fresh_init=bool(spec.get("fresh_init", True)),
        grad_steps_per_pair=int(spec.get("grad_steps_per_pair", 1)),
    )


def build_solver(spec: dict) -> SolverPlan:
    """Expand a solver stanza (preset plus overrides, or explicit fields)."""
    merged = _merged_solver_spec(spec)
    model_kind = merged.get("model")
    if model_kind == "born":
        train = _train_config(merged)
        alpha = float(merged.get("alpha_noise", 0.0))
        make_model = lambda: BornMachineSampler(train, alpha_noise=alpha)  # noqa: E731
    elif model_kind == "positive_mps":
        train = _train_config({**merged, "fresh_init": False})
        make_model = lambda: PositiveMpsSampler(train)  # noqa: E731
    elif model_kind == "chain_bayes":
        smoothing = float(merged.get("smoothing", 1.0))
        make_model = lambda: ChainBayesSampler(smoothing)  # noqa: E731
    elif model_kind == "crossover":
        make_model = CrossoverSampler
    else:
        raise ConfigError(f"unknown model kind {model_kind!r}")

    selection_kind = merged.get("selection")
    if selection_kind == "boltzmann":
        if merged.get("schedule", "annealed") == "annealed":
            schedule = AnnealedSchedule(t0=merged.get("t0"), t_max=merged.get("t_max"))
        else:
            schedule = AdaptiveGapSchedule(
                rank=int(merged.get("rank", 5)), ratio=float(merged.get("ratio", 3.0))
            )
        pool = merged.get("pool_size")
        selection = BoltzmannSelection(schedule, None if pool is None else int(pool))
    elif selection_kind == "tournament":
        selection = TournamentSelection(int(merged.get("arity", 3)))
    elif selection_kind == "greedy":
        selection = GreedyTopK(int(merged.get("top_k", 10)))
    else:
        raise ConfigError(f"unknown selection kind {selection_kind!r}")

    update = {"append": PopulationUpdate.APPEND_TO_BANK, "replace": PopulationUpdate.REPLACE_WITH_NEW_UNIQUE}
    update_key = merged.get("population_update", "append")
    if update_key not in update:
        raise ConfigError(f"unknown population update {update_key!r}")
    cfg = EdaConfig(
        n_parents=int(merged.get("n_parents", _POPULATION)),
        n_children=int(merged.get("n_children", _POPULATION)),
        generations=int(merged.get("generations", 4 * _T_MAX)),
        mutation_rate=float(merged.get("mutation_rate", 0.0)),
        call_budget=int(merged.get("call_budget", _BUDGET)),
        population_update=update[update_key],
        n_init=None if merged.get("n_init") is None else int(merged["n_init"]),
        elitism=bool(merged.get("elitism", False)),
        target_objective=(
            None if merged.get("target_objective") is None else float(merged["target_objective"])
        ),
    )

    diagnostics = merged.get("diagnostics")
    make_reference = None
    if diagnostics:
        if model_kind != "born":
            raise ConfigError("KL diagnostics are supported for the Born-machine model")
        ref_over = diagnostics.get("reference", {})
        ref_train = _train_config({**merged, **ref_over})
        ref_alpha = float(ref_over.get("alpha_noise", 0.0))  # bystander is noiseless by default
        make_reference = lambda: BornMachineSampler(ref_train, alpha_noise=ref_alpha)  # noqa: E731
    return SolverPlan(make_model, selection, cfg, diagnostics, make_reference)


# --- records -----------------------------------------------------------------

RECORD_FIELDS = (
    "seed",
    "generation",
    "best",
    "median",
    "relative_error",
    "calls",
    "n_new",
    "temperature",
    "kl_primary",
    "kl_primary_infinite",
    "kl_reference",
    "kl_reference_infinite",
    "kl_delta",
    "wall_time_s",
)


def _finite_or_none(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def record_to_dict(rec, seed: int, optimum: float | None, wall_time: float) -> dict:
    rel = None if optimum is None else relative_error(rec.best_objective, optimum)
    return {
        "seed": seed,
        "generation": rec.generation,
        "best": float(rec.best_objective),
        "median": _finite_or_none(rec.median_objective),
        "relative_error": rel,
        "calls": rec.calls,
        "n_new": rec.n_new,
        "temperature": _finite_or_none(rec.temperature),
        "kl_primary": _finite_or_none(rec.kl_primary),
        "kl_primary_infinite": rec.kl_primary is not None and math.isinf(rec.kl_primary),
        "kl_reference": _finite_or_none(rec.kl_reference),
        "kl_reference_infinite": rec.kl_reference is not None and math.isinf(rec.kl_reference),
        "kl_delta": _finite_or_none(rec.kl_delta),
        "wall_time_s": round(wall_time, 6),
    }


def validate_record(record: dict) -> None:
    """Schema check for emitted records; raises ValueError on violations."""
    missing = [k for k in RECORD_FIELDS if k not in record]
    if missing:
        raise ValueError(f"record is missing fields {missing}")
    if not isinstance(record["seed"], int) or not isinstance(record["generation"], int):
        raise ValueError("seed and generation must be integers")
    if record["generation"] < 1 or record["calls"] < 0 or record["n_new"] < 0:
        raise ValueError("generation must be >= 1 and counts nonnegative")
    for key in ("best", "wall_time_s"):
        if not isinstance(record[key], (int, float)) or not math.isfinite(record[key]):
            raise ValueError(f"{key} must be a finite number")
    for key in ("median", "relative_error", "temperature", "kl_primary", "kl_reference", "kl_delta"):
        value = record[key]
        if value is not None and not isinstance(value, (int, float)):
            raise ValueError(f"{key} must be a number or null")
    for key in ("kl_primary_infinite", "kl_reference_infinite"):
        if not isinstance(record[key], bool):
            raise ValueError(f"{key} must be a boolean")


def run_single(problem, solver_spec: dict, seed: int, optimum: float | None) -> list[dict]:
    """One seeded run; returns per-generation record dicts."""
    plan = build_solver(solver_spec)
    model = plan.make_model()
    started = time.perf_counter()
    elapsed: list[float] = []

    def clock(_ctx):
        elapsed.append(time.perf_counter() - started)

    if plan.diagnostics:
        result = run_with_reference(
            problem,
            model,
            plan.make_reference(),
            plan.selection,
            plan.cfg,
            rng=seed,
            kl_p_flip=plan.diagnostics.get("kl_p_flip"),
            mirror_reference_rng=bool(plan.diagnostics.get("mirror_rng", False)),
            observer=clock,
        )
        records = result.records
    else:
        records = run_eda(problem, model, plan.selection, plan.cfg, rng=seed, observer=clock)
    return [
        record_to_dict(rec, seed, optimum, wall)
        for rec, wall in zip(records, elapsed)
    ]


def _run_seed_task(args):
    problem, solver_spec, seed, optimum = args
    return seed, run_single(problem, solver_spec, seed, optimum)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> dict:
    """Execute the full seed grid and write run files plus the summary.

    Returns a manifest with the written paths.
    """
    problem = build_problem(config.problem)
    plan = build_solver(config.solver)  # early validation of the solver stanza
    n_init = plan.cfg.n_init if plan.cfg.n_init is not None else plan.cfg.n_children
    if plan.cfg.call_budget <= n_init:
        raise ConfigError("call_budget must exceed the initial population size")
    optimum = resolve_optimum(problem, config.optimum)

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(problem, config.solver, seed, optimum) for seed in config.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            by_seed = dict(pool.map(_run_seed_task, tasks))
        results = [(seed, by_seed[seed]) for seed in config.seeds]
    else:
        results = [(seed, run_single(problem, config.solver, seed, optimum)) for seed in config.seeds]

    run_paths = []
    all_records: list[dict] = []
    for seed, records in results:
        path = out / f"run_{seed:05d}.jsonl"
        with open(path, "w") as fh:
            for record in records:
                fh.write(json.dumps(record, allow_nan=False) + "\n")
        run_paths.append(str(path))
        all_records.extend(records)

    summary_rows = summarize(all_records)
    summary_path = out / "summary.csv"
    write_summary_csv(summary_rows, summary_path)
    return {"runs": run_paths, "summary": str(summary_path), "n_records": len(all_records)}


# --- summaries ----------------------------------------------------------------

SUMMARY_FIELDS = (
    "generation",
    "n_runs",
    "best_median",
    "best_q1",
    "best_q3",
    "best_mean",
    "best_stderr",
    "rel_err_median",
    "rel_err_q1",
    "rel_err_q3",
    "rel_err_mean",
    "rel_err_stderr",
    "calls_median",
)


def _stats(values: list[float]) -> tuple[float, float, float, float, float | None]:
    # sorting first makes every statistic independent of record order
    arr = np.sort(np.asarray(values, dtype=np.float64))
    q1, med, q3 = np.quantile(arr, [0.25, 0.5, 0.75])  # linear interpolation (type 7)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else None
    return float(med), float(q1), float(q3), mean, stderr


def summarize(records: list[dict]) -> list[dict]:
    """Per-generation statistics over runs.

    Quartiles use linear interpolation (numpy's default, quantile type 7);
    the standard error is the ddof-1 standard deviation over runs divided
    by sqrt(runs). Relative-error columns are empty when no record carries
    a relative error.
    """
    if not records:
        raise ValueError("no records to summarize")
    by_generation: dict[int, list[dict]] = {}
    for record in records:
        by_generation.setdefault(record["generation"], []).append(record)
    rows = []
    for generation in sorted(by_generation):
        bucket = by_generation[generation]
        best_med, best_q1, best_q3, best_mean, best_se = _stats([r["best"] for r in bucket])
        rels = [r["relative_error"] for r in bucket if r.get("relative_error") is not None]
        if rels:
            rel_med, rel_q1, rel_q3, rel_mean, rel_se = _stats(rels)
        else:
            rel_med = rel_q1 = rel_q3 = rel_mean = rel_se = None
        rows.append(
            {
                "generation": generation,
                "n_runs": len(bucket),
                "best_median": best_med,
                "best_q1": best_q1,
                "best_q3": best_q3,
                "best_mean": best_mean,
                "best_stderr": best_se,
                "rel_err_median": rel_med,
                "rel_err_q1": rel_q1,
                "rel_err_q3": rel_q3,
                "rel_err_mean": rel_mean,
                "rel_err_stderr": rel_se,
                "calls_median": float(np.median([r["calls"] for r in bucket])),
            }
        )
    return rows


def write_summary_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in SUMMARY_FIELDS})


def read_records(path) -> list[dict]:
    """Records from one .jsonl file or every run_*.jsonl in a directory."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("run_*.jsonl"))
        if not files:
            raise FileNotFoundError(f"no run_*.jsonl files under {path}")
    else:
        if not path.exists():
            raise FileNotFoundError(str(path))
        files = [path]
    records = []
    for file in files:
        with open(file) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
    return records
