"""The estimation-of-distribution loop and its operators.

One generation: pick a temperature, select parents (Boltzmann over the
historical bank, tournament over the current population, or greedy top-k
of the latest samples), fit or update the generative model, sample
children, mutate them, evaluate the ones never seen before, and record
telemetry. The function-call budget counts distinct evaluated strings;
duplicates never consume budget.

A plain genetic algorithm fits the same loop with two-point crossover
standing in for the generative model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .models import (
    TrainConfig,
    fit_chain_bayes,
    sample_chain_bayes,
    train_born_machine,
    train_positive_mps,
)
from .mps import EncodingMode, add_tensor_noise, perfect_sample, random_init

TEMPERATURE_FLOOR = 1e-12  # fallback when every banked objective is equal


class DegenerateBankError(ValueError):
    """All banked objectives are equal; no gap to set a temperature from."""


class SolutionBank:
    """Deduplicated, insertion-ordered store of evaluated solutions.

    The number of entries equals the number of objective-function calls
    made so far: a string is evaluated at most once per run.
    """

    def __init__(self, n_bits: int, capacity: int = 1024):
        self.n_bits = int(n_bits)
        self._index: dict[bytes, int] = {}
        self._strings = np.empty((capacity, self.n_bits), dtype=np.int8)
        self._values = np.empty(capacity, dtype=np.float64)
        self._generations = np.empty(capacity, dtype=np.int64)
        self._n = 0
        self._best = -1

    def __len__(self) -> int:
        return self._n

    def __contains__(self, bits) -> bool:
        return np.asarray(bits, dtype=np.int8).tobytes() in self._index

    def _grow(self, need: int) -> None:
        cap = self._strings.shape[0]
        while cap < need:
            cap *= 2
        strings = np.empty((cap, self.n_bits), dtype=np.int8)
        strings[: self._n] = self._strings[: self._n]
        values = np.empty(cap, dtype=np.float64)
        values[: self._n] = self._values[: self._n]
        gens = np.empty(cap, dtype=np.int64)
        gens[: self._n] = self._generations[: self._n]
        self._strings, self._values, self._generations = strings, values, gens

    def add(self, bits, value: float, generation: int) -> bool:
        """Insert a solution; returns False (and changes nothing) on a duplicate."""
        row = np.asarray(bits, dtype=np.int8)
        if row.shape != (self.n_bits,):
            raise ValueError(f"expected a length-{self.n_bits} bit string")
        key = row.tobytes()
        if key in self._index:
            return False
        if self._n == self._strings.shape[0]:
            self._grow(self._n + 1)
        pos = self._n
        self._strings[pos] = row
        self._values[pos] = value
        self._generations[pos] = generation
        self._index[key] = pos
        self._n += 1
        if self._best < 0 or value < self._values[self._best]:
            self._best = pos
        return True

    def value_of(self, bits) -> float | None:
        pos = self._index.get(np.asarray(bits, dtype=np.int8).tobytes())
        return None if pos is None else float(self._values[pos])

    @property
    def strings(self) -> np.ndarray:
        """(n, N) view in insertion order; treat as read-only."""
        return self._strings[: self._n]

    @property
    def values(self) -> np.ndarray:
        return self._values[: self._n]

    @property
    def generations(self) -> np.ndarray:
        return self._generations[: self._n]

    def best(self) -> tuple[np.ndarray, float]:
        if self._n == 0:
            raise ValueError("bank is empty")
        return self._strings[self._best].copy(), float(self._values[self._best])

    def top_indices(self, k: int) -> np.ndarray:
        """Indices of the k best entries, ties broken by first-seen order."""
        order = np.argsort(self.values, kind="stable")
        return order[: min(k, self._n)]


# --- temperatures -------------------------------------------------------------


def annealed_temperature(t0: float, t: int, t_max: int) -> float:
    """T_t = T0^(1 - t/t_max); T0 at t=0, exactly 1 at t=t_max.

    ``t`` beyond ``t_max`` (a run extended past its nominal schedule) is
    clamped, holding the temperature at 1.
    """
    if t0 <= 0:
        raise ValueError("t0 must be positive")
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    return float(t0 ** (1.0 - min(t, t_max) / t_max))


def adaptive_temperature(bank, rank: int = 5, ratio: float = 3.0) -> float:
    """Gap-based temperature: T = (f(x_rank) - f(x_1)) / log(ratio).

    Makes the rank-th best solution 1/ratio as likely as the best under
    Boltzmann weights. If the best value is tied at least ``rank`` deep,
    the best objective not involved in the tie is substituted; if every
    objective is equal a :class:`DegenerateBankError` is raised and the
    caller should fall back to :data:`TEMPERATURE_FLOOR`.
    """
    if rank < 2:
        raise ValueError("rank must be >= 2")
    if ratio <= 1:
        raise ValueError("ratio must be > 1")
    values = bank.values if isinstance(bank, SolutionBank) else np.asarray(bank, dtype=float)
    values = np.sort(values[np.isfinite(values)])
    if values.size == 0:
        raise DegenerateBankError("no finite objectives in bank")
    best = values[0]
    gap_value = values[min(rank, values.size) - 1]
    if gap_value == best:
        above = values[values > best]
        if above.size == 0:
            raise DegenerateBankError("all banked objectives are equal")
        gap_value = above[0]
    return float((gap_value - best) / math.log(ratio))


@dataclass(frozen=True)
class AnnealedSchedule:
    """T_t = T0^(1 - t/t_max); T0 defaults to the std of the initial costs."""

    t0: float | None = None
    t_max: int | None = None  # None: resolved to the run's generation count


@dataclass(frozen=True)
class AdaptiveGapSchedule:
    rank: int = 5
    ratio: float = 3.0


# --- selection ----------------------------------------------------------------


@dataclass(frozen=True)
class BoltzmannSelection:
    """Draw parents from the bank with probability proportional to e^(-f/T).

    ``pool_size`` restricts the pool to the best k banked solutions
    (recomputed every generation); ``None`` uses every unique solution.
    """

    schedule: AnnealedSchedule | AdaptiveGapSchedule = field(default_factory=AnnealedSchedule)
    pool_size: int | None = None


@dataclass(frozen=True)
class TournamentSelection:
    arity: int = 3

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError("arity must be >= 1")


@dataclass(frozen=True)
class GreedyTopK:
    """Keep the k best of the current generation's samples (no history)."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def boltzmann_weights(values, temperature: float) -> np.ndarray:
    """Normalized e^(-f/T) weights, computed with a max-shift for stability."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    values = np.asarray(values, dtype=np.float64)
    finite_min = values[np.isfinite(values)].min() if np.any(np.isfinite(values)) else None
    if finite_min is None:
        raise ValueError("no finite objective in pool")
    w = np.exp(-(values - finite_min) / temperature)
    return w / w.sum()


def boltzmann_select(bank, n: int, temperature: float, pool_size: int | None = None, rng=None):
    """n iid draws (with replacement) from the Boltzmann distribution.

    Args:
        bank: :class:`SolutionBank` or a (strings, values) pair.
        n: number of parents to draw.
        temperature: positive temperature.
        pool_size: best-k pool restriction, ``None`` for the full pool.
        rng: generator or seed.

    Returns:
        (n, N) int8 array of selected strings.
    """
    strings, values = _pool_arrays(bank)
    if strings.shape[0] == 0:
        raise ValueError("empty selection pool")
    if pool_size is not None and pool_size < strings.shape[0]:
        keep = np.argsort(values, kind="stable")[:pool_size]
        strings, values = strings[keep], values[keep]
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    idx = rng.choice(strings.shape[0], size=n, replace=True, p=boltzmann_weights(values, temperature))
    return strings[idx].astype(np.int8, copy=True)


def tournament_select(pool, n: int, arity: int, rng) -> np.ndarray:
    """Each output is the best of ``arity`` uniform draws; ties uniform."""
    strings, values = _pool_arrays(pool)
    if strings.shape[0] == 0:
        raise ValueError("empty selection pool")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    contenders = rng.integers(0, strings.shape[0], size=(n, arity))
    scores = values[contenders]
    best = scores.min(axis=1, keepdims=True)
    tie_break = np.where(scores == best, rng.random((n, arity)), -1.0)
    winners = contenders[np.arange(n), tie_break.argmax(axis=1)]
    return strings[winners].astype(np.int8, copy=True)


def greedy_select(samples, values, k: int) -> np.ndarray:
    """The k best samples by objective, ties by position; k may exceed the pool."""
    samples = np.asarray(samples)
    values = np.asarray(values, dtype=float)
    if samples.shape[0] == 0:
        raise ValueError("empty sample list")
    keep = np.argsort(values, kind="stable")[: min(k, samples.shape[0])]
    return samples[keep].astype(np.int8, copy=True)


def _pool_arrays(pool) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pool, SolutionBank):
        return pool.strings, pool.values
    strings, values = pool
    return np.asarray(strings), np.asarray(values, dtype=np.float64)


# --- variation ----------------------------------------------------------------


def mutate(x, p_flip: float, rng) -> np.ndarray:
    """Flip each bit independently with probability p_flip."""
    if not 0.0 <= p_flip <= 1.0:
        raise ValueError("p_flip must lie in [0, 1]")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    bits = np.asarray(x, dtype=np.int8)
    flips = (rng.random(bits.shape) < p_flip).astype(np.int8)
    return np.bitwise_xor(bits, flips)


def crossover_at(a, b, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Swap the segment [i, j) between two parents."""
    a = np.asarray(a, dtype=np.int8)
    b = np.asarray(b, dtype=np.int8)
    if a.shape != b.shape:
        raise ValueError("parents must have equal length")
    child_a, child_b = a.copy(), b.copy()
    child_a[i:j] = b[i:j]
    child_b[i:j] = a[i:j]
    return child_a, child_b


def two_point_crossover(a, b, rng) -> tuple[np.ndarray, np.ndarray]:
    """Two-point crossover with uniformly drawn cut points i <= j."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    a = np.asarray(a, dtype=np.int8)
    if a.ndim != 1:
        raise ValueError("two_point_crossover works on single strings")
    cuts = np.sort(rng.integers(0, a.shape[0] + 1, size=2))
    return crossover_at(a, b, int(cuts[0]), int(cuts[1]))


# --- generative-model adapters -------------------------------------------------


class BornMachineSampler:
    """Born machine retrained (or updated) each generation, then sampled.

    ``alpha_noise`` adds one Gaussian perturbation to every tensor entry
    after training, once per generation.
    """

    def __init__(self, train_cfg: TrainConfig, alpha_noise: float = 0.0):
        self.train_cfg = train_cfg
        self.alpha_noise = alpha_noise
        self.model = None

    def fit(self, parents: np.ndarray, rng) -> None:
        init = None if self.train_cfg.fresh_init else self.model
        model = train_born_machine(parents, self.train_cfg, init=init, rng=rng)
        if self.alpha_noise > 0:
            model = add_tensor_noise(model, self.alpha_noise, rng)
        self.model = model

    def sample(self, n: int, rng) -> np.ndarray:
        return perfect_sample(self.model, rng, size=n)


class PositiveMpsSampler:
    """Direct-positive MPS updated incrementally from generation to generation."""

    def __init__(self, train_cfg: TrainConfig):
        self.train_cfg = train_cfg
        self.model = None

    def fit(self, parents: np.ndarray, rng) -> None:
        if self.model is None:
            width = np.asarray(parents).shape[1]
            self.model = random_init(
                width, self.train_cfg.chi_max, EncodingMode.DIRECT_POSITIVE, rng
            )
        self.model = train_positive_mps(parents, self.train_cfg, init=self.model)

    def sample(self, n: int, rng) -> np.ndarray:
        return perfect_sample(self.model, rng, size=n)


class ChainBayesSampler:
    """Chain Bayesian network refitted by (smoothed) MLE each generation."""

    def __init__(self, smoothing: float = 1.0):
        self.smoothing = smoothing
        self.model = None

    def fit(self, parents: np.ndarray, rng) -> None:
        self.model = fit_chain_bayes(parents, self.smoothing)

    def sample(self, n: int, rng) -> np.ndarray:
        return sample_chain_bayes(self.model, rng, size=n)


class CrossoverSampler:
    """GA recombination in the model slot: shuffle parents, cross pairs.

    Crossover rate 1: every drawn pair is crossed.
    """

    def __init__(self):
        self._parents = None
        self.model = None  # no generative model; kept for interface parity

    def fit(self, parents: np.ndarray, rng) -> None:
        self._parents = np.asarray(parents, dtype=np.int8)

    def sample(self, n: int, rng) -> np.ndarray:
        parents = self._parents
        if parents.shape[0] == 1:
            return np.tile(parents[0], (n, 1))
        width = parents.shape[1]
        children = []
        produced = 0
        while produced < n:
            order = rng.permutation(parents.shape[0])
            order = order[: 2 * (order.size // 2)]
            pa = parents[order[0::2]]
            pb = parents[order[1::2]]
            cuts = np.sort(rng.integers(0, width + 1, size=(pa.shape[0], 2)), axis=1)
            span = np.arange(width)
            swap = (span >= cuts[:, :1]) & (span < cuts[:, 1:])
            children.append(np.where(swap, pb, pa))
            children.append(np.where(swap, pa, pb))
            produced += 2 * pa.shape[0]
        return np.concatenate(children, axis=0)[:n].astype(np.int8)


# --- the loop -------------------------------------------------------------------


class PopulationUpdate(Enum):
    #: the bank is the population; children only extend it
    APPEND_TO_BANK = "append_to_bank"
    #: children replace the working population wholesale each generation
    REPLACE_WITH_NEW_UNIQUE = "replace_with_new_unique"


@dataclass(frozen=True)
class EdaConfig:
    """Loop sizes and policies.

    ``n_init`` random solutions seed the bank (defaults to ``n_children``);
    the run stops when the count of distinct evaluations reaches
    ``call_budget`` or after ``generations`` generations, whichever comes
    first. ``elitism`` keeps the best-so-far solution in a replaced
    population. A run with a known optimum may set ``target_objective``
    to stop early once the best banked objective reaches it.
    """

    n_parents: int
    n_children: int
    generations: int
    mutation_rate: float = 0.0
    call_budget: int = 60_000
    population_update: PopulationUpdate = PopulationUpdate.APPEND_TO_BANK
    n_init: int | None = None
    elitism: bool = False
    target_objective: float | None = None

    def __post_init__(self):
        if min(self.n_parents, self.n_children, self.generations) < 1:
            raise ValueError("n_parents, n_children and generations must be >= 1")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.call_budget < 1:
            raise ValueError("call_budget must be positive")
        if self.n_init is not None and self.n_init < 1:
            raise ValueError("n_init must be >= 1")


@dataclass(frozen=True)
class RunRecord:
    """Per-generation telemetry.

    ``median_objective`` is the median over this generation's children with
    known objective values (new evaluations plus rediscovered bank entries);
    NaN when no child value is known. KL fields are filled only by
    diagnostics-instrumented runs.
    """

    generation: int
    best_objective: float
    median_objective: float
    calls: int
    n_new: int
    temperature: float | None
    kl_primary: float | None = None
    kl_reference: float | None = None
    kl_delta: float | None = None


@dataclass
class GenerationContext:
    """Snapshot handed to a run observer at the end of each generation."""

    generation: int
    temperature: float | None
    parents: np.ndarray
    model: object
    bank: SolutionBank
    pool_strings: np.ndarray | None
    pool_values: np.ndarray | None
    fit_seed: int
    record: RunRecord


def _evaluate_new(problem, bank: SolutionBank, children: np.ndarray, generation: int, budget: int):
    """Evaluate children absent from the bank, up to the remaining budget.

    Returns (per-child values with NaN where unknown, number of new calls).
    """
    room = budget - len(bank)
    fresh_rows: list[np.ndarray] = []
    staged: dict[bytes, int] = {}
    for row in children:
        key = row.tobytes()
        if key in bank._index or key in staged:
            continue
        if len(fresh_rows) >= room:
            continue
        staged[key] = len(fresh_rows)
        fresh_rows.append(row)
    if fresh_rows:
        fresh = np.asarray(fresh_rows, dtype=np.int8)
        values = np.asarray(problem.evaluate_batch(fresh), dtype=np.float64)
        for row, value in zip(fresh, values):
            bank.add(row, float(value), generation)
    child_values = np.full(children.shape[0], np.nan)
    for pos, row in enumerate(children):
        known = bank.value_of(row)
        if known is not None:
            child_values[pos] = known
    return child_values, len(fresh_rows)


def run_eda(
    problem,
    model,
    selection,
    cfg: EdaConfig,
    rng,
    observer: Callable[[GenerationContext], None] | None = None,
) -> list[RunRecord]:
    """Run the selection / fit / sample / mutate / evaluate loop.

    Args:
        problem: objective with ``n_bits`` and ``evaluate_batch``.
        model: sampler adapter with ``fit(parents, rng)`` and ``sample(n, rng)``.
        selection: Boltzmann, tournament, or greedy policy.
        cfg: loop configuration.
        rng: generator or integer seed; drives everything in the run.
        observer: optional callback receiving a :class:`GenerationContext`
            at the end of every generation (used by KL diagnostics).

    Returns:
        One :class:`RunRecord` per completed generation.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n_bits = problem.n_bits
    n_init = cfg.n_init if cfg.n_init is not None else cfg.n_children
    if cfg.call_budget <= n_init:
        raise ValueError("call_budget must exceed the initial population size")

    bank = SolutionBank(n_bits)
    init_strings = rng.integers(0, 2, size=(n_init, n_bits), dtype=np.int8)
    _evaluate_new(problem, bank, init_strings, generation=0, budget=cfg.call_budget)

    population = (bank.strings.copy(), bank.values.copy())

    annealed_t0 = None
    annealed_t_max = None
    if isinstance(selection, BoltzmannSelection) and isinstance(selection.schedule, AnnealedSchedule):
        annealed_t0 = selection.schedule.t0
        if annealed_t0 is None:
            spread = float(np.std(bank.values, ddof=1)) if len(bank) > 1 else 0.0
            annealed_t0 = spread if np.isfinite(spread) and spread > 0 else 1.0
        annealed_t_max = selection.schedule.t_max or cfg.generations

    records: list[RunRecord] = []
    for generation in range(1, cfg.generations + 1):
        if len(bank) >= cfg.call_budget:
            break

        temperature = None
        pool_strings = pool_values = None
        if isinstance(selection, BoltzmannSelection):
            if isinstance(selection.schedule, AnnealedSchedule):
                temperature = annealed_temperature(annealed_t0, generation - 1, annealed_t_max)
            else:
                try:
                    temperature = adaptive_temperature(
                        bank, selection.schedule.rank, selection.schedule.ratio
                    )
                except DegenerateBankError:
                    temperature = TEMPERATURE_FLOOR
                temperature = max(temperature, TEMPERATURE_FLOOR)
            if selection.pool_size is not None and selection.pool_size < len(bank):
                keep = bank.top_indices(selection.pool_size)
                pool_strings = bank.strings[keep]
                pool_values = bank.values[keep]
            else:
                pool_strings = bank.strings
                pool_values = bank.values
            parents = boltzmann_select(
                (pool_strings, pool_values), cfg.n_parents, temperature, None, rng
            )
        elif isinstance(selection, TournamentSelection):
            parents = tournament_select(population, cfg.n_parents, selection.arity, rng)
        elif isinstance(selection, GreedyTopK):
            parents = greedy_select(population[0], population[1], selection.k)
        else:
            raise TypeError(f"unknown selection policy {type(selection).__name__}")

        fit_seed = int(rng.integers(0, 2**63 - 1))
        model.fit(parents, np.random.default_rng(fit_seed))
        raw = model.sample(cfg.n_children, rng)
        children = mutate(raw, cfg.mutation_rate, rng)

        child_values, n_new = _evaluate_new(problem, bank, children, generation, cfg.call_budget)

        if cfg.population_update is PopulationUpdate.REPLACE_WITH_NEW_UNIQUE:
            known = ~np.isnan(child_values)
            pop_strings = children[known]
            pop_values = child_values[known]
            if cfg.elitism and len(bank) and pop_strings.shape[0]:
                best_bits, best_value = bank.best()
                if pop_values.min() > best_value:
                    worst = int(pop_values.argmax())
                    pop_strings = pop_strings.copy()
                    pop_values = pop_values.copy()
                    pop_strings[worst] = best_bits
                    pop_values[worst] = best_value
            if pop_strings.shape[0]:
                population = (pop_strings, pop_values)

        _, best_value = bank.best()
        known_values = child_values[~np.isnan(child_values)]
        median_value = float(np.median(known_values)) if known_values.size else math.nan
        record = RunRecord(
            generation=generation,
            best_objective=best_value,
            median_objective=median_value,
            calls=len(bank),
            n_new=n_new,
            temperature=temperature,
        )
        records.append(record)

        if observer is not None:
            observer(
                GenerationContext(
                    generation=generation,
                    temperature=temperature,
                    parents=parents,
                    model=model,
                    bank=bank,
                    pool_strings=pool_strings,
                    pool_values=pool_values,
                    fit_seed=fit_seed,
                    record=record,
                )
            )

        if cfg.target_objective is not None and best_value <= cfg.target_objective + 1e-9:
            break

    return records
