"""Comparing solver presets on a knapsack instance at desk scale.

Runs three of the benchmark presets (MPS Born machine, chain Bayesian
network, plain genetic algorithm) with reduced populations and budgets,
then prints a convergence table from the summary machinery.

Run: python3 demos/04_benchmark_solvers.py   (about a minute)
"""

from tneda import knapsack_optimum_dp, random_knapsack
from tneda.experiment import run_single, summarize

problem = random_knapsack(40, seed=11)
optimum = knapsack_optimum_dp(problem)
print(f"knapsack: N = 40, capacity {problem.capacity}, DP optimum {optimum:.0f}\n")

downscale = {
    "n_parents": 200, "n_children": 200, "n_init": 200,
    "generations": 20, "t_max": 20, "call_budget": 4200,
}
seeds = range(6)

for preset in ("TN1", "BN1", "GA2"):
    spec = {"preset": preset, **downscale}
    records = []
    for seed in seeds:
        records.extend(run_single(problem, spec, seed, optimum))
    rows = summarize(records)
    last = rows[-1]
    solved = sum(
        1 for r in records if r["generation"] == last["generation"] and r["best"] <= optimum
    )
    shown = rows[::4]
    if shown[-1] is not last:
        shown.append(last)
    print(f"{preset}: median relative error by generation "
          f"(over {len(list(seeds))} seeds)")
    for row in shown:
        print(
            f"   gen {row['generation']:3d}  rel err {row['rel_err_median']:.4f}"
            f"   (q1 {row['rel_err_q1']:.4f}, q3 {row['rel_err_q3']:.4f})"
        )
    print(f"   runs at optimum by the last generation: {solved}/{len(list(seeds))}\n")
