"""Run the cost-variant x covariance-mode x truncation sweep and print one table per run.

Usage: python scripts/sweep.py [n_trials] [workers]
"""

import dataclasses
import itertools
import sys
import time

from capm.energy import EnergyParams
from capm.sim import ExperimentConfig, format_table, run_experiment


def main() -> None:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
    workers = int(sys.argv[2]) if len(sys.argv) > 2 else 1
    base = ExperimentConfig(n_trials=n)
    for expo, mode, trunc in itertools.product((2, 1), ("linear", "squared"), (False, True)):
        cfg = dataclasses.replace(
            base, energy=EnergyParams(distance_exponent=expo), sigma_mode=mode, truncate=trunc
        )
        t0 = time.perf_counter()
        table = run_experiment(cfg, workers)
        dt = time.perf_counter() - t0
        cost = "squared" if expo == 2 else "euclidean"
        print(f"## distance={cost} sigma={mode} truncate={int(trunc)} ({dt:.0f} s, {len(table.failures)} failed runs)")
        print(format_table(table))
        print(flush=True)


if __name__ == "__main__":
    main()
