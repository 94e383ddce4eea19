"""
Timing the reduction
====================

``bench_grid`` (also available as ``treecipher bench``) produces one record
per run.  Only ``engine.run`` is timed.  Mapping CSV columns to plots:
time against size uses ``n`` and ``wall_time_ns``; search-space reduction uses
``n`` and ``r_final``; the call bound uses ``map_nodes_calls / n``.
"""

# %%
import numpy as np

from treecipher.cli import bench_grid

sizes = [250, 500, 1000, 2000]
rows = bench_grid(sizes, [5], 15, ("similar", "perturbed"), base_seed=1, workers=1)

# %%
# Mean time per size and scenario, and a straight-line fit for the similar
# scenario.
for scenario in ("similar", "perturbed"):
    means = [np.mean([r.wall_time_ns for r in rows if r.n == n and r.scenario == scenario]) / 1e6
             for n in sizes]
    print(scenario, [f"{m:.2f} ms" for m in means])
    if scenario == "similar":
        slope, intercept = np.polyfit(sizes, means, 1)
        fitted = np.polyval([slope, intercept], sizes)
        r2 = 1 - np.sum((np.array(means) - fitted) ** 2) / np.sum((means - np.mean(means)) ** 2)
        print(f"  {slope * 1e3:.2f} us per node, R^2 = {r2:.4f}")

# %%
# The number of node mappings never exceeds the tree size.
print("max calls / n:", max(r.map_nodes_calls / r.n for r in rows))
