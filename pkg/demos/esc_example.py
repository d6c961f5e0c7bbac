"""Extremum seeking on a 2-D bowl, compared with a sampling-based search gradient.

The objective is J(u) = |u - (0.1, 0.5)|^2, started from u = (2, 2). ESC spends
one objective query per iteration; the search gradient spends ``batch``.
Then the bowl's center starts moving, c(t) = (0.1 t, 0.5 t), and ESC has to
follow it.

    python demos/esc_example.py
"""
import numpy as np

from esarl.baselines import queries_to_level, run_search_gradient
from esarl.esc import EscParams, default_frequencies, esc_run, example_objective, example_static

# two dimensions probed at 80 and 120 rad/s, high-pass cutoffs at a fifth of that
params = EscParams(K=[0.2, 0.2], omega=default_frequencies(80.0, 2), alpha=50.0, dt=0.01)
start = [2.0, 2.0]
level = 1e-2

obj = example_objective(dynamic=False)
trace = esc_run(params, obj, start, 400)
j = np.array([example_static(v) for v in trace.v])
print(f"ESC: J(v) < {level} after {queries_to_level(j, level, 1)} queries "
      f"({obj.queries} queries in total, final v = {np.round(trace.v[-1], 3)})")

for batch in (1, 10, 100):
    hits = []
    for seed in range(5):
        s = run_search_gradient(example_objective(dynamic=False), start, 0.1, batch, 0.45, 5000 // batch, seed=seed)
        hits.append(queries_to_level(s.j, level, batch))
    print(f"search gradient, batch {batch:3d}: queries to level per seed {hits}")

# moving optimum: one iteration advances time by dt
trace = esc_run(params, example_objective(dynamic=True), start, 1001)
center = np.column_stack([0.1 * trace.time, 0.5 * trace.time])
err = np.linalg.norm(trace.v - center, axis=1)
for t in (1, 2, 4, 6, 8, 10):
    k = int(round(t / params.dt))
    print(f"t = {t:2d}: v = {np.round(trace.v[k], 3)}, tracking error {err[k]:.3f}")
