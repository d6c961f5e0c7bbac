"""PPO on the pendulum swing-up with and without extremum-seeking action selection.

Both runs share a seed, so they start from the same networks and the same
initial states. With ESA every sampled action is nudged by a per-episode
correction that climbs the learned Q-network; the printout shows the learning
curves side by side together with ESA's diagnostics.

    python demos/train_pendulum.py            # about ten seconds per variant
"""
import math

from esarl import envs as E
from esarl.esa import EsaConfig, default_v_clip
from esarl.rl import PpoConfig, steps_to_threshold, train

spec = E.make_spec("pendulum")
ppo = PpoConfig(total_steps=60_000, gamma=0.9, lr=1e-3, reward_scale=0.1)
esa = EsaConfig(K=0.2, omega=10 * math.pi, alpha=1.0, dt_esa=spec.dt, decay="linear", decay_end=60,
                v_clip=default_v_clip(spec.action_low, spec.action_high))

base = train(spec, ppo, seed=0)
with_esa = train(spec, ppo, esa, seed=0)

print(f"{'steps':>7} {'baseline':>9} {'ESA':>9} {'mean|v|':>8} {'mean|HP[Q]|':>11}")
for b, e in zip(base.rows, with_esa.rows):
    print(f"{b['env_steps']:7d} {b['mean_return']:9.1f} {e['mean_return']:9.1f} "
          f"{e['mean_abs_v']:8.3f} {e['mean_abs_filtered_q']:11.4f}")

for name, res in (("baseline", base), ("ESA", with_esa)):
    print(f"{name}: steps to return {spec.threshold:g}: {steps_to_threshold(res.rows, spec.threshold)}")
print(f"ESA made {with_esa.esa_queries} Q queries in {with_esa.env_steps} environment steps")
