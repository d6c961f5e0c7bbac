"""What ESA sees: a learned Q-network swept along one action, raw and high-passed.

A short PPO run fits the Q-network, then the torque is swept from -2 to 2 at
the hanging-down state. The high-pass filter removes the level of Q and keeps
its slope along the sweep, which is the quantity the sinusoidal probe
demodulates into a correction.

    python demos/scan_q.py
"""
import numpy as np

from esarl import envs as E
from esarl.approx import forward
from esarl.esa import scan_filtered_q
from esarl.rl import PpoConfig, train

spec = E.make_spec("pendulum")
res = train(spec, PpoConfig(total_steps=20_480, gamma=0.9, lr=1e-3, reward_scale=0.1), seed=0)
q_net = res.learner.q_net

state = np.array([-1.0, 0.0, 0.0])  # cos(theta), sin(theta), theta_dot: hanging down, at rest
q = lambda s, a: forward(q_net, np.concatenate([s, a]))[0]
table = scan_filtered_q(q, state, [0.0], dim=0, half_width=2.0, steps=41, hp_cutoff=1.0)

print(f"{'torque':>7} {'Q':>9} {'HP[Q]':>9}")
for a, raw, filtered in table:
    print(f"{a:7.2f} {raw:9.4f} {filtered:9.4f}")
best = table[np.argmax(table[:, 1])]
print(f"Q is largest at torque {best[0]:.2f}")
