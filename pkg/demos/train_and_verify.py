"""Train a bounded Q-network on cart-pole, then read it as a barrier certificate.

The default budget is small so the script finishes in a couple of minutes;
pass a step count to train longer, e.g. ``python3 demos/train_and_verify.py 500000``.
"""
import sys

import numpy as np

from valuebarrier import envs
from valuebarrier.barrier import make_barrier
from valuebarrier.dqn import TrainConfig, train
from valuebarrier.runs import cartpole_shield_eval
from valuebarrier.shield import ShieldConfig
from valuebarrier.verification import VerificationConfig, barrier_metrics, phase_grid

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 60_000
cfg = TrainConfig.for_setting("sigmoid-sup", seed=0, total_steps=steps, eval_period=max(steps // 6, 1))


def progress(net, rec):
    print(f"step {rec.step:>7d}  return {rec.return_mean:6.1f}  td {rec.td_error:6.3f}  "
          f"m_valid {rec.m_valid:.4f}  m_cov {rec.m_cov:.4f}", flush=True)


result = train(cfg, on_eval=progress)
net = result.net

# validity and coverage on fresh samples
h = make_barrier(net)
m = barrier_metrics(h, VerificationConfig(seed=123), envs.cartpole_spec(), envs.cartpole_step, 2)
print(f"\nfresh samples: m_valid {m['m_valid']:.4f}, m_cov {m['m_cov']:.4f}")

# a coarse text picture of the certified set in the angle / angular-velocity plane
rows = phase_grid(h, "ang-angvel", 21, envs.cartpole_spec())
grid = np.array([r[4] for r in rows]).reshape(21, 21).T[::-1]
print("\ncertified set (#) over theta in [-0.3, 0.3] (x axis), theta_dot in [-3, 3] (y axis):")
for line in grid:
    print("  " + "".join("#" if v else "." for v in line))

# the shield lets a random policy balance far longer than it could alone
conf = ShieldConfig(R=50.0, episodes=30)
shielded = cartpole_shield_eval(net, conf)
raw = cartpole_shield_eval(net, conf, shielded=False)
print(f"\nrandom policy: {raw.mean_length:.1f} steps on average; "
      f"shielded: {shielded.mean_length:.1f} (success {shielded.success_rate:.2f})")
