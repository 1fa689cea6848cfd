"""Value functions as control barrier functions.

Learn a safety value function with DQN on a 0/1 safety-preserving reward,
threshold it into a barrier function, check it with sampled validity and
coverage metrics, verify the underlying theory exactly on tabular MDPs, and
deploy it as a runtime shield.
"""
from .barrier import (BarrierFn, TransformSpec, alpha_lower_bound, check_transform,
                      make_barrier, valid_R_interval)
from .dqn import SETTINGS, TrainConfig, train
from .envs import TabularMDP, cartpole_spec, cartpole_step, default_gridworld, gridworld_build
from .mdp import SafetySpec, Transition, safety_reward, sample_state, wrap_episode_step
from .network import ValueNet, forward, init_net, load_checkpoint, save_checkpoint
from .oracle import compute_partition, value_iteration, verify_theorem1, verify_theorem2
from .shield import ShieldConfig, rollout_shielded, shielded_action
from .verification import VerificationConfig, m_cov, m_valid, td_error_metric

__version__ = "0.1.0"
