"""Exact barrier certificates on a small gridworld.

On a finite deterministic MDP the optimal safety value function can be
computed exactly, so the claim "V* - R is a control barrier function for R in
((1 - gamma^H)/(1 - gamma), 1/(1 - gamma)]" can be checked on every state
rather than sampled.

Run:  python3 demos/gridworld_theorems.py
"""
import numpy as np

from valuebarrier.barrier import alpha_lower_bound, valid_R_interval
from valuebarrier.envs import default_gridworld, format_gridmap
from valuebarrier.oracle import (IRREC, SAFE, compute_partition, theorem_interval, value_iteration,
                                 verify_theorem1, worst_case_theorem2)
from valuebarrier.shield import adversarial_shield_check

gamma = 0.99
mdp = default_gridworld()
print("map ('.' free, 'H' hazard, arrows force a move):")
print(format_gridmap(mdp))

# 1. who is doomed, and how soon
part = compute_partition(mdp)
vals = value_iteration(mdp, gamma)
print(f"value iteration converged in {vals.sweeps} sweeps")
for s in np.flatnonzero(part.labels == IRREC):
    print(f"  irrecoverable cell {mdp.cell(s)}: k={part.k[s]}, V*={vals.V[s]:.6f}")
print(f"  safe cells: {np.sum(part.labels == SAFE)}, all with V* = {vals.V[part.labels == SAFE].min():.6f}")

# 2. the admissible threshold interval, and what happens at its edge
lo, hi = theorem_interval(gamma, part.H)
print(f"\nH = {part.H}: thresholds in ({lo:.6f}, {hi:g}] give a barrier")
for R in (lo + 1e-3, 50.0, hi):
    print(" ", verify_theorem1(mdp, vals, part, R).to_text().splitlines()[0])
print(verify_theorem1(mdp, vals, part, lo).to_text())

# 3. an inexact value function: eps-close to V*, adversarially perturbed
eps = 10.0
lo_e, hi_e = valid_R_interval(gamma, part.H, eps)
R = 50.0
alpha = alpha_lower_bound(gamma, eps, R)
reports = worst_case_theorem2(mdp, vals, part, eps, R, alpha)
print(f"\neps={eps}: R must lie in ({lo_e:.3f}, {hi_e:.3f}], alpha >= {alpha:.4f}")
print(f"  {sum(len(r.violations) for r in reports)} violations over {len(reports)} perturbations")

# 4. the shield built from Q* keeps every safe start safe, whatever the nominal policy does
Q = vals.Q(mdp)
starts = np.flatnonzero(vals.V >= R)
fails = adversarial_shield_check(mdp, Q, R, starts, depth=5)
print(f"\nshield at R={R}: {len(fails)} failures over {len(starts)} starts x 4^5 nominal sequences")
