"""Which reparametrisations of a barrier are still barriers?

A map w with w(x) >= C x for x >= 0, w(x) - w(y) >= C (x - y) for x >= y,
and sign(w(x)) = sign(x) keeps both barrier conditions intact. The bounded
Q-network uses exactly such a chain to turn V - R into its pre-sigmoid logit.

Run:  python3 demos/transforms.py
"""
import numpy as np

from valuebarrier.barrier import (TransformSpec, check_transform, compose, g_inverse, identity_transform,
                                  logit_transform, sample_transform_inputs, sigma_tilde_inverse)

rng = np.random.default_rng(0)
gamma = 0.99
half = 0.5 / (1 - gamma)

candidates = [
    (identity_transform(), (-100, 100)),
    (g_inverse(gamma), (-100, 100)),
    (sigma_tilde_inverse(), (-0.5 + 1e-6, 0.5 - 1e-6)),
    (compose(sigma_tilde_inverse(), g_inverse(gamma)), (-half + 1e-6, half - 1e-6)),
    (TransformSpec(lambda x: x + 1.0, 1.0, "x + 1"), (-10, 10)),
    (TransformSpec(lambda x: np.tanh(x), 1.0, "tanh"), (-10, 10)),
]
for spec, (a, b) in candidates:
    pts, pairs = sample_transform_inputs(a, b, 10_000, rng)
    res = check_transform(spec, pts, pairs)
    verdict = "ok" if res else f"fails ({res.condition}) at {res.counterexample}"
    print(f"{spec.name:32s} C={spec.C:<6g} {verdict}")

# the composite really is the map from V - 50 to the network logit
z = np.linspace(-8, 8, 5)
v_minus_R = (1 / (1 + np.exp(-z)) - 0.5) / (1 - gamma)
print("\nlogit recovered from V - R:", np.round(logit_transform(gamma).w(v_minus_R), 9))
