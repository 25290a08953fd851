"""
Local randomizer: encoding, noise and exact privacy
====================================================

One user turns a context and a reward into bits, flips some of them to fair
coins, and sends the result.  We look at the bits, check their averages, and
audit the likelihood ratio exactly on a tiny configuration.
"""

import math

import numpy as np

from sblb.ldp import (LdpConfig, audit_input_grid, debias_sum_b, encode, ldp_ratio_audit,
                      privatize)

rng = np.random.default_rng(0)

# a 3-dimensional context inside the unit ball, reward 0.8, 4 bits per coordinate
cfg = LdpConfig(epsilon0=6.0, m=4, d=3)
x = np.array([0.5, -0.3, 0.6])
r = 0.8
print("flip probability p =", round(cfg.p, 4))

enc = encode(x, r, cfg, rng)
print("shifted reward-context y =", enc.y.round(3))
print("unary bits (before noise):")
print(enc.b)

# averaging many noisy reports and debiasing recovers r * x / 2
n = 20000
Z = sum(privatize(x, r, cfg, rng).b.sum(axis=1, dtype=np.int64) for _ in range(n))
print("debiased mean :", (debias_sum_b(Z, n, cfg.m, cfg.p) / n).round(3))
print("target r x / 2:", (r * x / 2).round(3))

# exhaustive audit: d = 1, m = 1 has only two randomized bits
small = LdpConfig(epsilon0=2 * math.log(3), m=1, d=1)
worst = ldp_ratio_audit(small, audit_input_grid(small))
print(f"worst log-likelihood ratio {worst:.4f} <= epsilon0 {small.epsilon0:.4f}")
