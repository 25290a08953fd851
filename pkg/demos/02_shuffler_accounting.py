"""
Shuffler batch length and central privacy
==========================================

The shuffler waits for l reports, permutes them and forwards bit counts.
Picking l trades amplification (long batches) against freshness of the
statistics.  Here we solve for l at a few noise levels and compose the
per-batch guarantee over the whole horizon.
"""

import math

from sblb.shuffler import (PrivacyTarget, batch_length_upper_bound, privacy_report,
                           solve_batch_length)

T = 10 ** 12
print(f"{'p':>5} {'l*':>14} {'bound':>14} {'batches':>8} {'eps_batch':>10} {'eps_total':>10}")
for p in (0.1, 0.3, 0.45, 0.6, 0.9):
    target = PrivacyTarget(epsilon=0.5, delta0=0.1, delta=0.1, T=T, m=1, d=1, p=p)
    l_star = solve_batch_length(target)
    eps0 = 2 * math.log(2 / p - 1)
    rep = privacy_report(target, l_star, eps0)
    print(f"{p:5.2f} {l_star:14d} {batch_length_upper_bound(target):14.4g} "
          f"{rep.num_batches:8d} {rep.epsilon_per_batch:10.3g} {rep.epsilon_total:10.3g}")

# Small p needs very long batches but composes below the 0.5 target; large p
# meets the batch condition at its floor, where one batch is far from private.
