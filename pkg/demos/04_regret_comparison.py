"""
Private, fixed-schedule and non-private regret
==============================================

Same instance, same seeds, three servers: the determinant-triggered private
server, the private server that refits after every shuffler batch, and an
exact-statistics LinUCB.  Regret is averaged over seeds with a bootstrap
interval.
"""

import numpy as np

from sblb import EnvConfig, preset_regret_optimized, run_many
from sblb.harness import paired_gap, regret_optimized_epsilon_max, summarize_regret

env = EnvConfig(T=4096)
cfg = preset_regret_optimized(regret_optimized_epsilon_max(env.T), 0.1, 0.1, env)
seeds = list(range(10))

final = {}
for alg in ("linucb", "sblb", "fixed"):
    runs = run_many(cfg.with_(algorithm=alg), seeds, workers=1)
    final[alg] = np.array([r.final_regret for r in runs])
    s = summarize_regret(final[alg])
    print(f"{alg:7s} mean R_T {s['mean']:8.2f}   95% CI [{s['ci_low']:.2f}, {s['ci_high']:.2f}]")

gap, se = paired_gap(final["sblb"], final["fixed"])
print(f"fixed minus sblb on matched seeds: {gap:.2f} +/- {se:.2f}")
