"""
One private bandit run
======================

Users see the current model, pick an arm, privatize what they learned and hand
it to the shuffler.  The server only updates when the design matrix has grown
enough.  This script plays the regret-optimized configuration on the default
instance and prints what happened.
"""

from sblb import EnvConfig, preset_regret_optimized, run_protocol
from sblb.harness import regret_optimized_epsilon_max

env = EnvConfig(T=8192)
eps = regret_optimized_epsilon_max(env.T)
cfg = preset_regret_optimized(eps, delta=0.1, delta0=0.1, env=env)
print(f"epsilon={eps:.4f}  p={cfg.ldp.p:.3f}  epsilon0={cfg.ldp.epsilon0:.2f}")

res = run_protocol(cfg, seed=0)
print(f"batch length l* = {res.l_star}, shuffler batches = {len(res.batch_log)}")
print(f"model commits = {res.num_commits} (bound {res.commit_bound:.1f})")
print(f"theta* inside every committed ellipsoid: {all(res.coverage)}")
print(f"cumulative regret after {env.T} rounds: {res.final_regret:.2f}")

for entry in res.commit_log[:5]:
    print(f"  commit {entry['j']} at t={entry['t']}  beta={entry['beta']:.2f}  "
          f"log det ratio={entry['log_det_ratio']:.3f}")

rep = res.privacy
print(f"composed privacy over {rep.num_batches} batches: "
      f"eps_total={rep.epsilon_total:.3g}, delta_total={rep.delta_total}")
