"""Shuffle-model private linear contextual bandits.

Local randomizer (:mod:`sblb.ldp`), fixed-batch shuffler with privacy
accounting (:mod:`sblb.shuffler`), batched optimistic server
(:mod:`sblb.bandit`), synthetic environment (:mod:`sblb.env`) and the
experiment driver (:mod:`sblb.harness`).
"""

from .bandit import (BanditConfig, BanditState, LinUCBBaseline, ModelEstimate, beta_width,
                     commit_count_bound, lambda_schedule, ridge_solve, select_action)
from .env import EnvConfig, LinearEnv, Round, cumulative_regret
from .errors import (AmplificationError, ConfigError, ContractError, DomainError,
                     InfeasibleError, NumericError, SBLBError, UndefinedSlopeError)
from .harness import (RunConfig, RunResult, build_config, export, fit_regret_slope,
                      preset_ldp_optimized, preset_regret_optimized, run_many, run_protocol,
                      sweep)
from .ldp import (BitPayload, EncodedPayload, LdpConfig, compute_flip_probability,
                  debias_sum_b, debias_sum_w, encode, ldp_ratio_audit, privatize,
                  randomize_bit)
from .shuffler import (AggregateStats, PrivacyReport, PrivacyTarget, ShufflerState, compose,
                       per_batch_epsilon, privacy_report, solve_batch_length)

__version__ = "0.1.0"
