"""Protocol driver: users -> local randomizer -> shuffler -> bandit server.

``run_protocol`` plays ``T`` rounds for one seed.  Presets build the two
published parameterizations (best local privacy, best regret); ``sweep`` and
``fit_regret_slope`` turn many runs into a regret exponent estimate.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bandit import BanditConfig, BanditState, LinUCBBaseline, commit_count_bound, select_action
from .env import EnvConfig, LinearEnv
from .errors import ConfigError, ContractError, UndefinedSlopeError
from .ldp import LdpConfig, compute_flip_probability, privatize
from .shuffler import PrivacyReport, PrivacyTarget, ShufflerState, privacy_report, solve_batch_length

SCHEMA_VERSION = "1.0"
ALGORITHMS = ("sblb", "fixed", "linucb")
PRESETS = ("ldp_optimized", "regret_optimized", "manual")
# largest central epsilon admitted by the batch-length theorem's (0, 1) domain
EPSILON_CAP = 1.0 - 1e-6
OUTPUT_DIR_ENV = "SBLB_OUTPUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig
    ldp: LdpConfig
    bandit: BanditConfig
    privacy: PrivacyTarget
    preset: str = "manual"
    algorithm: str = "sblb"
    batch_length: int | None = None
    seeds: tuple = (0,)
    output_dir: str | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.batch_length is not None and self.batch_length < 1:
            raise ConfigError("batch_length must be >= 1")

    def with_(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def with_horizon(self, T: int) -> "RunConfig":
        return self.with_(env=dataclasses.replace(self.env, T=T),
                          bandit=dataclasses.replace(self.bandit, T=T),
                          privacy=dataclasses.replace(self.privacy, T=max(T, 1)))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["seeds"] = list(self.seeds)
        out["p"] = self.ldp.p
        return out


def build_config(env: EnvConfig, epsilon0: float, epsilon: float, delta0: float = 0.1,
                 delta: float = 0.1, m: int = 1, eta: float = 0.5, lam: float = 1.0,
                 algorithm: str = "sblb", preset: str = "manual",
                 batch_length: int | None = None, seeds: Sequence[int] = (0,),
                 output_dir: str | None = None, notes: dict | None = None) -> RunConfig:
    """Assemble a consistent RunConfig; ``p`` is derived once from ``epsilon0``."""
    ldp = LdpConfig(epsilon0=epsilon0, m=m, d=env.d, L=env.L)
    p = ldp.p
    if not 0 < p < 1:
        raise ConfigError(f"flip probability {p} degenerate for epsilon0={epsilon0}")
    bandit = BanditConfig(d=env.d, p=p, m=m, eta=eta, lam=lam, delta=delta,
                          sigma=env.sigma, S=env.S, L=env.L, T=env.T)
    privacy = PrivacyTarget(epsilon=epsilon, delta0=delta0, delta=delta, T=max(env.T, 1),
                            m=m, d=env.d, p=p)
    return RunConfig(env=env, ldp=ldp, bandit=bandit, privacy=privacy, preset=preset,
                     algorithm=algorithm, batch_length=batch_length, seeds=tuple(seeds),
                     output_dir=output_dir, notes=dict(notes or {}))


def preset_ldp_optimized(epsilon0: float, delta: float, env: EnvConfig, **kw) -> RunConfig:
    """Strongest local privacy: ``epsilon = sqrt(e^eps0 - 1)``, ``delta0 = delta``."""
    if not epsilon0 > 0:
        raise ConfigError("epsilon0 must be positive")
    epsilon = math.sqrt(math.expm1(epsilon0))
    if epsilon >= 1.0:
        warnings.warn(f"epsilon = sqrt(e^eps0 - 1) = {epsilon:.4g} >= 1; capped to {EPSILON_CAP}",
                      stacklevel=2)
        epsilon = EPSILON_CAP
    T = max(env.T, 1)
    notes = {"expected_regret_order": "T^(3/4) sqrt(e^eps0 + 1) / sqrt(e^eps0 - 1)",
             "expected_regret_scale": T ** 0.75 * math.sqrt((math.exp(epsilon0) + 1)
                                                            / math.expm1(epsilon0))}
    return build_config(env, epsilon0=epsilon0, epsilon=epsilon, delta0=delta, delta=delta,
                        preset="ldp_optimized", notes=notes, **kw)


def regret_optimized_epsilon_max(T: int) -> float:
    return 1.0 / (27.0 * T ** 0.25)


def preset_regret_optimized(epsilon: float, delta: float, delta0: float, env: EnvConfig,
                            **kw) -> RunConfig:
    """Best regret: ``eta = 1/2``, ``lambda = sqrt(T)``, ``m = 1``, ``p = 1 - eps^(2/3) T^(1/6)``."""
    T = env.T
    if T < 1:
        raise ConfigError("regret-optimized preset needs T >= 1")
    if not 0 < epsilon <= regret_optimized_epsilon_max(T) * (1 + 1e-12):
        raise ConfigError(f"epsilon={epsilon} outside (0, 1/(27 T^(1/4))] for T={T}")
    q = epsilon ** (2.0 / 3.0) * T ** (1.0 / 6.0)
    if q >= 1.0:
        raise ConfigError(f"eps^(2/3) T^(1/6) = {q} >= 1")
    d = env.d
    epsilon0 = d * (d + 3) / 2.0 * math.log(2.0 / (1.0 - q) - 1.0)
    notes = {"expected_regret_order": "T^(2/3) / eps^(1/3)",
             "expected_regret_scale": T ** (2.0 / 3.0) / epsilon ** (1.0 / 3.0),
             "target_p": 1.0 - q,
             "ldp_level": epsilon0}
    kw.setdefault("eta", 0.5)
    kw.setdefault("lam", math.sqrt(T))
    return build_config(env, epsilon0=epsilon0, epsilon=epsilon, delta0=delta0, delta=delta,
                        m=1, preset="regret_optimized", notes=notes, **kw)


@dataclass
class RunResult:
    seed: int
    algorithm: str
    chosen: np.ndarray
    rewards: np.ndarray
    instant_regret: np.ndarray
    commit_log: list
    batch_log: list
    privacy: PrivacyReport | None
    coverage: list
    l_star: int | None
    commit_bound: float | None
    config: dict
    wall_clock: float = 0.0

    @property
    def regret(self) -> np.ndarray:
        return np.cumsum(self.instant_regret)

    @property
    def final_regret(self) -> float:
        return float(self.instant_regret.sum()) if len(self.instant_regret) else 0.0

    @property
    def num_commits(self) -> int:
        return len(self.commit_log)

    def summary(self) -> dict:
        """JSON-ready summary; wall-clock time is left out so reruns compare byte-for-byte."""
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "algorithm": self.algorithm,
            "config": _jsonable(self.config),
            "privacy": None if self.privacy is None else self.privacy.to_dict(),
            "l_star": self.l_star,
            "num_commits": self.num_commits,
            "commit_bound": self.commit_bound,
            "commit_log": self.commit_log,
            "batch_log": self.batch_log,
            "coverage": self.coverage,
            "final_regret": self.final_regret,
        }

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("t,chosen,reward,instant_regret\n")
        for t, (a, r, g) in enumerate(zip(self.chosen, self.rewards, self.instant_regret), 1):
            buf.write(f"{t},{int(a)},{float(r)!r},{float(g)!r}\n")
        return buf.getvalue()

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.summary(), sort_keys=True).encode())
        h.update(self.csv_text().encode())
        return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _ellipsoid_covers(theta_star, estimate) -> bool:
    diff = theta_star - estimate.theta
    return bool(math.sqrt(max(float(diff @ estimate.V @ diff), 0.0)) <= estimate.beta)


def run_protocol(cfg: RunConfig, seed: int) -> RunResult:
    """Play ``cfg.env.T`` rounds of the configured algorithm, deterministically in ``seed``."""
    start = time.perf_counter()
    T, d = cfg.env.T, cfg.env.d
    env_rng, ldp_rng, shuffle_rng = (np.random.default_rng(s)
                                     for s in np.random.SeedSequence(seed).spawn(3))
    env = LinearEnv(cfg.env, env_rng)
    chosen = np.zeros(T, dtype=np.int64)
    rewards = np.zeros(T)
    inst = np.zeros(T)
    coverage: list = []
    batch_log: list = []

    if cfg.algorithm == "linucb":
        b = cfg.bandit
        agent = LinUCBBaseline(d, lam=b.lam, eta=b.eta, delta=b.delta, sigma=b.sigma, S=b.S, L=b.L)
        for t in range(1, T + 1):
            X = env.generate_contexts(t)
            a = agent.select(X)
            r = env.realize_reward(X[a])
            chosen[t - 1], rewards[t - 1] = a, r
            inst[t - 1] = env.instant_regret(X, a)
            if agent.update(X[a], r):
                coverage.append(_ellipsoid_covers(env.theta_star, agent.estimate))
        return RunResult(seed, cfg.algorithm, chosen, rewards, inst, agent.batch_log, batch_log,
                         None, coverage, None,
                         commit_count_bound(max(T, 1), d, b.L, 0.0, b.delta, b.eta),
                         cfg.to_dict(), time.perf_counter() - start)

    if T == 0:
        l_star = cfg.batch_length or 1
    else:
        l_star = cfg.batch_length or solve_batch_length(cfg.privacy)
    p = cfg.ldp.p
    state = BanditState(cfg.bandit)
    shuffler = ShufflerState(l_star, d, cfg.ldp.m, shuffle_rng)
    fixed = cfg.algorithm == "fixed"
    for t in range(1, T + 1):
        X = env.generate_contexts(t)
        a = select_action(state.estimate, X)
        x = X[a]
        r = env.realize_reward(x)
        chosen[t - 1], rewards[t - 1] = a, r
        inst[t - 1] = env.instant_regret(X, a)
        stats = shuffler.push(privatize(x, r, cfg.ldp, ldp_rng, p=p))
        if stats is not None:
            batch_log.append(stats.to_record())
            if state.ingest(stats, fixed_schedule=fixed):
                coverage.append(_ellipsoid_covers(env.theta_star, state.estimate))

    if T > 0:
        report = privacy_report(cfg.privacy, l_star, cfg.ldp.epsilon0)
    else:
        report = PrivacyReport(l_star, None, 0, 0.0, 0.0, cfg.ldp.epsilon0,
                               cfg.privacy.epsilon, True)
    b = cfg.bandit
    bound = commit_count_bound(max(T, 1), d, b.L, b.p, b.delta, b.eta)
    return RunResult(seed, cfg.algorithm, chosen, rewards, inst, state.batch_log, batch_log,
                     report, coverage, l_star, bound, cfg.to_dict(), time.perf_counter() - start)


def _run_one(args):
    cfg, seed = args
    return run_protocol(cfg, seed)


def run_many(cfg: RunConfig, seeds: Sequence[int], workers: int | None = None) -> list[RunResult]:
    """Run every seed; results come back in seed order whatever the pool does."""
    jobs = [(cfg, s) for s in seeds]
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def sweep(make_config: Callable[[int], RunConfig], horizons: Sequence[int], seeds: Sequence[int],
          workers: int | None = None) -> dict:
    """Final regrets for every (horizon, seed) pair plus the fitted log-log slope."""
    finals = {}
    for T in horizons:
        results = run_many(make_config(T), seeds, workers)
        finals[int(T)] = [r.final_regret for r in results]
    out = {"schema_version": SCHEMA_VERSION, "horizons": [int(T) for T in horizons],
           "seeds": list(seeds), "final_regret": {str(k): v for k, v in finals.items()},
           "mean_regret": {str(k): float(np.mean(v)) for k, v in finals.items()}}
    try:
        slope, err = fit_regret_slope(list(finals), [finals[T] for T in finals],
                                      min_seeds=min(20, len(seeds)))
        out["slope"], out["slope_stderr"] = slope, err
    except (UndefinedSlopeError, ContractError) as exc:
        out["slope"], out["slope_stderr"], out["slope_error"] = None, None, str(exc)
    return out


def fit_regret_slope(horizons: Sequence[int], regrets: Sequence[Sequence[float]],
                     n_boot: int = 1000, seed: int = 0, min_horizons: int = 4,
                     min_seeds: int = 20) -> tuple[float, float]:
    """Least-squares slope of log(mean R_T) on log T, with a seed-bootstrap stderr."""
    if len(horizons) < min_horizons or len(horizons) != len(regrets):
        raise ContractError(f"need >= {min_horizons} horizons with matching regret lists")
    data = [np.asarray(r, dtype=float) for r in regrets]
    if any(len(r) < min_seeds for r in data):
        raise ContractError(f"need >= {min_seeds} seeds per horizon")
    means = np.array([r.mean() for r in data])
    if np.any(means <= 0):
        raise UndefinedSlopeError("mean regret must be positive at every horizon")
    logT = np.log(np.asarray(horizons, dtype=float))
    slope = float(np.polyfit(logT, np.log(means), 1)[0])

    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for i in range(n_boot):
        bm = np.array([r[rng.integers(0, len(r), len(r))].mean() for r in data])
        boots[i] = np.polyfit(logT, np.log(np.maximum(bm, 1e-300)), 1)[0]
    return slope, float(boots.std(ddof=1))


def summarize_regret(values: Sequence[float], delta: float = 0.1, n_boot: int = 2000,
                     seed: int = 0) -> dict:
    """Mean with a 95% bootstrap interval, and the (1 - delta) empirical quantile."""
    v = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    boots = np.array([v[rng.integers(0, len(v), len(v))].mean() for _ in range(n_boot)])
    return {"mean": float(v.mean()), "ci_low": float(np.quantile(boots, 0.025)),
            "ci_high": float(np.quantile(boots, 0.975)), "boot_std": float(boots.std(ddof=1)),
            "quantile": float(np.quantile(v, 1 - delta)), "n": int(len(v))}


def paired_gap(lower: Sequence[float], upper: Sequence[float], n_boot: int = 2000,
               seed: int = 0) -> tuple[float, float]:
    """Mean of ``upper - lower`` over matched seeds and its bootstrap standard error."""
    diff = np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float)
    rng = np.random.default_rng(seed)
    boots = np.array([diff[rng.integers(0, len(diff), len(diff))].mean() for _ in range(n_boot)])
    return float(diff.mean()), float(boots.std(ddof=1))


def export(result: RunResult, out_dir) -> tuple[Path, Path]:
    """Write ``trace_<seed>.csv`` and ``summary_<seed>.json`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace = out / f"trace_{result.seed}.csv"
    summary = out / f"summary_{result.seed}.json"
    trace.write_text(result.csv_text())
    summary.write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    return trace, summary


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "sblb_out")
