"""Fixed-length shuffler batches and their central-DP accounting.

The shuffler buffers exactly ``l`` privatized reports, applies a uniform
permutation, forwards only the integer bit counts ``(Z, U)`` and drops the raw
reports.  The accounting side picks ``l`` from the privacy target, evaluates the
per-batch amplified epsilon and composes it over the ``floor(T / l)`` batches
with the advanced composition theorem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AmplificationError, ConfigError, ContractError, InfeasibleError
from .ldp import BitPayload


@dataclass(frozen=True)
class AggregateStats:
    Z: np.ndarray
    U: np.ndarray
    batch_index: int
    l: int
    start_time: int
    end_time: int

    def to_record(self) -> dict:
        return {
            "batch_index": int(self.batch_index),
            "start_time": int(self.start_time),
            "end_time": int(self.end_time),
            "Z": [int(v) for v in self.Z],
            "U": [int(v) for v in self.U.ravel()],
        }


class ShufflerState:
    """Single-owner buffer of at most ``l - 1`` pending reports.

    Rounds are numbered from 1 in push order, so the batch holding pushes
    ``n*l + 1 .. (n+1)*l`` reports ``start_time = n*l + 1`` and
    ``end_time = (n+1)*l``.
    """

    def __init__(self, l: int, d: int, m: int, rng: np.random.Generator):
        if l < 1:
            raise ConfigError(f"batch length must be >= 1, got {l}")
        self.l = int(l)
        self.d = d
        self.m = m
        self.rng = rng
        self.buffer: list[BitPayload] = []
        self.batch_index = 0
        self.rounds_seen = 0

    def push(self, payload: BitPayload) -> AggregateStats | None:
        if payload.b.shape != (self.d, self.m) or payload.w.shape != (self.d, self.d, self.m):
            raise ContractError(
                f"payload shapes {payload.b.shape}, {payload.w.shape} do not match "
                f"d={self.d}, m={self.m}")
        self.buffer.append(payload)
        self.rounds_seen += 1
        if len(self.buffer) == self.l:
            return self.flush()
        return None

    def flush(self, rng: np.random.Generator | None = None) -> AggregateStats:
        if len(self.buffer) != self.l:
            raise ContractError(f"flush needs a full buffer ({len(self.buffer)}/{self.l})")
        rng = self.rng if rng is None else rng
        order = rng.permutation(self.l)
        shuffled = [self.buffer[i] for i in order]
        # raw reports are dropped before anything leaves the shuffler
        self.buffer = []

        Z = np.sum([pl.b for pl in shuffled], axis=(0, 2), dtype=np.int64)
        W = np.sum([pl.w for pl in shuffled], axis=(0, 3), dtype=np.int64)
        rows, cols = np.tril_indices(self.d)
        U = np.zeros((self.d, self.d), dtype=np.int64)
        U[rows, cols] = W[rows, cols]
        U[cols, rows] = W[rows, cols]

        stats = AggregateStats(Z=Z, U=U, batch_index=self.batch_index, l=self.l,
                               start_time=self.rounds_seen - self.l + 1,
                               end_time=self.rounds_seen)
        self.batch_index += 1
        return stats


@dataclass(frozen=True)
class PrivacyTarget:
    epsilon: float
    delta0: float
    delta: float
    T: int
    m: int
    d: int
    p: float

    def __post_init__(self):
        for name in ("epsilon", "delta0", "delta", "p"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.T < 1 or self.m < 1 or self.d < 1:
            raise ConfigError("T, m and d must be >= 1")


@dataclass(frozen=True)
class PrivacyReport:
    l_star: int
    epsilon_per_batch: float | None
    num_batches: int
    epsilon_total: float | None
    delta_total: float
    epsilon0: float
    target_epsilon: float | None = None
    target_met: bool | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "l_star": self.l_star,
            "epsilon_per_batch": _json_float(self.epsilon_per_batch),
            "num_batches": self.num_batches,
            "epsilon_total": _json_float(self.epsilon_total),
            "delta_total": self.delta_total,
            "epsilon0": self.epsilon0,
            "target_epsilon": self.target_epsilon,
            "target_met": self.target_met,
            **self.extra,
        }


def _json_float(v):
    if v is None or math.isfinite(v):
        return v
    return "inf"


def side_condition_floor(target: PrivacyTarget) -> int:
    """Smallest l with ``l p >= 14 log(8 m T / delta0)``."""
    return math.ceil(14.0 * math.log(8 * target.m * target.T / target.delta0) / target.p)


def _amplification_scale(l, target: PrivacyTarget) -> float:
    t = target
    denom = (32.0 * t.d * (t.d + 3) * math.log(8 * t.m * t.T / t.delta0)
             * math.sqrt(2 * t.T * math.log(2 * t.T / t.delta0)))
    return t.epsilon * l / denom


def batch_condition_gap(l: int, target: PrivacyTarget) -> float:
    """Left minus right side of the batch-length condition (>= 0 means satisfied).

    Uses ``sqrt((2 + c^2)^2 - 4) - c^2 = 4c / (sqrt(c^2 + 4) + c)``, which avoids
    cancellation once ``c`` is large.  The result is nondecreasing in ``l``.
    """
    c = _amplification_scale(l, target)
    lhs = 4.0 * c / (math.sqrt(c * c + 4.0) + c)
    rhs = (1.0 - 2.0 * target.p
           + 2.0 * math.sqrt(2.0 * math.log(2 * target.m * target.T / target.delta0) / l))
    return lhs - rhs


def solve_batch_length(target: PrivacyTarget) -> int:
    """Smallest feasible shuffler batch length.

    Both the side condition and the gap are monotone in ``l``, so the feasible
    set is ``[l*, inf)`` and bracketing plus bisection finds its left end.
    """
    lo = side_condition_floor(target)
    if batch_condition_gap(lo, target) >= 0:
        l_star = lo
    else:
        hi = 2 * lo
        while batch_condition_gap(hi, target) < 0:
            lo, hi = hi, 2 * hi
        # invariant: gap(lo) < 0 <= gap(hi)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if batch_condition_gap(mid, target) >= 0:
                hi = mid
            else:
                lo = mid
        l_star = hi
    if l_star > target.T:
        raise InfeasibleError(f"batch length {l_star} exceeds horizon T={target.T}")
    return l_star


def per_batch_epsilon(l: int, p: float, m: int, d: int, delta0: float) -> float:
    """Central epsilon of one shuffled batch's ``(Z, U)``."""
    if l * p < 14.0 * math.log(8 * m / delta0):
        raise AmplificationError(
            f"l*p = {l * p:.4g} < 14 log(8m/delta0) = {14 * math.log(8 * m / delta0):.4g}")
    lead = 2.0 * d * (d + 3) * math.sqrt(8.0 * m * math.log(8 * m / delta0))
    p_low_2m = p - math.sqrt(2.0 * p * math.log(2 * m / delta0) / l)
    p_low_8m = p - math.sqrt(2.0 * p * math.log(8 * m / delta0) / l)
    return lead * (1.0 - p_low_2m) * math.sqrt(32.0 * math.log(8 * m / delta0) / (l * p_low_8m))


def compose(k: int, epsilon_b: float, delta_b: float, delta_slack: float) -> tuple[float, float]:
    """Advanced composition of ``k`` mechanisms, each ``(epsilon_b, delta_b)``-DP."""
    if k < 1:
        raise ContractError(f"need at least one mechanism, got k={k}")
    if epsilon_b < 0 or not 0 <= delta_b < 1 or not 0 < delta_slack < 1:
        raise ContractError("invalid per-mechanism privacy parameters")
    if epsilon_b > 700:
        eps_total = math.inf
    else:
        eps_total = (math.sqrt(2 * k * math.log(1 / delta_slack)) * epsilon_b
                     + k * epsilon_b * math.expm1(epsilon_b))
    return eps_total, k * delta_b + delta_slack


def privacy_report(target: PrivacyTarget, l_star: int, epsilon0: float) -> PrivacyReport:
    """Account a run of horizon ``target.T`` with batches of ``l_star``.

    Per-batch delta is ``delta0 / M_S`` so that the composed delta is
    ``delta0 + delta``.  Runs with no full batch release nothing and report
    ``(0, 0)``; a batch too short for amplification reports ``None``.
    """
    k = target.T // l_star
    if k == 0:
        return PrivacyReport(l_star, None, 0, 0.0, 0.0, epsilon0, target.epsilon, True)
    try:
        eps_b = per_batch_epsilon(l_star, target.p, target.m, target.d, target.delta0)
    except AmplificationError:
        return PrivacyReport(l_star, None, k, None, target.delta0 + target.delta,
                             epsilon0, target.epsilon, False)
    eps_total, delta_total = compose(k, eps_b, target.delta0 / k, target.delta)
    return PrivacyReport(l_star, eps_b, k, eps_total, delta_total, epsilon0,
                         target.epsilon, bool(eps_total <= target.epsilon))


def batch_length_upper_bound(target: PrivacyTarget) -> float:
    """Closed-form upper bound on the solved batch length (three-way max)."""
    t = target
    return max(
        8.0 * math.log(2 * t.m / t.delta0) / t.p ** 2,
        128.0 * math.sqrt(2 * t.T * math.log(2 / t.delta0)) * t.d * (t.d + 1)
        * math.log(8 * t.m / t.delta0) * (1 - t.p) / t.epsilon,
        14.0 * math.log(2 * t.m / t.delta0) / t.p,
    )
