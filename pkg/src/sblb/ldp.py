"""Local randomizer: unary bit encoding of (r*x, x x^T) plus bitwise randomized response.

A user holding a context ``x`` (``||x||_2 <= L``) and reward ``r`` in ``[0, 1]``
maps ``r*x/(2L) + 1/2`` and ``x x^T/(2L^2) + 1/2`` into ``[0, 1]``, writes every
coordinate as ``m`` bits whose expected sum is ``m`` times the coordinate, and
passes each bit through a randomized response that replaces it by a fair coin
with probability ``p``.  Only the lower triangle of the matrix part is
randomized; the upper triangle is a mirror copy.

The server undoes both the ``+1/2`` shift and the ``p/2`` coin bias on batch
sums with :func:`debias_sum_b` and :func:`debias_sum_w`.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError, ContractError, DomainError

# relative slack on ||x|| <= L, absorbs rounding in upstream context generation
_NORM_SLACK = 1e-9
MAX_AUDIT_BITS = 20


def compute_flip_probability(epsilon0: float, m: int, d: int) -> float:
    """Coin-replacement probability ``p = 2 / (exp(2 eps0 / (m d (d+3))) + 1)``."""
    if not epsilon0 > 0:
        raise ConfigError(f"epsilon0 must be positive, got {epsilon0}")
    if m < 1 or d < 1:
        raise ConfigError(f"m and d must be >= 1, got m={m}, d={d}")
    # 2 / (e^a + 1) == 2 * expit(-a), stable for large a
    return float(2.0 * expit(-2.0 * epsilon0 / (m * d * (d + 3))))


@dataclass(frozen=True)
class LdpConfig:
    epsilon0: float
    m: int
    d: int
    L: float = 1.0

    def __post_init__(self):
        if not self.epsilon0 > 0:
            raise ConfigError(f"epsilon0 must be positive, got {self.epsilon0}")
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"m must be a positive integer, got {self.m}")
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError(f"d must be a positive integer, got {self.d}")
        if not self.L > 0:
            raise ConfigError(f"L must be positive, got {self.L}")

    @property
    def p(self) -> float:
        return compute_flip_probability(self.epsilon0, self.m, self.d)

    @property
    def n_bits(self) -> int:
        """Independently randomized bits per report: ``d m + m d (d+1) / 2``."""
        return self.d * self.m + self.m * self.d * (self.d + 1) // 2


@dataclass(frozen=True)
class BitPayload:
    """One privatized report: ``b`` has shape (d, m), ``w`` has shape (d, d, m)."""

    b: np.ndarray
    w: np.ndarray

    @property
    def d(self) -> int:
        return self.b.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]


@dataclass(frozen=True)
class EncodedPayload(BitPayload):
    """Encoder output before randomization, with the intermediates kept for tests."""

    y: np.ndarray = field(default=None)
    z: np.ndarray = field(default=None)
    mu: np.ndarray = field(default=None)
    p_frac: np.ndarray = field(default=None)
    kappa: np.ndarray = field(default=None)
    q_frac: np.ndarray = field(default=None)

    def bits(self) -> BitPayload:
        return BitPayload(self.b, self.w)


def _check_inputs(x, r, cfg: LdpConfig) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (cfg.d,):
        raise ContractError(f"context must have shape ({cfg.d},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("context has non-finite entries")
    if np.linalg.norm(x) > cfg.L * (1 + _NORM_SLACK):
        raise DomainError(f"||x|| = {np.linalg.norm(x)} exceeds L = {cfg.L}")
    if not 0.0 <= r <= 1.0:
        raise DomainError(f"reward {r} outside [0, 1]")
    return x


@functools.lru_cache(maxsize=None)
def _tril(d: int):
    rows, cols = np.tril_indices(d)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def _scaled(x, r, L):
    y = np.clip(r * x / (2 * L) + 0.5, 0.0, 1.0)
    z = np.clip(np.outer(x, x) / (2 * L * L) + 0.5, 0.0, 1.0)
    return y, z


def _unary_levels(values: np.ndarray, m: int):
    """Ceil level and fractional weight of ``m * values`` (values in [0, 1])."""
    scaled = values * m
    level = np.ceil(scaled).astype(np.int64)
    frac = scaled - level + 1.0
    return level, frac


def _unary_bits(level: np.ndarray, frac: np.ndarray, m: int, u: np.ndarray) -> np.ndarray:
    # positions are 1-based: 1 below the level, Ber(frac) at the level, 0 above
    k = np.arange(1, m + 1)
    lev = level[..., None]
    stochastic = (k == lev) & (u[..., None] < frac[..., None])
    return ((k < lev) | stochastic).astype(np.uint8)


def encode(x, r: float, cfg: LdpConfig, rng: np.random.Generator) -> EncodedPayload:
    """Unary-encode ``r x / (2L) + 1/2`` and ``x x^T / (2L^2) + 1/2`` into m bits each."""
    x = _check_inputs(x, r, cfg)
    d, m = cfg.d, cfg.m
    y, z = _scaled(x, r, cfg.L)

    mu, p_frac = _unary_levels(y, m)
    b = _unary_bits(mu, p_frac, m, rng.random(d))

    rows, cols = _tril(d)
    kappa_low, q_low = _unary_levels(z[rows, cols], m)
    w_low = _unary_bits(kappa_low, q_low, m, rng.random(rows.size))

    w = np.empty((d, d, m), dtype=np.uint8)
    w[rows, cols] = w_low
    w[cols, rows] = w_low
    kappa = np.empty((d, d), dtype=np.int64)
    kappa[rows, cols] = kappa_low
    kappa[cols, rows] = kappa_low
    q_frac = np.empty((d, d))
    q_frac[rows, cols] = q_low
    q_frac[cols, rows] = q_low
    return EncodedPayload(b=b, w=w, y=y, z=z, mu=mu, p_frac=p_frac, kappa=kappa, q_frac=q_frac)


def randomize_bit(bit: int, p: float, rng: np.random.Generator) -> int:
    """Keep ``bit`` with probability ``1-p``, otherwise return a fair coin."""
    if rng.random() < p:
        return int(rng.random() < 0.5)
    return int(bit)


def randomize_bits(bits: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`randomize_bit`, independent across entries."""
    replace = rng.random(bits.shape) < p
    coin = rng.random(bits.shape) < 0.5
    return np.where(replace, coin, bits.astype(bool)).astype(np.uint8)


def privatize(x, r: float, cfg: LdpConfig, rng: np.random.Generator,
              p: float | None = None) -> BitPayload:
    """Encode then randomize; the matrix part is randomized on i >= j and mirrored.

    ``p`` defaults to ``cfg.p``; passing it explicitly (e.g. ``p=0``) is meant for
    tests and for callers that already hold the value.
    """
    if p is None:
        p = cfg.p
    x = _check_inputs(x, r, cfg)
    d, m = cfg.d, cfg.m
    y, z = _scaled(x, r, cfg.L)
    rows, cols = _tril(d)
    # same draw order as encode, so p=0 reproduces encode bit for bit
    b = _unary_bits(*_unary_levels(y, m), m, rng.random(d))
    w_low = _unary_bits(*_unary_levels(z[rows, cols], m), m, rng.random(rows.size))
    b = randomize_bits(b, p, rng)
    w_low = randomize_bits(w_low, p, rng)
    w = np.empty((d, d, m), dtype=np.uint8)
    w[rows, cols] = w_low
    w[cols, rows] = w_low
    return BitPayload(b=b, w=w)


def _check_p(p: float):
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"debiasing needs 0 <= p < 1, got {p}")


def debias_sum_b(Z, l: int, m: int, p: float) -> np.ndarray:
    """``Z / (m(1-p)) - l / (2(1-p))``; unbiased for ``sum_t r_t x_t / (2L)``."""
    _check_p(p)
    Z = np.asarray(Z)
    if np.any(Z < 0) or np.any(Z > l * m):
        raise ContractError("Z entries must lie in [0, l*m]")
    return Z / (m * (1.0 - p)) - l / (2.0 * (1.0 - p))


def debias_sum_w(U, l: int, m: int, p: float) -> np.ndarray:
    """``U / (m(1-p)) - l / (2(1-p))``; unbiased for ``sum_t x_t x_t^T / (2L^2)``."""
    _check_p(p)
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1] or not np.array_equal(U, U.T):
        raise ContractError("U must be a symmetric square matrix")
    if np.any(U < 0) or np.any(U > l * m):
        raise ContractError("U entries must lie in [0, l*m]")
    return U / (m * (1.0 - p)) - l / (2.0 * (1.0 - p))


def output_bit_probabilities(x, r: float, cfg: LdpConfig, p: float | None = None) -> np.ndarray:
    """Exact P(output bit = 1) for every independently randomized bit.

    Order: the d*m bits of ``b`` followed by the m bits of each lower-triangle
    entry of ``w`` (row-major over i >= j).
    """
    if p is None:
        p = cfg.p
    x = _check_inputs(x, r, cfg)
    d, m = cfg.d, cfg.m
    k = np.arange(1, m + 1)

    def one_prob(values):
        level, frac = _unary_levels(values, m)
        lev = level[..., None]
        return np.where(k < lev, 1.0, np.where(k == lev, frac[..., None], 0.0))

    y, z = _scaled(x, r, cfg.L)
    rows, cols = _tril(d)
    enc = np.concatenate([one_prob(y).ravel(), one_prob(z[rows, cols]).ravel()])
    return (1.0 - p) * enc + p / 2.0


def _pattern_log_probs(q: np.ndarray) -> np.ndarray:
    """Log-probability of every output pattern, enumerated by doubling."""
    logp = np.zeros(1)
    for qi in q:
        logp = np.concatenate([logp + math.log1p(-qi), logp + math.log(qi)])
    return logp


def ldp_ratio_audit(cfg: LdpConfig, pairs: Iterable[Sequence], p: float | None = None) -> float:
    """Exhaustive max |log P(o | u) - log P(o | u')| over all output patterns o.

    ``pairs`` yields ``((x, r), (x2, r2))``.  Exact enumeration only: refuses
    configurations with more than 20 randomized bits.
    """
    if cfg.n_bits > MAX_AUDIT_BITS:
        raise ContractError(f"{cfg.n_bits} bits is too many for exhaustive audit "
                            f"(max {MAX_AUDIT_BITS})")
    if p is None:
        p = cfg.p
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"audit needs 0 < p <= 1, got {p}")
    worst = 0.0
    for (x1, r1), (x2, r2) in pairs:
        l1 = _pattern_log_probs(output_bit_probabilities(x1, r1, cfg, p))
        l2 = _pattern_log_probs(output_bit_probabilities(x2, r2, cfg, p))
        worst = max(worst, float(np.max(np.abs(l1 - l2))))
    return worst


def audit_input_grid(cfg: LdpConfig, n_pairs: int = 10, seed: int = 0) -> list:
    """A fixed grid of input pairs mixing domain extremes with random interior points."""
    d, L = cfg.d, cfg.L
    e1 = np.zeros(d)
    e1[0] = L
    rng = np.random.default_rng(seed)
    points = [(e1, 1.0), (-e1, 1.0), (np.zeros(d), 0.0), (e1, 0.0),
              (np.full(d, L / math.sqrt(d)), 1.0), (-np.full(d, L / math.sqrt(d)), 0.5)]
    while len(points) < 8:
        v = rng.normal(size=d)
        points.append((v / np.linalg.norm(v) * L * rng.uniform(), float(rng.uniform())))
    pairs = list(itertools.combinations(points, 2))
    # extremes first so even short grids contain the worst case
    return pairs[:n_pairs]
