"""Batched optimistic linear bandit server fed by shuffled, debiased statistics.

The server keeps a committed model (what users see) and candidate statistics
accumulating since the last commit.  Every shuffler batch is debiased into the
candidates; a commit happens when the candidate design matrix has grown in
determinant by ``1 + eta`` (or on every batch for the fixed-schedule variant).

Regularization is carried as ``2 * lambda_t * I`` on the design matrix, with
``lambda_t`` re-evaluated at the end round of the most recent shuffler batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError, ContractError, NumericError
from .ldp import debias_sum_b, debias_sum_w
from .shuffler import AggregateStats

# slack on the log-det comparison, in favour of committing
LOGDET_SLACK = 1e-12


def lambda_schedule(t: int, delta: float, p: float, m: int, lambda_base: float) -> float:
    """Time-varying regularizer: ``s/m + 2 s / ((1-p) sqrt(m)) + lambda_base``, ``s = sqrt(8 t ln(2t/delta))``."""
    if t < 1:
        raise ContractError(f"t must be >= 1, got {t}")
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"p must lie in [0, 1), got {p}")
    s = math.sqrt(8.0 * t * math.log(2.0 * t / delta))
    return s / m + 2.0 * s / ((1.0 - p) * math.sqrt(m)) + lambda_base


@dataclass(frozen=True)
class BanditConfig:
    d: int
    p: float
    m: int = 1
    eta: float = 0.5
    lam: float = 1.0
    delta: float = 0.1
    sigma: float = 0.1
    S: float = 1.0
    L: float = 1.0
    T: int | None = None

    def __post_init__(self):
        if not self.eta >= 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 <= self.p < 1:
            raise ConfigError(f"p must lie in [0, 1), got {self.p}")
        if self.sigma < 0 or self.S <= 0 or self.L <= 0:
            raise ConfigError("sigma must be >= 0 and S, L positive")


def beta_width(t: int, lambda_t: float, cfg: BanditConfig) -> float:
    """Radius of the private confidence ellipsoid at round ``t``."""
    if t < 1 or not lambda_t > 0:
        raise ContractError("beta_width needs t >= 1 and lambda_t > 0")
    d, p, m, L = cfg.d, cfg.p, cfg.m, cfg.L
    log_t = math.log(2.0 * t / cfg.delta)
    base = cfg.sigma * math.sqrt(8.0 * log_t + d * math.log(3.0 + t * L * L / lambda_t))
    reg = cfg.S * math.sqrt(3.0 * lambda_t)
    noise = (2.0 * math.sqrt(p * (1.0 - p / 2.0) * t * m * log_t)
             + 8.0 * log_t / 3.0
             + math.sqrt(8.0) / m * math.sqrt(t * log_t))
    return base + reg + d / math.sqrt(lambda_t) * noise


def commit_count_bound(T: int, d: int, L: float, p: float, delta: float, eta: float) -> float:
    """Logarithmic upper bound on the number of bandit batches over ``T`` rounds."""
    inner = L * L * T / d + 16.0 * math.sqrt(T) * math.log(2.0 * T / delta) / (1.0 - p)
    return 1.0 + d * math.log(inner) / math.log1p(eta)


def _cholesky(V: np.ndarray) -> np.ndarray:
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ContractError(f"design matrix must be square, got {V.shape}")
    if not np.allclose(V, V.T, rtol=1e-12, atol=1e-12):
        raise ContractError("design matrix must be symmetric")
    try:
        return linalg.cholesky(V, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericError("design matrix is not positive definite") from exc


def ridge_solve(V: np.ndarray, B: np.ndarray, L: float) -> np.ndarray:
    """``(1/L) V^{-1} B`` through a Cholesky solve."""
    chol = _cholesky(np.asarray(V, dtype=float))
    return linalg.cho_solve((chol, True), np.asarray(B, dtype=float)) / L


@dataclass(frozen=True, eq=False)
class ModelEstimate:
    """Broadcast model ``(theta, V, beta)``; equality compares values."""

    theta: np.ndarray
    V: np.ndarray
    beta: float
    batch_index: int
    _inv_chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        chol = _cholesky(self.V)
        inv = linalg.solve_triangular(chol, np.eye(len(self.theta)), lower=True)
        object.__setattr__(self, "_inv_chol", inv)

    def __eq__(self, other):
        if not isinstance(other, ModelEstimate):
            return NotImplemented
        return (self.batch_index == other.batch_index and self.beta == other.beta
                and np.array_equal(self.theta, other.theta) and np.array_equal(self.V, other.V))

    def inverse_norms(self, contexts: np.ndarray) -> np.ndarray:
        """``||x_a||_{V^{-1}}`` for every row of ``contexts``."""
        return np.sqrt(np.sum((contexts @ self._inv_chol.T) ** 2, axis=1))


def select_action(estimate: ModelEstimate, contexts: np.ndarray) -> int:
    """Optimistic index ``<x, theta> + beta ||x||_{V^{-1}}``; ties go to the lowest index."""
    X = np.asarray(contexts, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ContractError("need a non-empty (K, d) context array")
    scores = X @ estimate.theta + estimate.beta * estimate.inverse_norms(X)
    return int(np.argmax(scores))


class BanditState:
    """Server state for the determinant-triggered (or fixed-schedule) private LinUCB."""

    def __init__(self, cfg: BanditConfig):
        self.cfg = cfg
        d = cfg.d
        self.lambda_j = cfg.lam
        self.V_committed = 2.0 * cfg.lam * np.eye(d)
        self.B_committed = np.zeros(d)
        # data parts only; the candidate design matrix adds 2 * lambda_t * I
        self.V_data = np.zeros((d, d))
        self.B_candidate = np.zeros(d)
        self.batch_index = 0
        self.t_commit = 0
        self._logdet_committed = float(np.linalg.slogdet(self.V_committed)[1])
        self.estimate = ModelEstimate(theta=np.zeros(d), V=self.V_committed.copy(),
                                      beta=beta_width(1, cfg.lam, cfg), batch_index=0)
        self.batch_log: list[dict] = []

    @property
    def theta(self) -> np.ndarray:
        return self.estimate.theta

    @property
    def beta(self) -> float:
        return self.estimate.beta

    def candidate_matrix(self, t: int) -> np.ndarray:
        lam_t = lambda_schedule(t, self.cfg.delta, self.cfg.p, self.cfg.m, self.cfg.lam)
        return self.V_data + 2.0 * lam_t * np.eye(self.cfg.d)

    def ingest(self, stats: AggregateStats, fixed_schedule: bool = False) -> bool:
        """Debias one shuffler batch into the candidates; return whether a commit fired."""
        if stats.Z.shape != (self.cfg.d,):
            raise ContractError("stats dimension does not match the bandit configuration")
        b_inc = debias_sum_b(stats.Z, stats.l, self.cfg.m, self.cfg.p)
        v_inc = debias_sum_w(stats.U, stats.l, self.cfg.m, self.cfg.p)
        return self.accumulate(b_inc, v_inc, stats.end_time, force=fixed_schedule)

    def ingest_fixed_schedule(self, stats: AggregateStats) -> bool:
        return self.ingest(stats, fixed_schedule=True)

    def accumulate(self, b_inc: np.ndarray, v_inc: np.ndarray, t: int, force: bool = False) -> bool:
        """Add already-debiased sums observed up to round ``t`` and test for a commit."""
        cfg = self.cfg
        self.B_candidate = self.B_candidate + b_inc
        self.V_data = self.V_data + v_inc
        lam_t = lambda_schedule(t, cfg.delta, cfg.p, cfg.m, cfg.lam)
        V_cand = self.V_data + 2.0 * lam_t * np.eye(cfg.d)
        sign, logdet = np.linalg.slogdet(V_cand)
        log_ratio = logdet - self._logdet_committed if sign > 0 else -math.inf
        if not force and log_ratio < math.log1p(cfg.eta) - LOGDET_SLACK:
            return False

        theta = ridge_solve(V_cand, self.B_candidate, cfg.L)
        beta = beta_width(t, lam_t, cfg)
        self.batch_index += 1
        self.V_committed = V_cand
        self.B_committed = self.B_candidate.copy()
        self.lambda_j = lam_t
        self.t_commit = t
        self._logdet_committed = float(logdet)
        self.estimate = ModelEstimate(theta=theta, V=V_cand.copy(), beta=beta,
                                      batch_index=self.batch_index)
        self.batch_log.append({
            "j": self.batch_index,
            "t": int(t),
            "log_det_ratio": float(log_ratio),
            "beta": float(beta),
            "lambda_j": float(lam_t),
            "theta": [float(v) for v in theta],
        })
        return True


class LinUCBBaseline:
    """Non-private rarely-switching LinUCB on exact statistics.

    ``V = lam I + sum x x^T`` and ``b = sum r x`` are updated every round; the
    broadcast model is refreshed when ``det V`` has grown by ``1 + eta``.
    """

    def __init__(self, d: int, lam: float = 1.0, eta: float = 0.5, delta: float = 0.1,
                 sigma: float = 0.1, S: float = 1.0, L: float = 1.0):
        self.d, self.lam, self.eta, self.delta = d, lam, eta, delta
        self.sigma, self.S, self.L = sigma, S, L
        self.V = lam * np.eye(d)
        self.b = np.zeros(d)
        self.t = 0
        self.batch_index = 0
        self._logdet_committed = d * math.log(lam)
        self.estimate = ModelEstimate(theta=np.zeros(d), V=self.V.copy(),
                                      beta=self.width(1), batch_index=0)
        self.batch_log: list[dict] = []

    def width(self, t: int) -> float:
        return (self.sigma * math.sqrt(self.d * math.log((1 + t * self.L ** 2 / self.lam) / self.delta))
                + math.sqrt(self.lam) * self.S)

    def select(self, contexts: np.ndarray) -> int:
        return select_action(self.estimate, contexts)

    def update(self, x: np.ndarray, r: float) -> bool:
        self.t += 1
        self.V = self.V + np.outer(x, x)
        self.b = self.b + r * x
        logdet = np.linalg.slogdet(self.V)[1]
        log_ratio = logdet - self._logdet_committed
        if log_ratio < math.log1p(self.eta) - LOGDET_SLACK:
            return False
        theta = linalg.cho_solve((_cholesky(self.V), True), self.b)
        self.batch_index += 1
        self._logdet_committed = float(logdet)
        self.estimate = ModelEstimate(theta=theta, V=self.V.copy(), beta=self.width(self.t),
                                      batch_index=self.batch_index)
        self.batch_log.append({"j": self.batch_index, "t": self.t,
                               "log_det_ratio": float(log_ratio),
                               "beta": float(self.estimate.beta),
                               "theta": [float(v) for v in theta]})
        return True
