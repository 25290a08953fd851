"""Synthetic linear contextual bandit with bounded contexts and rewards in [0, 1].

Every arm keeps a fixed mean reward in ``[margin, 1 - margin]`` (evenly spaced
across arms) and a fixed component orthogonal to ``theta*``.  Each round the
orthogonal components of all arms are turned by one common Haar-random
rotation of the complement of ``theta*`` and the arm order is shuffled.  The
set of mean rewards therefore stays put while the contexts keep exciting
every direction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class EnvConfig:
    d: int = 5
    K: int = 10
    T: int = 1000
    L: float = 1.0
    S: float = 1.0
    sigma: float = 0.1
    margin: float = 0.45
    theta_star: tuple | None = None
    theta_seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.K < 1 or self.T < 0:
            raise ConfigError("need d >= 1, K >= 1 and T >= 0")
        if not (self.L > 0 and self.S > 0 and self.sigma >= 0):
            raise ConfigError("L and S must be positive, sigma non-negative")
        if not 0 < self.margin < 0.5:
            raise ConfigError(f"margin must lie in (0, 1/2), got {self.margin}")
        if self.margin < 4 * self.sigma:
            # keeps the resampling truncation bias negligible
            raise ConfigError(f"margin {self.margin} < 4 sigma = {4 * self.sigma}")
        if self.theta_star is not None and len(self.theta_star) != self.d:
            raise ConfigError("theta_star has the wrong dimension")

    def resolve_theta(self) -> np.ndarray:
        if self.theta_star is not None:
            theta = np.asarray(self.theta_star, dtype=float)
        else:
            v = np.random.default_rng(self.theta_seed).normal(size=self.d)
            theta = self.S * v / np.linalg.norm(v)
        if np.linalg.norm(theta) > self.S * (1 + 1e-12):
            raise ConfigError("||theta_star|| exceeds S")
        return theta


@dataclass(frozen=True)
class Round:
    contexts: np.ndarray
    chosen: int
    reward: float
    instant_regret: float


# rotations are drawn this many at a time; part of the stream definition
ROTATION_BLOCK = 256


def _haar_orthogonal(n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-distributed orthogonal matrices, shape (n, n) or (size, n, n)."""
    shape = (n, n) if size is None else (size, n, n)
    q, r = np.linalg.qr(rng.normal(size=shape))
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    return q * signs[..., None, :]


class LinearEnv:
    """Context and reward generator for one configuration."""

    def __init__(self, cfg: EnvConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.theta_star = cfg.resolve_theta()
        s = float(np.linalg.norm(self.theta_star))
        # the best achievable mean is s * L; all arm means must fit in [margin, 1 - margin]
        hi = min(1.0 - cfg.margin, s * cfg.L)
        if s == 0 or hi < cfg.margin:
            raise ConfigError(f"margin {cfg.margin} infeasible with ||theta*||={s}, L={cfg.L}")
        self.means = np.linspace(hi, cfg.margin, cfg.K) if cfg.K > 1 else np.array([hi])
        u = self.theta_star / s
        self._u = u
        self._along = self.means / s
        # orthonormal basis of the complement of u
        basis = np.linalg.svd(u[None, :])[2][1:]
        self._basis = basis.T
        room = np.sqrt(np.maximum(cfg.L ** 2 - self._along ** 2, 0.0))
        layout = np.random.default_rng(cfg.theta_seed + 1)
        if cfg.d > 1:
            dirs = layout.normal(size=(cfg.K, cfg.d - 1))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            radius = room * layout.uniform(0.5, 1.0, size=cfg.K)
            self._orth = dirs * radius[:, None]
        else:
            self._orth = np.zeros((cfg.K, 0))
        self._rotations = np.empty((0, max(cfg.d - 1, 0), max(cfg.d - 1, 0)))
        self._next_rotation = 0

    def _rotation(self) -> np.ndarray:
        if self._next_rotation == len(self._rotations):
            self._rotations = _haar_orthogonal(self.cfg.d - 1, self.rng, ROTATION_BLOCK)
            self._next_rotation = 0
        Q = self._rotations[self._next_rotation]
        self._next_rotation += 1
        return Q

    def generate_contexts(self, t: int | None = None) -> np.ndarray:
        """One round of K contexts, shape (K, d); ``t`` is informational only."""
        cfg = self.cfg
        X = np.outer(self._along, self._u)
        if cfg.d > 1:
            Q = self._rotation()
            X = X + self._orth @ Q.T @ self._basis.T
        X = X[self.rng.permutation(cfg.K)]
        norms = np.linalg.norm(X, axis=1)
        over = norms > cfg.L
        if np.any(over):
            X[over] *= (cfg.L / norms[over])[:, None]
        return X

    def mean_reward(self, x: np.ndarray) -> float:
        return float(np.dot(self.theta_star, x))

    def realize_reward(self, x: np.ndarray) -> float:
        """Mean plus Gaussian noise, redrawn until the reward lands in [0, 1]."""
        mean = self.mean_reward(x)
        tol = 1e-9
        if not self.cfg.margin - tol <= mean <= 1 - self.cfg.margin + tol:
            raise ContractError(f"mean reward {mean} outside [margin, 1 - margin]")
        if self.cfg.sigma == 0:
            return mean
        while True:
            r = mean + self.cfg.sigma * self.rng.standard_normal()
            if 0.0 <= r <= 1.0:
                return r

    def instant_regret(self, contexts: np.ndarray, chosen: int) -> float:
        means = contexts @ self.theta_star
        return float(max(means.max() - means[chosen], 0.0))


def cumulative_regret(rounds) -> np.ndarray:
    """Prefix sums of instantaneous regret; accepts Rounds or raw numbers."""
    inst = [r.instant_regret if isinstance(r, Round) else float(r) for r in rounds]
    return np.cumsum(np.asarray(inst, dtype=float))


def write_round_csv(path, chosen, rewards, instant_regret) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "chosen", "reward", "instant_regret"])
        for t, (a, r, g) in enumerate(zip(chosen, rewards, instant_regret), start=1):
            writer.writerow([t, int(a), repr(float(r)), repr(float(g))])
