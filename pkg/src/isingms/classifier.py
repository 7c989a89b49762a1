"""Bond / no-bond decision for a spin pair.

The confidence of a bond is

    eta = (sum_bond P_i - sum_nobond P_i) / sum_all P_i

with ``P_i`` the model evidences.  Internally everything is carried as the
log-odds ``lb - lnb`` of the two evidence sums, so that ``eta = tanh(lo/2)``
and no evidence is ever exponentiated.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.special import expit, logsumexp

from .evidence import MODELS, Moments, PairStats, SaddlePointError, counts_to_moments, log_evidences

_BOND = np.array([m.has_bond for m in MODELS])


@dataclass(frozen=True)
class SparsityPrior:
    """Prior odds ``epsilon = P0(bond) / P0(no bond)``; 1 is the flat prior."""

    epsilon: float = 1.0

    def __post_init__(self):
        if not (self.epsilon >= 0) or np.isnan(self.epsilon):
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")

    @property
    def threshold(self) -> float:
        return threshold(self.epsilon)


def as_epsilon(prior) -> float:
    eps = prior.epsilon if isinstance(prior, SparsityPrior) else float(prior)
    if not eps >= 0:
        raise ValueError(f"epsilon must be non-negative, got {eps}")
    return eps


def threshold(epsilon: float) -> float:
    """Decision threshold (1 - eps) / (1 + eps) on eta."""
    if np.isinf(epsilon):
        return -1.0
    return (1.0 - epsilon) / (1.0 + epsilon)


def physical(stats, tol: float = 1e-12) -> bool:
    """True iff -1 + |m1 + m2| <= c12 <= 1 - |m1 - m2|, up to rounding ``tol``."""
    if isinstance(stats, PairStats):
        return True
    m1, m2, c = (stats.m1, stats.m2, stats.c12) if hasattr(stats, "m1") else stats[:3]
    return bool(-1.0 + abs(m1 + m2) - tol <= c <= 1.0 - abs(m1 - m2) + tol)


def log_odds_batch(m1, m2, c12, n) -> np.ndarray:
    """ln(sum_bond P_i) - ln(sum_nobond P_i) for arrays of statistics."""
    values, converged = log_evidences(m1, m2, c12, n)
    if not np.all(converged):
        bad = np.argwhere(~converged.reshape(-1, 10))
        raise SaddlePointError(MODELS[bad[0, 1]], f" (first failure at batch row {bad[0, 0]})")
    scaled = np.asarray(n, dtype=float)[..., None] * values
    return logsumexp(scaled[..., _BOND], axis=-1) - logsumexp(scaled[..., ~_BOND], axis=-1)


def eta_from_log_odds(log_odds):
    return np.tanh(0.5 * np.asarray(log_odds, dtype=float))


def gap_from_log_odds(log_odds, epsilon: float):
    """P(b|S) - P(nb|S) under prior odds ``epsilon``."""
    lo = np.asarray(log_odds, dtype=float)
    if epsilon == 0:
        return np.full(lo.shape, -1.0)
    if np.isinf(epsilon):
        return np.full(lo.shape, 1.0)
    return np.tanh(0.5 * (lo + np.log(epsilon)))


def bond_probability_from_log_odds(log_odds, epsilon: float):
    """P(b|S) = eps B / (eps B + NB) under prior odds ``epsilon``."""
    lo = np.asarray(log_odds, dtype=float)
    if epsilon == 0:
        return np.zeros(lo.shape)
    if np.isinf(epsilon):
        return np.ones(lo.shape)
    return expit(lo + np.log(epsilon))


def _moments(stats) -> Moments:
    if isinstance(stats, PairStats):
        return stats.moments()
    return Moments(*stats)


def log_odds(stats) -> float:
    m = _moments(stats)
    return float(log_odds_batch(m.m1, m.m2, m.c12, m.n))


def confidence(stats) -> float:
    """eta in [-1, 1] for one pair."""
    m = _moments(stats)
    if not physical(stats if isinstance(stats, PairStats) else m):
        raise ValueError(f"statistics outside the physical tetrahedron: {m}")
    return float(eta_from_log_odds(log_odds(m)))


def posterior_gap(stats, prior=1.0) -> float:
    """P(b|S) - P(nb|S); positive exactly when eta exceeds the threshold."""
    m = _moments(stats)
    if not physical(stats if isinstance(stats, PairStats) else m):
        raise ValueError(f"statistics outside the physical tetrahedron: {m}")
    return float(gap_from_log_odds(log_odds(m), as_epsilon(prior)))


def decide(eta, prior=1.0):
    """Bond iff eta >= (1 - eps)/(1 + eps); ties go to the bond.

    A zero prior forbids bonds outright, even where eta has rounded to 1.
    """
    eps = as_epsilon(prior)
    if eps == 0:
        return np.zeros(np.shape(eta), dtype=bool)
    return np.asarray(eta) >= threshold(eps)


class DecisionCache:
    """Memoised confidences for one sample size, keyed by integer counts.

    Reads are lock-free; insertions are serialised.  Two threads may compute
    the same key concurrently, which is harmless since the value is a pure
    function of the key.
    """

    def __init__(self, sample_size: int):
        if sample_size < 1:
            raise ValueError("sample_size must be positive")
        self.sample_size = int(sample_size)
        self._table: dict[tuple[int, int, int], float] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._table)

    def __contains__(self, counts):
        return tuple(int(c) for c in counts[:3]) in self._table

    def _key(self, counts):
        counts = tuple(int(c) for c in counts)
        if len(counts) == 4:
            if sum(counts) != self.sample_size:
                raise ValueError(f"counts sum to {sum(counts)}, cache is for N={self.sample_size}")
            counts = counts[:3]
        if min(counts) < 0 or sum(counts) > self.sample_size:
            raise ValueError(f"counts {counts} incompatible with N={self.sample_size}")
        return counts

    def log_odds(self, counts) -> float:
        key = self._key(counts)
        hit = self._table.get(key)
        if hit is None:
            n_mm = self.sample_size - sum(key)
            hit = log_odds(PairStats(*key, n_mm))
            with self._lock:
                self._table.setdefault(key, hit)
        return hit

    def confidence(self, counts) -> float:
        return float(eta_from_log_odds(self.log_odds(counts)))

    def log_odds_batch(self, n_pp, n_pm, n_mp) -> np.ndarray:
        """Vectorised lookup; misses are computed together and inserted."""
        n_pp, n_pm, n_mp = (np.asarray(a, dtype=np.int64) for a in (n_pp, n_pm, n_mp))
        n_mm = self.sample_size - n_pp - n_pm - n_mp
        if np.any(n_mm < 0) or np.any(np.minimum(np.minimum(n_pp, n_pm), n_mp) < 0):
            raise ValueError(f"counts incompatible with N={self.sample_size}")
        keys = np.stack([n_pp.ravel(), n_pm.ravel(), n_mp.ravel()], axis=-1)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        out = np.empty(len(uniq))
        missing = []
        for row, key in enumerate(map(tuple, uniq.tolist())):
            hit = self._table.get(key)
            if hit is None:
                missing.append(row)
            else:
                out[row] = hit
        if missing:
            miss = uniq[missing]
            m1, m2, c, n = counts_to_moments(
                miss[:, 0], miss[:, 1], miss[:, 2], self.sample_size - miss.sum(axis=1)
            )
            out[missing] = log_odds_batch(m1, m2, c, n)
            with self._lock:
                for key, value in zip(map(tuple, miss.tolist()), out[missing]):
                    self._table.setdefault(key, float(value))
        return out[inverse].reshape(n_pp.shape)

    def precompute(self):
        """Fill the cache with every achievable count triple."""
        table = decision_table(self.sample_size)
        with self._lock:
            for row in zip(table["n_pp"].tolist(), table["n_pm"].tolist(), table["n_mp"].tolist(), table["log_odds"].tolist()):
                self._table.setdefault(row[:3], row[3])
        return self


def all_count_quadruples(n: int) -> np.ndarray:
    """Every (n_pp, n_pm, n_mp, n_mm) with non-negative entries summing to n."""
    rows = []
    for a in range(n + 1):
        for b in range(n + 1 - a):
            c = np.arange(n + 1 - a - b)
            rows.append(np.stack([np.full_like(c, a), np.full_like(c, b), c, n - a - b - c], axis=-1))
    out = np.concatenate(rows)
    assert len(out) == comb(n + 3, 3)
    return out


def decision_table(n: int) -> dict[str, np.ndarray]:
    """Confidence for every achievable statistic at sample size ``n``."""
    q = all_count_quadruples(n)
    m1, m2, c, nn = counts_to_moments(q[:, 0], q[:, 1], q[:, 2], q[:, 3])
    lo = log_odds_batch(m1, m2, c, nn)
    return {
        "n_pp": q[:, 0],
        "n_pm": q[:, 1],
        "n_mp": q[:, 2],
        "n_mm": q[:, 3],
        "m1": m1,
        "m2": m2,
        "c12": c,
        "eta": eta_from_log_odds(lo),
        "log_odds": lo,
    }
