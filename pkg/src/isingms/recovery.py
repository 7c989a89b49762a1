"""Network recovery by independent pairwise model selection."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .classifier import (
    DecisionCache,
    as_epsilon,
    bond_probability_from_log_odds,
    decide,
    eta_from_log_odds,
    gap_from_log_odds,
    log_odds_batch,
)
from .evidence import PairStats, counts_to_moments

log = logging.getLogger(__name__)

MIN_SUBSAMPLE = 10
CORRECTIONS = ("avg", "min", "prod")


def as_spins(data) -> np.ndarray:
    """Validate an N x n matrix of +-1 and return it as int8."""
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise ValueError(f"sample matrix must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 2:
        raise ValueError("need at least one sample and two nodes")
    if not np.all((arr == 1) | (arr == -1)):
        raise ValueError("sample matrix entries must be +1 or -1")
    return arr.astype(np.int8, copy=False)


def pair_count_matrices(data) -> tuple[np.ndarray, ...]:
    """n x n matrices of joint-state counts (n_pp, n_pm, n_mp, n_mm)."""
    x = as_spins(data).astype(np.int64)
    n = x.shape[0]
    s = x.sum(axis=0)
    c = x.T @ x
    si, sj = s[:, None], s[None, :]
    n_pp = (n + si + sj + c) // 4
    n_pm = (n + si - sj - c) // 4
    n_mp = (n - si + sj - c) // 4
    n_mm = (n - si - sj + c) // 4
    return n_pp, n_pm, n_mp, n_mm


def pair_stats(data, i: int, j: int) -> PairStats:
    x = as_spins(data)
    if i == j:
        raise ValueError("a pair needs two distinct nodes")
    a, b = x[:, i], x[:, j]
    return PairStats(
        int(np.sum((a == 1) & (b == 1))),
        int(np.sum((a == 1) & (b == -1))),
        int(np.sum((a == -1) & (b == 1))),
        int(np.sum((a == -1) & (b == -1))),
    )


@dataclass
class ConfidenceGraph:
    """Pairwise confidences and the graph they induce at ``epsilon_used``.

    ``log_odds`` holds ln(sum bond evidences / sum no-bond evidences), from
    which ``eta = tanh(log_odds / 2)``.  After a conditioning correction
    ``corrected_gap`` holds the combined conditioned gap of every edge that
    had common neighbours (NaN elsewhere) and ``adjacency`` is the corrected
    graph.
    """

    log_odds: np.ndarray
    epsilon_used: float
    adjacency: np.ndarray = None
    corrected_gap: np.ndarray | None = None
    correction: str = "none"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.adjacency is None:
            self.adjacency = _threshold(self.eta, self.epsilon_used)

    @property
    def n_nodes(self) -> int:
        return self.log_odds.shape[0]

    @property
    def eta(self) -> np.ndarray:
        return eta_from_log_odds(self.log_odds)

    def with_epsilon(self, epsilon: float) -> "ConfidenceGraph":
        """Same confidences, re-thresholded; corrections are dropped."""
        return ConfidenceGraph(self.log_odds, float(epsilon))

    def gap(self, epsilon: float | None = None) -> np.ndarray:
        eps = self.epsilon_used if epsilon is None else epsilon
        out = gap_from_log_odds(self.log_odds, eps)
        np.fill_diagonal(out, np.nan)
        return out

    @property
    def n_bonds(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())

    @property
    def n_pairs(self) -> int:
        n = self.n_nodes
        return n * (n - 1) // 2

    def bond_ratio(self) -> float:
        """n_b / n_nb; infinite for a complete graph."""
        nb = self.n_bonds
        nnb = self.n_pairs - nb
        return float("inf") if nnb == 0 else nb / nnb

    def density(self) -> float:
        return self.n_bonds / self.n_pairs

    def edges(self) -> set[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return set(zip(i.tolist(), j.tolist()))


def _threshold(eta, epsilon):
    adj = decide(eta, epsilon)
    np.fill_diagonal(adj, False)
    return adj


def _pair_log_odds(counts, n, cache, rows, cols):
    n_pp, n_pm, n_mp, _ = (c[rows, cols] for c in counts)
    if cache is not None:
        return cache.log_odds_batch(n_pp, n_pm, n_mp)
    n_mm = n - n_pp - n_pm - n_mp
    return log_odds_batch(*counts_to_moments(n_pp, n_pm, n_mp, n_mm))


def log_odds_matrix(data, cache: DecisionCache | None = None, jobs: int = 1, chunk: int = 4096) -> np.ndarray:
    """Symmetric matrix of pair log-odds (diagonal 0, ignored).

    Pairs are independent; with ``jobs > 1`` chunks of pairs are evaluated
    on a thread pool.  Every pair's value is independent of the chunking.
    """
    x = as_spins(data)
    n_samples, n = x.shape
    if cache is not None and cache.sample_size != n_samples:
        raise ValueError(f"cache is for N={cache.sample_size}, data has N={n_samples}")
    counts = pair_count_matrices(x)
    rows, cols = np.triu_indices(n, 1)
    out = np.zeros((n, n))
    bounds = list(range(0, len(rows), chunk)) + [len(rows)]
    pieces = list(zip(bounds[:-1], bounds[1:]))

    def work(piece):
        a, b = piece
        return _pair_log_odds(counts, n_samples, cache, rows[a:b], cols[a:b])

    if jobs > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(work, pieces))
    else:
        values = [work(p) for p in pieces]
    flat = np.concatenate(values) if values else np.empty(0)
    out[rows, cols] = flat
    out[cols, rows] = flat
    return out


def recover(data, prior=1.0, cache: DecisionCache | None = None, jobs: int = 1) -> ConfidenceGraph:
    """Classify every pair independently under sparsity prior ``prior``."""
    eps = as_epsilon(prior)
    x = as_spins(data)
    if cache is None:
        cache = DecisionCache(x.shape[0])
    return ConfidenceGraph(log_odds_matrix(x, cache, jobs), eps)


@dataclass
class SelfConsistentResult:
    epsilon: float
    graph: ConfidenceGraph
    trace: list[float]
    converged: bool


def self_consistent_epsilon(
    data_or_graph, eps0: float = 1.0, max_iter: int = 100, tol: float | None = None
) -> SelfConsistentResult:
    """Iterate eps <- n_b/n_nb of the graph recovered at eps.

    The confidences are computed once; each step only moves the threshold.
    A 2-cycle is resolved toward the sparser of its two iterates.
    """
    if isinstance(data_or_graph, ConfidenceGraph):
        base = data_or_graph
    else:
        base = recover(data_or_graph, eps0)
    n = base.n_nodes
    if tol is None:
        tol = 1.0 / (n * (n - 1))
    eps = as_epsilon(eps0)
    trace = [eps]
    graph = base.with_epsilon(eps)
    if eps == 0:
        return SelfConsistentResult(0.0, graph, trace, True)
    for _ in range(max_iter):
        r = graph.bond_ratio()
        trace.append(r)
        if abs(r - eps) < tol or (np.isinf(r) and np.isinf(eps)):
            return SelfConsistentResult(eps, graph, trace, True)
        if len(trace) >= 3 and abs(r - trace[-3]) < tol:
            # 2-cycle between trace[-2] and r: keep the iterate with the sparser graph
            other = base.with_epsilon(r)
            best = min((graph, other), key=lambda g: g.bond_ratio())
            log.info("self-consistent iteration entered a 2-cycle (%g, %g)", eps, r)
            return SelfConsistentResult(best.epsilon_used, best, trace, False)
        eps = r
        graph = base.with_epsilon(eps)
    log.warning("self-consistent iteration did not converge in %d steps", max_iter)
    return SelfConsistentResult(eps, graph, trace, False)


def n_dependent_epsilon(r_g: float, n_samples: float) -> float:
    """r_g + (1 - r_g) exp(-N/50): a looser prior for short samples."""
    if not 0 <= r_g <= 1:
        raise ValueError("r_g must lie in [0, 1]")
    return r_g + (1.0 - r_g) * np.exp(-n_samples / 50.0)


# --- conditioning corrections ----------------------------------------------


def conditioned_gaps(data, pairs_i, pairs_j, k: int, epsilon: float, min_size: int = MIN_SUBSAMPLE,
                     caches: dict | None = None):
    """Conditioned gaps of the pairs ``(pairs_i[t], pairs_j[t])`` given spin ``k``.

    Rows are split by the value of ``S_k``; on each subsample of at least
    ``min_size`` rows the posterior gap is computed, and the gaps are
    averaged with weights proportional to the subsample sizes.  NaN where
    neither branch is large enough.  ``caches`` maps subsample sizes to
    decision caches and is filled on the way.
    """
    x = as_spins(data)
    pairs_i = np.asarray(pairs_i, dtype=int)
    pairs_j = np.asarray(pairs_j, dtype=int)
    total = np.zeros(len(pairs_i))
    weight = 0
    for value in (1, -1):
        sub = x[x[:, k] == value]
        if len(sub) < min_size:
            continue
        sub = sub.astype(np.int64)
        m = len(sub)
        col = sub.sum(axis=0)
        prod = sub.T @ sub
        sa, sb, sab = col[pairs_i], col[pairs_j], prod[pairs_i, pairs_j]
        n_pp = (m + sa + sb + sab) // 4
        n_pm = (m + sa - sb - sab) // 4
        n_mp = (m - sa + sb - sab) // 4
        if caches is None:
            n_mm = m - n_pp - n_pm - n_mp
            lo = log_odds_batch(*counts_to_moments(n_pp, n_pm, n_mp, n_mm))
        else:
            lo = caches.setdefault(m, DecisionCache(m)).log_odds_batch(n_pp, n_pm, n_mp)
        total += m * gap_from_log_odds(lo, epsilon)
        weight += m
    if weight == 0:
        return np.full(len(pairs_i), np.nan)
    return total / weight


def conditioned_confidence(data, i: int, j: int, k: int, prior=1.0, min_size: int = MIN_SUBSAMPLE) -> float:
    """Gap of pair (i, j) averaged over the two values of spin k.

    Returns NaN when both subsamples are below ``min_size``.
    """
    if len({i, j, k}) != 3:
        raise ValueError("i, j and k must be distinct")
    return float(conditioned_gaps(data, [i], [j], k, as_epsilon(prior), min_size)[0])


def common_neighbours(adjacency: np.ndarray, i: int, j: int) -> np.ndarray:
    both = adjacency[i] & adjacency[j]
    both = both.copy()
    both[[i, j]] = False
    return np.nonzero(both)[0]


def neighbour_weights(graph: ConfidenceGraph, prior, i: int, j: int) -> dict[int, float]:
    """Weights P(b_ik) P(b_jk) / sum over the common neighbourhood."""
    eps = as_epsilon(prior)
    ks = common_neighbours(graph.adjacency, i, j)
    if ks.size == 0:
        raise ValueError(f"nodes {i} and {j} have no common neighbour")
    pb = bond_probability_from_log_odds(graph.log_odds, eps)
    w = pb[i, ks] * pb[j, ks]
    total = w.sum()
    if total == 0:
        w = np.full(len(ks), 1.0 / len(ks))
    else:
        w = w / total
    return dict(zip(ks.tolist(), w.tolist()))


def neighbour_weight(graph: ConfidenceGraph, prior, i: int, j: int, k: int) -> float:
    weights = neighbour_weights(graph, prior, i, j)
    if k not in weights:
        raise ValueError(f"{k} is not a common neighbour of {i} and {j}")
    return weights[k]


def combine(gaps: np.ndarray, method: str, weights: np.ndarray | None = None) -> float:
    """Merge conditioned gaps over the common neighbours of one pair."""
    if method == "avg":
        return float(np.sum(gaps * weights))
    if method == "min":
        return float(np.min(gaps))
    if method == "prod":
        return float(2.0 * np.prod((1.0 + gaps) / 2.0) - 1.0)
    raise ValueError(f"unknown correction {method!r}")


def correct_graph(data, graph: ConfidenceGraph, prior=None, method: str = "min",
                  min_size: int = MIN_SUBSAMPLE) -> ConfidenceGraph:
    """Remove edges explained by a common neighbour.

    For each edge with common neighbours on ``graph``, the conditioned gaps
    given every common neighbour are merged by ``method`` and the edge is
    kept iff the result is >= 0.  One pass; edges are only ever removed.
    """
    if method not in CORRECTIONS:
        raise ValueError(f"unknown correction {method!r}")
    x = as_spins(data)
    eps = graph.epsilon_used if prior is None else as_epsilon(prior)
    adj = graph.adjacency
    n = graph.n_nodes
    # all conditioned gaps given each k, for the edges that have k as a common neighbour
    gaps = {}
    caches: dict[int, DecisionCache] = {}
    for k in range(n):
        ii, jj = np.nonzero(np.triu(adj, 1) & adj[k][:, None] & adj[k][None, :])
        if ii.size == 0:
            continue
        g = conditioned_gaps(x, ii, jj, k, eps, min_size, caches)
        for a, b, v in zip(ii.tolist(), jj.tolist(), g.tolist()):
            gaps.setdefault((a, b), {})[k] = v
    corrected = np.full((n, n), np.nan)
    new_adj = adj.copy()
    pb = bond_probability_from_log_odds(graph.log_odds, eps)
    for (i, j), by_k in gaps.items():
        ks = np.array([k for k, v in by_k.items() if not np.isnan(v)], dtype=int)
        if ks.size == 0:
            continue
        values = np.array([by_k[k] for k in ks.tolist()])
        weights = None
        if method == "avg":
            w = pb[i, ks] * pb[j, ks]
            weights = w / w.sum() if w.sum() > 0 else np.full(len(ks), 1.0 / len(ks))
        score = combine(values, method, weights)
        corrected[i, j] = corrected[j, i] = score
        if score < 0:
            new_adj[i, j] = new_adj[j, i] = False
    return replace(graph, adjacency=new_adj, corrected_gap=corrected, correction=method)
