"""l1-regularised pseudo-likelihood baseline and recovery metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .classifier import as_epsilon
from .recovery import ConfidenceGraph, as_spins, recover

log = logging.getLogger(__name__)

PLM_TOL = 1e-9
PLM_MAX_ITER = 5000
DEFAULT_LAMBDA_FRACTION = 0.5


@dataclass
class PlmFit:
    """Row ``i`` of ``couplings`` is the regression of node ``i`` on the others."""

    couplings: np.ndarray
    fields: np.ndarray
    lam: float
    converged: bool
    n_iter: int
    objective_trace: list[float] | None = None


def _node_losses(x, w, h):
    # per-node mean of ln(1 + exp(-2 s u)) = ln 2cosh(u) - s u
    u = x @ w.T + h
    au = np.abs(u)
    return np.mean(au + np.log1p(np.exp(-2.0 * au)) - x * u, axis=0), u


def _objectives(x, w, h, lam):
    loss, u = _node_losses(x, w, h)
    return loss + lam * np.abs(w).sum(axis=1), loss, u


def _soft(v, t):
    excess = np.abs(v) - t
    # a few ulps above the threshold is rounding in the gradient, not signal
    excess[excess <= 8 * np.finfo(float).eps * np.maximum(np.abs(v), t)] = 0.0
    return np.sign(v) * excess


def plm_l1_fit(data, lam: float, max_iter: int = PLM_MAX_ITER, tol: float = PLM_TOL,
               init: PlmFit | None = None, record: bool = False) -> PlmFit:
    """Proximal gradient (ISTA) with per-node backtracking, all nodes at once.

    Every accepted step satisfies the sufficient-decrease condition, so each
    node's objective is non-increasing.  Converged when no node's objective
    moves by more than ``tol`` in one step.
    """
    if not lam >= 0:
        raise ValueError("lambda must be non-negative")
    x = as_spins(data).astype(float)
    n_samples, n = x.shape
    off = ~np.eye(n, dtype=bool)
    if init is None:
        m = np.clip(x.mean(axis=0), -1 + 1e-6, 1 - 1e-6)
        h = np.arctanh(m)
        w = np.zeros((n, n))
    else:
        h, w = init.fields.copy(), init.couplings.copy()
    step = np.ones(n)
    obj, loss, u = _objectives(x, w, h, lam)
    trace = [float(obj.sum())] if record else None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        r = np.tanh(u) - x  # dloss/du, shape (N, n)
        gw = (r.T @ x) / n_samples
        gw[~off] = 0.0
        gh = r.mean(axis=0)
        pending = np.ones(n, dtype=bool)
        new_w, new_h = w.copy(), h.copy()
        new_obj, new_loss, new_u = obj.copy(), loss.copy(), u
        for _ in range(60):
            rows = pending
            t = step[rows, None]
            cand_w = w.copy()
            cand_h = h.copy()
            cand_w[rows] = _soft(w[rows] - t * gw[rows], t * lam)
            cand_w[~off] = 0.0
            cand_h[rows] = h[rows] - step[rows] * gh[rows]
            c_obj, c_loss, c_u = _objectives(x, cand_w, cand_h, lam)
            dw = cand_w - w
            dh = cand_h - h
            quad = loss + (gw * dw).sum(axis=1) + gh * dh + ((dw**2).sum(axis=1) + dh**2) / (2 * step)
            ok = rows & (c_loss <= quad + 1e-15)
            new_w[ok], new_h[ok] = cand_w[ok], cand_h[ok]
            new_obj[ok], new_loss[ok] = c_obj[ok], c_loss[ok]
            pending = rows & ~ok
            if not pending.any():
                break
            step[pending] *= 0.5
        change = np.abs(obj - new_obj)
        # keep the old point for any node whose objective would rise by rounding
        worse = new_obj > obj
        new_w[worse], new_h[worse], new_obj[worse] = w[worse], h[worse], obj[worse]
        w, h = new_w, new_h
        obj, loss, u = _objectives(x, w, h, lam)
        if record:
            trace.append(float(obj.sum()))
        step *= 1.25
        if np.max(change) < tol:
            converged = True
            break
    if not converged:
        log.warning("PLM fit at lambda=%g hit the iteration cap", lam)
    return PlmFit(w, h, float(lam), converged, it, trace)


def lambda_max(data) -> float:
    """Smallest penalty at which the all-zero couplings are optimal for every node."""
    x = as_spins(data).astype(float)
    m = x.mean(axis=0)
    frozen = np.abs(m) == 1
    if frozen.any():
        log.warning("nodes %s are constant and are left out of lambda_max", np.nonzero(frozen)[0].tolist())
    c = (x.T @ x) / x.shape[0] - np.outer(m, m)
    np.fill_diagonal(c, 0.0)
    c[frozen, :] = 0.0
    return float(np.max(np.abs(c)))


def symmetrize(fit: PlmFit) -> np.ndarray:
    return 0.5 * (fit.couplings + fit.couplings.T)


def plm_graph(fit: PlmFit) -> np.ndarray:
    """Edge iff the symmetrised coupling is non-zero."""
    adj = symmetrize(fit) != 0
    np.fill_diagonal(adj, False)
    return adj


def plm_recover(data, fraction: float = DEFAULT_LAMBDA_FRACTION) -> tuple[np.ndarray, PlmFit]:
    lam = fraction * lambda_max(data)
    fit = plm_l1_fit(data, lam)
    return plm_graph(fit), fit


@dataclass(frozen=True)
class RecoveryMetrics:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def fnr(self) -> float:
        return self.fn / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def tnr(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else float("nan")

    @property
    def fpr(self) -> float:
        return self.fp / (self.tn + self.fp) if self.tn + self.fp else float("nan")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def as_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
                "tpr": self.tpr, "tnr": self.tnr, "fpr": self.fpr, "fnr": self.fnr}


def _edge_set(edges, n):
    if isinstance(edges, np.ndarray) and edges.dtype == bool:
        i, j = np.nonzero(np.triu(edges, 1))
        return set(zip(i.tolist(), j.tolist()))
    out = set()
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"invalid edge ({i}, {j}) for {n} nodes")
        out.add((min(i, j), max(i, j)))
    return out


def metrics(true_edges, predicted_edges, n: int) -> RecoveryMetrics:
    """Confusion counts over the n(n-1)/2 unordered pairs.

    Edges may be given as iterables of pairs or as boolean adjacency matrices.
    """
    t = _edge_set(true_edges, n)
    p = _edge_set(predicted_edges, n)
    tp = len(t & p)
    fp = len(p - t)
    fn = len(t - p)
    tn = n * (n - 1) // 2 - tp - fp - fn
    return RecoveryMetrics(tp, tn, fp, fn)


def roc_sweep(data, true_edges, method: str, grid, graph: ConfidenceGraph | None = None):
    """One ``(parameter, RecoveryMetrics)`` row per grid value.

    ``ms_over_epsilon`` computes the pair confidences once and re-thresholds;
    ``plm_over_lambda`` treats the grid as absolute penalties and warm-starts
    from the previous (larger) penalty.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("empty parameter grid")
    x = as_spins(data)
    n = x.shape[1]
    rows = []
    if method == "ms_over_epsilon":
        base = graph if graph is not None else recover(x)
        for eps in grid:
            rows.append((eps, metrics(true_edges, base.with_epsilon(as_epsilon(eps)).adjacency, n)))
    elif method == "plm_over_lambda":
        order = sorted(range(len(grid)), key=lambda k: -grid[k])
        fits = {}
        prev = None
        for k in order:
            prev = plm_l1_fit(x, grid[k], init=prev)
            fits[k] = prev
        for k, lam in enumerate(grid):
            rows.append((lam, metrics(true_edges, plm_graph(fits[k]), n)))
    else:
        raise ValueError(f"unknown sweep method {method!r}")
    return rows
