"""Rolling-window recovery and windowed correlation statistics."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .classifier import DecisionCache
from .pipeline import RecoveryConfig, run_recovery
from .recovery import ConfidenceGraph, as_spins


def window_starts(n_samples: int, length: int, stride: int, overhang: int = 0) -> np.ndarray:
    """Start indices 0, stride, ... of complete windows; no partial windows."""
    if length < 1 or stride < 1:
        raise ValueError("window length and stride must be >= 1")
    if length + overhang > n_samples:
        raise ValueError(f"window of {length} (+{overhang}) exceeds the {n_samples} samples")
    return np.arange(0, n_samples - length - overhang + 1, stride)


@dataclass
class RollingResult:
    starts: np.ndarray
    graphs: list[ConfidenceGraph]
    ratios: np.ndarray
    mean_eta: np.ndarray

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([g.epsilon_used for g in self.graphs])


def rolling_windows(data, length: int, stride: int, config: RecoveryConfig | None = None,
                    jobs: int = 1) -> RollingResult:
    """Recover one graph per window and collect r(t) and the mean confidence."""
    x = as_spins(data)
    config = config or RecoveryConfig()
    starts = window_starts(x.shape[0], length, stride)
    cache = DecisionCache(length)

    def work(t):
        return run_recovery(x[t:t + length], config, cache)[0]

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            graphs = list(pool.map(work, starts.tolist()))
    else:
        graphs = [work(t) for t in starts.tolist()]
    ratios = np.array([g.bond_ratio() for g in graphs])
    mean_eta = np.mean([g.eta for g in graphs], axis=0)
    np.fill_diagonal(mean_eta, np.nan)
    return RollingResult(starts, graphs, ratios, mean_eta)


@dataclass
class WindowedStats:
    """Windowed correlations; all arrays are indexed by window first.

    ``delayed`` has shape (windows, taus, n, n) and is only kept when asked
    for; the r.m.s. aggregates ``c_diag``/``c_off`` (windows, taus) always are.
    """

    starts: np.ndarray
    taus: np.ndarray
    c_diag: np.ndarray
    c_off: np.ndarray
    connected: np.ndarray
    c_conn_off: np.ndarray
    delayed: np.ndarray | None = None

    @property
    def mean_connected(self) -> np.ndarray:
        return self.connected.mean(axis=0)


def _window_sums(values: np.ndarray, starts: np.ndarray, length: int) -> np.ndarray:
    """Sums of ``values[t:t+length]`` along axis 0 for each start ``t``."""
    csum = np.concatenate([np.zeros((1,) + values.shape[1:], values.dtype), np.cumsum(values, axis=0)])
    return csum[starts + length] - csum[starts]


def _rms_parts(mats: np.ndarray):
    n = mats.shape[-1]
    diag = np.sqrt(np.mean(np.diagonal(mats, axis1=-2, axis2=-1) ** 2, axis=-1))
    iu = np.triu_indices(n, 1)
    off = np.sqrt(np.mean(mats[..., iu[0], iu[1]] ** 2, axis=-1)) if n > 1 else np.zeros(mats.shape[:-2])
    return diag, off


def windowed_correlations(data, length: int, taus=(0,), stride: int = 1, keep_delayed: bool = False) -> WindowedStats:
    """Delayed correlations (1/N_w) sum_t' S_i(t') S_j(t'+tau), equal-time
    connected correlations, and their r.m.s. diagonal / off-diagonal sizes.

    Every window must fit its largest delay, so the same starts are used for
    all taus.
    """
    x = as_spins(data).astype(np.int64)
    taus = np.asarray(sorted(set(int(t) for t in taus)), dtype=int)
    if taus.size == 0 or taus.min() < 0:
        raise ValueError("delays must be non-negative and non-empty")
    starts = window_starts(x.shape[0], length, stride, int(taus.max()))
    n = x.shape[1]
    c_diag = np.empty((len(starts), len(taus)))
    c_off = np.empty_like(c_diag)
    delayed = np.empty((len(starts), len(taus), n, n)) if keep_delayed else None
    span = x.shape[0] - int(taus.max())
    for k, tau in enumerate(taus.tolist()):
        prods = x[:span, :, None] * x[tau:tau + span, None, :]
        mats = _window_sums(prods, starts, length) / length
        c_diag[:, k], c_off[:, k] = _rms_parts(mats)
        if keep_delayed:
            delayed[:, k] = mats
    m = _window_sums(x, starts, length) / length
    eq = _window_sums(x[:, :, None] * x[:, None, :], starts, length) / length
    connected = eq - m[:, :, None] * m[:, None, :]
    _, conn_off = _rms_parts(connected)
    return WindowedStats(starts, taus, c_diag, c_off, connected, conn_off, delayed)
