"""Synthetic benchmark driver: instance -> samples -> recovery -> metrics."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baseline import DEFAULT_LAMBDA_FRACTION, lambda_max, metrics, plm_graph, plm_l1_fit, roc_sweep
from .classifier import DecisionCache
from .recovery import correct_graph, n_dependent_epsilon, recover, self_consistent_epsilon
from .synth import TopologySpec, choose_visible, gibbs_sample, hide_nodes, make_instance, true_edges

METHODS = ("ms_flat", "ms_selfcon", "ms_true", "ms_ndep", "ms_avg", "ms_min", "ms_prod", "plm")


@dataclass(frozen=True)
class BenchConfig:
    topology: TopologySpec
    beta: float
    couplings: str = "bimodal"
    sample_sizes: tuple[int, ...] = (1000,)
    methods: tuple[str, ...] = ("ms_selfcon", "plm")
    n_visible: int | None = None
    burn_in: int = 1000
    thin: int = 10
    r_g: float = 0.01
    lambda_fraction: float = DEFAULT_LAMBDA_FRACTION
    roc_points: int = 0

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if not self.sample_sizes or min(self.sample_sizes) < 1:
            raise ValueError("sample sizes must be positive")
        if self.n_visible is not None and not 2 <= self.n_visible <= self.topology.n:
            raise ValueError("n_visible must lie between 2 and the number of nodes")


def seed_streams(seed: int):
    """Independent streams for the sampler and the hidden-node choice.

    The instance itself is built from the integer ``seed``.
    """
    return np.random.SeedSequence([seed, 1]), np.random.SeedSequence([seed, 2])


def run_seed(config: BenchConfig, seed: int) -> tuple[list[dict], list[dict]]:
    """All metric rows (and ROC rows) for one seed.

    The largest sample is drawn once; smaller sample sizes use its prefixes.
    """
    sampler_ss, visible_ss = seed_streams(seed)
    instance = make_instance(config.topology, config.beta, config.couplings, seed)
    data = gibbs_sample(instance, max(config.sample_sizes), config.burn_in, config.thin, sampler_ss)
    if config.n_visible is not None and config.n_visible < instance.n_nodes:
        visible = choose_visible(instance.n_nodes, config.n_visible, visible_ss)
        data = hide_nodes(data, visible)
        truth = true_edges(instance, visible)
    else:
        truth = true_edges(instance)
    n = data.shape[1]
    n_pairs = n * (n - 1) // 2
    true_ratio = len(truth) / (n_pairs - len(truth)) if n_pairs > len(truth) else float("inf")
    rows, roc = [], []
    base_row = {"topology": config.topology.tag, "n": n, "beta": config.beta,
                "couplings": config.couplings, "seed": seed}
    for size in sorted(config.sample_sizes):
        x = data[:size]
        ms = None
        if any(m.startswith("ms") for m in config.methods):
            ms = recover(x, 1.0, DecisionCache(size))
        for method in config.methods:
            param = float("nan")
            if method == "plm":
                lam = config.lambda_fraction * lambda_max(x)
                adj = plm_graph(plm_l1_fit(x, lam))
                param = lam
            else:
                if method == "ms_selfcon":
                    g = self_consistent_epsilon(ms, 1.0).graph
                elif method == "ms_true":
                    g = ms.with_epsilon(true_ratio)
                elif method == "ms_ndep":
                    g = ms.with_epsilon(n_dependent_epsilon(config.r_g, size))
                elif method == "ms_flat":
                    g = ms
                else:
                    g = correct_graph(x, ms, method=method[3:])
                adj = g.adjacency
                param = g.epsilon_used
            m = metrics(truth, adj, n)
            rows.append({**base_row, "N": size, "method": method, "parameter": param,
                         "n_true": len(truth), "n_pred": int(np.triu(adj, 1).sum()),
                         "density": float(np.triu(adj, 1).sum()) / n_pairs, **m.as_dict()})
        if config.roc_points > 1:
            if ms is not None:
                eps_grid = np.concatenate([[0.0], np.logspace(-4, 0, config.roc_points - 1)])
                for p, m in roc_sweep(x, truth, "ms_over_epsilon", eps_grid, graph=ms):
                    roc.append({**base_row, "N": size, "method": "ms", "parameter": p,
                                "tpr": m.tpr, "tnr": m.tnr, "fpr": m.fpr, "fnr": m.fnr})
            if "plm" in config.methods:
                lam_grid = np.linspace(0.0, 1.5, config.roc_points) * lambda_max(x)
                for p, m in roc_sweep(x, truth, "plm_over_lambda", lam_grid):
                    roc.append({**base_row, "N": size, "method": "plm", "parameter": p,
                                "tpr": m.tpr, "tnr": m.tnr, "fpr": m.fpr, "fnr": m.fnr})
    return rows, roc


def _run_seed_star(args):
    return run_seed(*args)


def run_synthetic_benchmark(config: BenchConfig, seeds, jobs: int = 1) -> tuple[list[dict], list[dict]]:
    """Metric rows for every (seed, N, method), in seed order regardless of ``jobs``."""
    seeds = [int(s) for s in seeds]
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seed_star, [(config, s) for s in seeds]))
    else:
        results = [run_seed(config, s) for s in seeds]
    rows = [r for res in results for r in res[0]]
    roc = [r for res in results for r in res[1]]
    return rows, roc


def summarize(rows: list[dict]) -> list[dict]:
    """Mean rates per (N, method) over seeds."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["N"], r["method"]), []).append(r)
    out = []
    for (size, method), rs in sorted(groups.items()):
        out.append({"N": size, "method": method, "seeds": len(rs),
                    **{k: float(np.nanmean([r[k] for r in rs])) for k in ("tpr", "tnr", "fpr", "fnr", "density")}})
    return out
