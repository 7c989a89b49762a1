"""Recovery configuration shared by the CLI, rolling windows and benchmarks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import DecisionCache
from .recovery import CORRECTIONS, ConfidenceGraph, correct_graph, n_dependent_epsilon, recover, self_consistent_epsilon

PRIOR_MODES = ("flat", "fixed", "selfcon", "ndep")


@dataclass(frozen=True)
class PriorMode:
    """``flat``; ``fixed`` (value = epsilon); ``selfcon`` (value = starting
    epsilon); ``ndep`` (value = asymptotic ratio r_g)."""

    kind: str = "flat"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in PRIOR_MODES:
            raise ValueError(f"unknown prior mode {self.kind!r}")
        if not self.value >= 0:
            raise ValueError("prior parameter must be non-negative")
        if self.kind == "ndep" and self.value > 1:
            raise ValueError("r_g must lie in [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "PriorMode":
        """Parse ``flat``, ``fixed=E``, ``selfcon=E0`` or ``ndep=RG``."""
        text = text.strip()
        if text == "flat":
            return cls("flat", 1.0)
        if text == "selfcon":
            return cls("selfcon", 1.0)
        kind, sep, value = text.partition("=")
        if not sep or kind not in PRIOR_MODES or kind == "flat":
            raise ValueError(f"cannot parse prior {text!r}; use flat, fixed=E, selfcon=E0 or ndep=RG")
        try:
            number = float(value)
        except ValueError:
            raise ValueError(f"prior parameter {value!r} is not a number") from None
        return cls(kind, number)

    def __str__(self):
        return "flat" if self.kind == "flat" else f"{self.kind}={self.value:g}"


@dataclass(frozen=True)
class RecoveryConfig:
    prior: PriorMode = field(default_factory=PriorMode)
    correction: str = "none"
    window: int | None = None
    stride: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.correction != "none" and self.correction not in CORRECTIONS:
            raise ValueError(f"unknown correction {self.correction!r}")
        if self.window is not None and self.window < 1:
            raise ValueError("window length must be >= 1")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1")


def run_recovery(data, config: RecoveryConfig, cache: DecisionCache | None = None, jobs: int = 1):
    """Recover one graph under ``config``; returns ``(graph, metadata)``."""
    x = np.asarray(data)
    base = recover(x, 1.0, cache, jobs)
    prior = config.prior
    meta = {"prior": str(prior), "n_samples": int(x.shape[0]), "n_nodes": int(x.shape[1]),
            "correction": config.correction, "seed": config.seed}
    if prior.kind == "flat":
        graph = base
    elif prior.kind == "fixed":
        graph = base.with_epsilon(prior.value)
    elif prior.kind == "ndep":
        graph = base.with_epsilon(n_dependent_epsilon(prior.value, x.shape[0]))
    else:
        res = self_consistent_epsilon(base, prior.value)
        graph = res.graph
        meta["epsilon_trace"] = res.trace
        meta["converged"] = res.converged
    meta["epsilon"] = graph.epsilon_used
    meta["n_bonds_uncorrected"] = graph.n_bonds
    if config.correction != "none":
        graph = correct_graph(x, graph, method=config.correction)
    meta["n_bonds"] = graph.n_bonds
    graph.meta = meta
    return graph, meta

