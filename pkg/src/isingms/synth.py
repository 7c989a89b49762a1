"""Benchmark topologies, couplings and equilibrium Ising samples."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import isqrt

import numpy as np
from numba import njit

TOPOLOGIES = ("dimers", "star", "erdos_renyi", "grid2d", "diluted_grid", "custom")


@dataclass(frozen=True)
class TopologySpec:
    """``kind`` plus its parameter: mean degree for Erdos-Renyi, removal
    probability for the diluted grid.  Grids need ``n`` to be a perfect square."""

    kind: str
    n: int
    degree: float = 3.0
    dilution: float = 0.3

    def __post_init__(self):
        if self.kind not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.kind!r}")

    @property
    def tag(self) -> str:
        if self.kind == "erdos_renyi":
            return f"erdos_renyi({self.degree:g})"
        if self.kind == "diluted_grid":
            return f"diluted_grid({self.dilution:g})"
        return self.kind


@dataclass
class IsingInstance:
    couplings: np.ndarray
    fields: np.ndarray
    topology_tag: str = "custom"
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.couplings = np.asarray(self.couplings, dtype=float)
        self.fields = np.asarray(self.fields, dtype=float)
        n = len(self.fields)
        if self.couplings.shape != (n, n):
            raise ValueError("couplings must be an n x n matrix matching the fields")
        if not np.array_equal(self.couplings, self.couplings.T):
            raise ValueError("couplings must be symmetric")
        if np.any(np.diag(self.couplings) != 0):
            raise ValueError("couplings must have a zero diagonal")

    @property
    def n_nodes(self) -> int:
        return len(self.fields)

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.couplings, 1))
        return list(zip(i.tolist(), j.tolist()))

    def adjacency(self) -> np.ndarray:
        return self.couplings != 0

    def to_json(self) -> str:
        edges = [[i, j, float(self.couplings[i, j])] for i, j in self.edges()]
        return json.dumps(
            {
                "n": self.n_nodes,
                "edges": edges,
                "fields": [float(h) for h in self.fields],
                "topology_tag": self.topology_tag,
                "seed": self.seed,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "IsingInstance":
        d = json.loads(text)
        n = int(d["n"])
        J = np.zeros((n, n))
        for i, j, w in d["edges"]:
            J[i, j] = J[j, i] = float(w)
        fields = d.get("fields") or [0.0] * n
        return cls(J, np.asarray(fields, dtype=float), d.get("topology_tag", "custom"), d.get("seed"))


def generate_topology(spec: TopologySpec, rng_seed=None) -> list[tuple[int, int]]:
    """Edge list ``(i, j)`` with ``i < j``, deterministic given the seed."""
    rng = np.random.default_rng(rng_seed)
    n = spec.n
    if n < 2:
        raise ValueError("need at least two nodes")
    if spec.kind == "dimers":
        if n % 2:
            raise ValueError("a gas of dimers needs an even number of nodes")
        perm = rng.permutation(n)
        edges = [tuple(sorted((int(perm[2 * k]), int(perm[2 * k + 1])))) for k in range(n // 2)]
    elif spec.kind == "star":
        centre = int(rng.integers(n))
        edges = [tuple(sorted((centre, j))) for j in range(n) if j != centre]
    elif spec.kind == "erdos_renyi":
        p = spec.degree / (n - 1)
        if not 0 <= p <= 1:
            raise ValueError(f"mean degree {spec.degree} impossible with {n} nodes")
        i, j = np.triu_indices(n, 1)
        keep = rng.random(len(i)) < p
        edges = list(zip(i[keep].tolist(), j[keep].tolist()))
    elif spec.kind in ("grid2d", "diluted_grid"):
        side = isqrt(n)
        if side * side != n:
            raise ValueError(f"grid topologies need a perfect square, got {n}")
        edges = []
        for r in range(side):
            for c in range(side):
                v = r * side + c
                if c + 1 < side:
                    edges.append((v, v + 1))
                if r + 1 < side:
                    edges.append((v, v + side))
        if spec.kind == "diluted_grid":
            keep = rng.random(len(edges)) >= spec.dilution
            edges = [e for e, k in zip(edges, keep) if k]
    else:
        raise ValueError("custom topologies are supplied directly, not generated")
    return sorted(edges)


def assign_couplings(
    edges, n: int, beta: float, mode: str = "bimodal", rng_seed=None, fields=None, tag: str = "custom"
) -> IsingInstance:
    """Couplings +-beta with equal odds (``bimodal``) or all +beta (``ferromagnetic``)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    rng = np.random.default_rng(rng_seed)
    J = np.zeros((n, n))
    edges = list(edges)
    if mode == "bimodal":
        signs = np.where(rng.random(len(edges)) < 0.5, 1.0, -1.0)
    elif mode == "ferromagnetic":
        signs = np.ones(len(edges))
    else:
        raise ValueError(f"unknown coupling mode {mode!r}")
    for (i, j), s in zip(edges, signs):
        if i == j:
            raise ValueError("self-couplings are not allowed")
        J[i, j] = J[j, i] = s * beta
    h = np.zeros(n) if fields is None else np.asarray(fields, dtype=float)
    if h.shape != (n,):
        raise ValueError("fields must have one entry per node")
    return IsingInstance(J, h.copy(), tag, rng_seed)


def make_instance(spec: TopologySpec, beta: float, mode: str = "bimodal", seed=None) -> IsingInstance:
    """Topology and couplings from one seed."""
    ss = np.random.SeedSequence(seed)
    topo_seed, coupling_seed = ss.spawn(2)
    edges = generate_topology(spec, topo_seed)
    inst = assign_couplings(edges, spec.n, beta, mode, coupling_seed, tag=spec.tag)
    inst.seed = seed
    return inst


@njit(cache=True)
def _gibbs_kernel(J, h, state, uniforms, flips, burn_in, thin, out):
    n = state.shape[0]
    kept = 0
    sweep = 0
    total = burn_in + thin * out.shape[0]
    while sweep < total:
        for i in range(n):
            field = h[i]
            for j in range(n):
                field += J[i, j] * state[j]
            # P(S_i = +1 | rest) = 1 / (1 + exp(-2 field))
            if uniforms[sweep, i] * (1.0 + np.exp(-2.0 * field)) < 1.0:
                state[i] = 1
            else:
                state[i] = -1
        # global flip S -> -S, Metropolis-accepted; only the fields change the energy
        if flips[sweep, 0] < 0.5:
            dh = 0.0
            for i in range(n):
                dh += h[i] * state[i]
            if flips[sweep, 1] < np.exp(-2.0 * dh):
                for i in range(n):
                    state[i] = -state[i]
        sweep += 1
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            out[kept, :] = state
            kept += 1
    return out


def gibbs_sample(
    instance: IsingInstance, n_samples: int, burn_in: int = 1000, thin: int = 10, rng_seed=None,
    global_flip: bool = True, block: int = 2000,
) -> np.ndarray:
    """Equilibrium samples by systematic-scan single-site Gibbs sweeps.

    After each sweep a global spin flip is proposed with probability 1/2 and
    accepted with the Metropolis rule.  It leaves the Boltzmann distribution
    invariant and restores the +-S symmetry that single-site updates lose on
    strongly polarised graphs such as large stars.

    Returns an ``(n_samples, n)`` int8 matrix of +-1.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if thin < 1 or burn_in < 0:
        raise ValueError("thin must be >= 1 and burn_in >= 0")
    rng = np.random.default_rng(rng_seed)
    n = instance.n_nodes
    J = np.ascontiguousarray(instance.couplings, dtype=np.float64)
    h = np.ascontiguousarray(instance.fields, dtype=np.float64)
    state = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    out = np.empty((n_samples, n), dtype=np.int8)
    # random numbers are drawn in blocks of sweeps so memory stays bounded
    done = 0
    remaining_burn = burn_in
    while remaining_burn > 0:
        m = min(block, remaining_burn)
        _run(J, h, state, rng, m, 1, 0, global_flip, np.empty((0, n), np.int8))
        remaining_burn -= m
    while done < n_samples:
        m = min(max(1, block // thin), n_samples - done)
        _run(J, h, state, rng, 0, thin, m, global_flip, out[done:done + m])
        done += m
    return out


def _run(J, h, state, rng, burn, thin, keep, global_flip, out):
    sweeps = burn + thin * keep
    uniforms = rng.random((sweeps, len(state)))
    flips = rng.random((sweeps, 2))
    if not global_flip:
        flips[:, 0] = 1.0
    _gibbs_kernel(J, h, state, uniforms, flips, burn, thin, out)


def all_states(n: int) -> np.ndarray:
    """All 2**n configurations as rows of +-1 (first spin most significant)."""
    codes = np.arange(2**n)[:, None]
    bits = (codes >> np.arange(n - 1, -1, -1)) & 1
    return (2 * bits - 1).astype(np.int8)


def boltzmann_probabilities(instance: IsingInstance) -> tuple[np.ndarray, np.ndarray]:
    """Exact distribution over all states of a small instance."""
    n = instance.n_nodes
    if n > 20:
        raise ValueError("exact enumeration is limited to n <= 20")
    states = all_states(n).astype(float)
    energy = 0.5 * np.einsum("si,ij,sj->s", states, instance.couplings, states) + states @ instance.fields
    energy -= energy.max()
    p = np.exp(energy)
    return states.astype(np.int8), p / p.sum()


def exact_sample_small(instance: IsingInstance, n_samples: int, rng_seed=None) -> np.ndarray:
    """i.i.d. draws from the enumerated Boltzmann distribution (n <= 20)."""
    states, p = boltzmann_probabilities(instance)
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(len(p), size=n_samples, p=p)
    return states[idx]


def exact_moments(instance: IsingInstance) -> tuple[np.ndarray, np.ndarray]:
    """Exact magnetisations and the matrix of E[S_i S_j]."""
    states, p = boltzmann_probabilities(instance)
    s = states.astype(float)
    return p @ s, np.einsum("s,si,sj->ij", p, s, s)


def hide_nodes(data: np.ndarray, visible) -> np.ndarray:
    """Keep only the ``visible`` columns."""
    visible = np.asarray(sorted(set(int(v) for v in visible)), dtype=int)
    if visible.size == 0:
        raise ValueError("at least one visible node is required")
    if visible.min() < 0 or visible.max() >= data.shape[1]:
        raise ValueError("visible index out of range")
    return data[:, visible]


def choose_visible(n: int, n_visible: int, rng_seed=None) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    return np.sort(rng.choice(n, size=n_visible, replace=False))


def true_edges(instance: IsingInstance, visible=None) -> set[tuple[int, int]]:
    """Edges of the instance, relabelled to the positions within ``visible``."""
    if visible is None:
        return set(instance.edges())
    pos = {int(v): k for k, v in enumerate(sorted(int(v) for v in visible))}
    return {
        (pos[i], pos[j]) for i, j in instance.edges() if i in pos and j in pos
    }

