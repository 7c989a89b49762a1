"""The ten exponential-family models of a two-spin system.

Each model is the Ising pair distribution

    P(S1, S2) = exp(a1*S1 + a2*S2 + J*S1*S2) / Z

restricted to a subset of the parameters.  A model's own parameter vector
``theta`` is mapped onto the full triple ``(a1, a2, J)`` by a fixed
embedding matrix, so that e.g. the shared-field model uses ``a1 = a2 = h``.

All functions here are vectorised over leading axes: ``theta`` has shape
``(..., theta_dim)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import log, pi, sqrt

import numpy as np

LOG2 = log(2.0)
LOG4 = log(4.0)

# rows: (S1, S2, S1*S2) for the states ++, +-, -+, --
STATES = np.array(
    [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
)


@dataclass(frozen=True)
class ModelSpec:
    """Static description of one two-spin model.

    ``embedding`` has shape ``(theta_dim, 3)`` and maps the model parameters
    onto ``(a1, a2, J)``; it doubles as the map from the full sufficient
    statistics ``(m1, m2, c12)`` to the model's ``phi`` vector.

    The Fisher determinant is stored separately from ``delta``/``eps`` as
    ``det = exp(det_log_const + det_j_coeff * J) / Z**det_z_power``.
    """

    index: int
    params: tuple[str, ...]
    delta: float
    eps_const: float
    eps_linear_in_J: float
    norm: float
    det_log_const: float
    det_z_power: int
    det_j_coeff: float
    embedding: np.ndarray = field(repr=False, compare=False)

    @property
    def name(self) -> str:
        return f"M{self.index}"

    @property
    def theta_dim(self) -> int:
        return len(self.params)

    @property
    def has_bond(self) -> bool:
        return "J" in self.params

    @property
    def log_norm(self) -> float:
        return log(self.norm)

    def phi(self, m1, m2, c12) -> np.ndarray:
        """Sufficient statistics of this model, shape ``(..., theta_dim)``."""
        full = np.stack(np.broadcast_arrays(m1, m2, c12), axis=-1).astype(float)
        return full @ self.embedding.T

    def epsilon(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        value = np.full(theta.shape[:-1], self.eps_const)
        if self.eps_linear_in_J:
            value = value + self.eps_linear_in_J * theta[..., self.params.index("J")]
        return value

    def grad_epsilon(self) -> np.ndarray:
        g = np.zeros(self.theta_dim)
        if self.eps_linear_in_J:
            g[self.params.index("J")] = self.eps_linear_in_J
        return g


def _embedding(params):
    rows = {
        "h1": [1.0, 0.0, 0.0],
        "h2": [0.0, 1.0, 0.0],
        "h": [1.0, 1.0, 0.0],
        "J": [0.0, 0.0, 1.0],
    }
    return np.array([rows[p] for p in params], dtype=float).reshape(len(params), 3)


def _model(index, params, delta, eps_const, eps_j, norm, det_const, det_zp, det_j):
    emb = _embedding(params)
    emb.setflags(write=False)
    return ModelSpec(index, params, delta, eps_const, eps_j, norm, det_const, det_zp, det_j, emb)


# index, parameters, delta, eps const, eps J-coeff, norm, log det const, Z power, det J-coeff
MODELS: tuple[ModelSpec, ...] = (
    _model(1, (), 1.0, 2 * LOG2, 0.0, 1.0, 0.0, 0, 0.0),
    _model(2, ("h1",), 1.0, 2 * LOG2, 0.0, pi, 2 * LOG4, 2, 0.0),
    _model(3, ("h2",), 1.0, 2 * LOG2, 0.0, pi, 2 * LOG4, 2, 0.0),
    _model(4, ("h",), 0.5, 1.5 * LOG2, 0.0, sqrt(2.0) * pi, log(8.0), 1, 0.0),
    _model(5, ("h1", "h2"), 1.0, 2 * LOG2, 0.0, pi**2, 2 * LOG4, 2, 0.0),
    _model(6, ("J",), 1.0, 2 * LOG2, 0.0, pi, 2 * LOG4, 2, 0.0),
    _model(7, ("h1", "J"), 1.0, 2 * LOG2, 0.0, pi**2, 2 * LOG4, 2, 0.0),
    _model(8, ("h2", "J"), 1.0, 2 * LOG2, 0.0, pi**2, 2 * LOG4, 2, 0.0),
    _model(9, ("h", "J"), 1.5, 3.5 * LOG2, 0.5, 2 * pi, 7 * LOG2, 3, 1.0),
    _model(10, ("h1", "h2", "J"), 2.0, 4 * LOG2, 0.0, pi**2, 4 * LOG4, 4, 0.0),
)

NO_BOND = tuple(m for m in MODELS if not m.has_bond)
BOND = tuple(m for m in MODELS if m.has_bond)


def get_model(index: int) -> ModelSpec:
    if not 1 <= index <= 10:
        raise ValueError(f"model index must be in 1..10, got {index}")
    return MODELS[index - 1]


def _check_theta(model: ModelSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0 or theta.shape[-1] != model.theta_dim:
        raise ValueError(
            f"{model.name} expects theta of length {model.theta_dim}, got shape {theta.shape}"
        )
    return theta


def _full(model: ModelSpec, theta: np.ndarray) -> np.ndarray:
    return theta @ model.embedding


def log_cosh(x):
    """ln cosh x without overflow."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - LOG2


def _one_minus_abs_tanh(x):
    decay = np.exp(-2.0 * np.abs(x))
    return 2.0 * decay / (1.0 + decay)


def _log1p_tanh_product(a1, a2, j):
    """ln(1 + tanh a1 tanh a2 tanh J), accurate when the product nears -1."""
    prod = np.tanh(a1) * np.tanh(a2) * np.tanh(j)
    out = np.log1p(np.where(prod > -0.5, prod, 0.0))
    neg = prod <= -0.5
    if np.any(neg):
        # 1 - |t1 t2 tJ| = -expm1(sum log(1 - (1 - |t_k|))); masked entries may hit log(0)
        with np.errstate(divide="ignore"):
            s = sum(np.log1p(-_one_minus_abs_tanh(x)) for x in (a1, a2, j))
        out = np.where(neg, np.log(-np.expm1(np.where(neg, s, -1.0))), out)
    return out


def _log_partition_full(full: np.ndarray) -> np.ndarray:
    a1, a2, j = full[..., 0], full[..., 1], full[..., 2]
    return LOG4 + log_cosh(a1) + log_cosh(a2) + log_cosh(j) + _log1p_tanh_product(a1, a2, j)


def log_partition(model: ModelSpec, theta) -> np.ndarray:
    """ln Z(theta); e.g. for M10 ln[4 ch h1 ch h2 ch J + 4 sh h1 sh h2 sh J]."""
    theta = _check_theta(model, theta)
    if model.theta_dim == 0:
        return np.full(theta.shape[:-1], LOG4)
    return _log_partition_full(_full(model, theta))


def _grad_full(full: np.ndarray) -> np.ndarray:
    t1, t2, tj = np.tanh(full[..., 0]), np.tanh(full[..., 1]), np.tanh(full[..., 2])
    d = 1.0 + t1 * t2 * tj
    return np.stack([(t1 + t2 * tj) / d, (t2 + t1 * tj) / d, (tj + t1 * t2) / d], axis=-1)


def grad_log_partition(model: ModelSpec, theta) -> np.ndarray:
    """Gradient of ln Z with respect to the model's own parameters."""
    theta = _check_theta(model, theta)
    if model.theta_dim == 0:
        return np.zeros(theta.shape)
    return _grad_full(_full(model, theta)) @ model.embedding.T


def state_probabilities(full: np.ndarray) -> np.ndarray:
    """Probabilities of (++, +-, -+, --) given full parameters ``(a1, a2, J)``."""
    a1, a2, j = full[..., 0], full[..., 1], full[..., 2]
    # explicit sums (no matmul) keep every row independent of the batch shape
    energy = np.stack([a1 + a2 + j, a1 - a2 - j, -a1 + a2 - j, -a1 - a2 + j], axis=-1)
    energy = energy - energy.max(axis=-1, keepdims=True)
    w = np.exp(energy)
    return w / ((w[..., 0] + w[..., 1]) + (w[..., 2] + w[..., 3]))[..., None]


def fisher_matrix(model: ModelSpec, theta) -> np.ndarray:
    """Fisher information (Hessian of ln Z) by enumeration of the four states."""
    theta = _check_theta(model, theta)
    k = model.theta_dim
    if k == 0:
        return np.zeros(theta.shape[:-1] + (0, 0))
    p = state_probabilities(_full(model, theta))
    f = STATES @ model.embedding.T  # (4, k), small integers

    def expect(values):
        terms = p * values
        return (terms[..., 0] + terms[..., 1]) + (terms[..., 2] + terms[..., 3])

    mean = [expect(f[:, a]) for a in range(k)]
    out = np.empty(theta.shape[:-1] + (k, k))
    for a in range(k):
        for b in range(a, k):
            out[..., a, b] = out[..., b, a] = expect(f[:, a] * f[:, b]) - mean[a] * mean[b]
    return out


def fisher_logdet(model: ModelSpec, theta) -> np.ndarray:
    """ln det of the Fisher information from its closed form in terms of Z."""
    theta = _check_theta(model, theta)
    if model.theta_dim == 0:
        return np.zeros(theta.shape[:-1])
    out = model.det_log_const - model.det_z_power * log_partition(model, theta)
    if model.det_j_coeff:
        out = out + model.det_j_coeff * theta[..., model.params.index("J")]
    return out
