"""Per-model evidence of two-spin statistics.

Evidences are reported per sample, ``(1/N) ln P(S | M)``, computed with the
Laplace approximation around the saddle point of

    Psi(theta) = phi.theta - (1 + delta/N) ln Z(theta) + eps(theta)/N.

``exact_log_evidence`` integrates the same quantity by brute-force quadrature
and serves as an oracle for the approximation.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import log, pi
from typing import NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .models import (
    LOG4,
    MODELS,
    STATES,
    ModelSpec,
    fisher_logdet,
    fisher_matrix,
    grad_log_partition,
    log_partition,
)

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 200
MAX_HALVINGS = 40
MAX_BOX_DOUBLINGS = 3


class SaddlePointError(ArithmeticError):
    """The saddle-point equations of a model could not be solved."""

    def __init__(self, model: ModelSpec, detail: str = ""):
        self.model = model
        super().__init__(f"saddle point of {model.name} did not converge{detail}")


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PairStats:
    """Joint-state counts of one spin pair.

    ``n_pm`` counts rows with S1=+1, S2=-1, and so on.
    """

    n_pp: int
    n_pm: int
    n_mp: int
    n_mm: int

    def __post_init__(self):
        counts = (self.n_pp, self.n_pm, self.n_mp, self.n_mm)
        if any(int(c) != c or c < 0 for c in counts):
            raise ValueError(f"counts must be non-negative integers, got {counts}")
        if sum(counts) < 1:
            raise ValueError("at least one observation is required")

    @property
    def n(self) -> int:
        return self.n_pp + self.n_pm + self.n_mp + self.n_mm

    @property
    def m1(self) -> float:
        return (self.n_pp + self.n_pm - self.n_mp - self.n_mm) / self.n

    @property
    def m2(self) -> float:
        return (self.n_pp - self.n_pm + self.n_mp - self.n_mm) / self.n

    @property
    def c12(self) -> float:
        return (self.n_pp - self.n_pm - self.n_mp + self.n_mm) / self.n

    def moments(self) -> "Moments":
        return Moments(self.m1, self.m2, self.c12, self.n)


class Moments(NamedTuple):
    """Pair statistics given directly as moments; need not be achievable."""

    m1: float
    m2: float
    c12: float
    n: float


def counts_to_moments(n_pp, n_pm, n_mp, n_mm):
    """Vectorised counts -> (m1, m2, c12, N)."""
    n_pp, n_pm, n_mp, n_mm = (np.asarray(a, dtype=np.int64) for a in (n_pp, n_pm, n_mp, n_mm))
    n = n_pp + n_pm + n_mp + n_mm
    nf = n.astype(float)
    return (
        (n_pp + n_pm - n_mp - n_mm) / nf,
        (n_pp - n_pm + n_mp - n_mm) / nf,
        (n_pp - n_pm - n_mp + n_mm) / nf,
        n,
    )


class SaddleResult(NamedTuple):
    theta: np.ndarray
    converged: np.ndarray
    residual: np.ndarray


def saddle_residual(model: ModelSpec, theta, m1, m2, c12, n) -> np.ndarray:
    """phi - (1 + delta/N) grad ln Z + grad eps / N."""
    n = np.asarray(n, dtype=float)
    b = 1.0 + model.delta / n
    phi = model.phi(m1, m2, c12)
    return phi - b[..., None] * grad_log_partition(model, theta) + model.grad_epsilon() / n[..., None]


def _newton(model, target, b):
    """Solve target - b * grad ln Z(theta) = 0 for every row independently.

    Converged rows are frozen, so each row's result does not depend on the
    rest of the batch.
    """
    shape = target.shape
    target = target.reshape(-1, shape[-1])
    b = np.broadcast_to(b, shape[:-1]).reshape(-1)
    theta = np.zeros_like(target)
    converged = np.zeros(len(target), dtype=bool)

    def residual(th, rows):
        return target[rows] - b[rows, None] * grad_log_partition(model, th)

    active = np.arange(len(target))
    res = residual(theta[active], active)
    norm = np.max(np.abs(res), axis=-1)
    for _ in range(NEWTON_MAX_ITER):
        done = norm < NEWTON_TOL
        converged[active[done]] = True
        keep = ~done
        active, res, norm = active[keep], res[keep], norm[keep]
        if active.size == 0:
            break
        th = theta[active]
        hess = b[active, None, None] * fisher_matrix(model, th)
        step = np.linalg.solve(hess, res[..., None])[..., 0]
        scale = np.ones(len(active))
        pending = np.ones(len(active), dtype=bool)
        new_th = th.copy()
        new_res = res.copy()
        new_norm = norm.copy()
        for _ in range(MAX_HALVINGS):
            idx = np.nonzero(pending)[0]
            if idx.size == 0:
                break
            cand = th[idx] + scale[idx, None] * step[idx]
            cres = residual(cand, active[idx])
            cnorm = np.max(np.abs(cres), axis=-1)
            ok = np.isfinite(cnorm) & (cnorm < norm[idx])
            acc = idx[ok]
            new_th[acc], new_res[acc], new_norm[acc] = cand[ok], cres[ok], cnorm[ok]
            pending[acc] = False
            scale[idx[~ok]] *= 0.5
        # rows whose line search stalled stay put and are reported unconverged
        stalled = pending
        theta[active] = new_th
        res, norm = new_res, new_norm
        if np.any(stalled):
            keep = ~stalled
            active, res, norm = active[keep], res[keep], norm[keep]
    else:
        done = norm < NEWTON_TOL
        converged[active[done]] = True
    return theta.reshape(shape), converged.reshape(shape[:-1])


def _solve_saddle(model: ModelSpec, m1, m2, c12, n):
    m1, m2, c12, n = np.broadcast_arrays(
        np.asarray(m1, float), np.asarray(m2, float), np.asarray(c12, float), np.asarray(n, float)
    )
    shape = m1.shape
    if model.theta_dim == 0:
        theta = np.zeros(shape + (0,))
        return SaddleResult(theta, np.ones(shape, bool), np.zeros(shape))
    b = 1.0 + model.delta / n
    target = model.phi(m1, m2, c12) + model.grad_epsilon() / n[..., None]
    if model.index in (9, 10):
        theta, converged = _newton(model, target, b)
    else:
        # separable models: each phi component is matched by a single tanh
        weight = model.embedding.sum(axis=1)
        theta = np.arctanh(target / (b[..., None] * weight))
        converged = np.all(np.isfinite(theta), axis=-1)
    res = np.max(np.abs(saddle_residual(model, theta, m1, m2, c12, n)), axis=-1)
    return SaddleResult(theta, converged, res)


def _as_moments(stats):
    if isinstance(stats, PairStats):
        return stats.moments()
    return Moments(*stats)


def saddle_point(model: ModelSpec, stats) -> np.ndarray:
    """theta* solving the saddle-point equations for ``stats``."""
    m = _as_moments(stats)
    res = _solve_saddle(model, m.m1, m.m2, m.c12, m.n)
    if not np.all(res.converged):
        raise SaddlePointError(model)
    return res.theta


def _laplace(model: ModelSpec, theta, m1, m2, c12, n):
    n = np.asarray(n, dtype=float)
    if model.theta_dim == 0:
        return np.full(np.shape(n), -LOG4)
    b = 1.0 + model.delta / n
    phi = model.phi(m1, m2, c12)
    fit = np.sum(phi * theta, axis=-1) - log_partition(model, theta)
    k = model.theta_dim
    return fit + k / (2.0 * n) * np.log(2.0 * pi / (n * b)) - model.log_norm / n


def log_evidences(m1, m2, c12, n):
    """Per-sample log evidence of all ten models, shape ``(..., 10)``.

    Returns ``(values, converged)``; non-converged entries are NaN.
    """
    m1, m2, c12, n = np.broadcast_arrays(
        np.asarray(m1, float), np.asarray(m2, float), np.asarray(c12, float), np.asarray(n, float)
    )
    values = np.empty(m1.shape + (10,))
    converged = np.empty(m1.shape + (10,), dtype=bool)
    for model in MODELS:
        sad = _solve_saddle(model, m1, m2, c12, n)
        v = _laplace(model, sad.theta, m1, m2, c12, n)
        values[..., model.index - 1] = np.where(sad.converged, v, np.nan)
        converged[..., model.index - 1] = sad.converged
    return values, converged


@dataclass
class EvidenceResult:
    per_sample_log_evidence: np.ndarray
    saddle_points: list
    converged: np.ndarray


def evidence(stats) -> EvidenceResult:
    """All ten evidences of a single pair, with the saddle points."""
    m = _as_moments(stats)
    values, thetas, flags = [], [], []
    for model in MODELS:
        sad = _solve_saddle(model, m.m1, m.m2, m.c12, m.n)
        thetas.append(sad.theta)
        flags.append(bool(sad.converged))
        values.append(float(_laplace(model, sad.theta, m.m1, m.m2, m.c12, m.n)) if sad.converged else np.nan)
    return EvidenceResult(np.array(values), thetas, np.array(flags))


def log_evidence(model: ModelSpec, stats) -> float:
    """(1/N) ln P(S | M) by the Laplace approximation."""
    m = _as_moments(stats)
    sad = _solve_saddle(model, m.m1, m.m2, m.c12, m.n)
    if not np.all(sad.converged):
        raise SaddlePointError(model)
    return _laplace(model, sad.theta, m.m1, m.m2, m.c12, m.n)


# --- quadrature oracle -----------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    """Tensor Gauss-Legendre rule.

    With ``centered`` the rule is placed at the integrand's peak, rotated and
    scaled by the Gaussian widths there, and stretched by ``u = sinh(v)`` so
    that exponential tails are reached with few nodes; ``half_width`` is then
    the reach in standard deviations.  Otherwise the box is the plain
    ``[-half_width, half_width]**dim``.  ``rtol`` enables a node-doubling
    convergence check.
    """

    nodes: int = 48
    half_width: float = 30.0
    centered: bool = True
    rtol: float | None = None
    boundary_drop: float = 16 * log(10.0)


def _log_z_bruteforce(full):
    e = full @ STATES.T
    top = e.max(axis=-1)
    return top + np.log(np.exp(e - top[..., None]).sum(axis=-1))


def _log_integrand(model, theta, phi, n):
    """ln[e^{N(phi.theta)} Z^{-N} sqrt(det J) / norm]."""
    lz = _log_z_bruteforce(theta @ model.embedding)
    return n * (theta @ phi - lz) + 0.5 * fisher_logdet(model, theta) - model.log_norm


def _rule(nodes, half_width, stretched):
    x, w = leggauss(nodes)
    if stretched:
        reach = np.arcsinh(half_width)
        v = x * reach
        return np.sinh(v), np.log(w * reach) + np.log(np.cosh(v))
    return x * half_width, np.log(w * half_width)


def _quadrature(model, phi, n, center, chol, spec, nodes, half_width):
    k = model.theta_dim
    x, logw1 = _rule(nodes, half_width, spec.centered)
    u = np.stack([g.ravel() for g in np.meshgrid(*([x] * k), indexing="ij")], axis=-1)
    logw = sum(g.ravel() for g in np.meshgrid(*([logw1] * k), indexing="ij"))
    theta = center + u @ chol.T
    logf = _log_integrand(model, theta, phi, n)
    top = logf.max()
    total = top + np.log(np.sum(np.exp(logf + logw - top))) + np.log(abs(np.linalg.det(chol)))
    # integrand on the outermost layer of nodes must be negligible
    outer = np.any(np.abs(u) >= np.abs(x).max() * (1 - 1e-12), axis=-1)
    return total, bool(np.max(logf[outer]) <= top - spec.boundary_drop)


def _integrate(model, phi, n, center, chol, spec, nodes):
    half_width = spec.half_width
    for _ in range(MAX_BOX_DOUBLINGS):
        total, ok = _quadrature(model, phi, n, center, chol, spec, nodes, half_width)
        if ok:
            return total
        half_width *= 2.0
        nodes += nodes // 2
    raise QuadratureError(f"{model.name}: integrand not negligible on the box boundary")


def exact_log_evidence(model: ModelSpec, stats, grid: QuadratureSpec | None = None) -> float:
    """(1/N) ln of the un-approximated evidence integral."""
    grid = grid or QuadratureSpec()
    m = _as_moments(stats)
    n = float(m.n)
    k = model.theta_dim
    if k == 0:
        return -LOG4
    if k > 3:
        raise ValueError("quadrature limited to three parameters")
    phi = model.phi(m.m1, m.m2, m.c12)
    if grid.centered:
        # peak of the integrand; the boundary check below guards the placement
        center = np.asarray(saddle_point(model, m), dtype=float)
        b = 1.0 + model.delta / n
        cov = np.linalg.inv(n * b * fisher_matrix(model, center))
        chol = np.linalg.cholesky(cov)
    else:
        center = np.zeros(k)
        chol = np.eye(k)
    value = _integrate(model, phi, n, center, chol, grid, grid.nodes)
    if grid.rtol is not None:
        finer = _integrate(model, phi, n, center, chol, grid, 2 * grid.nodes)
        if abs(finer - value) > grid.rtol * max(1.0, abs(finer)):
            raise QuadratureError(f"{model.name}: quadrature changed by {abs(finer - value):.3g}")
        value = finer
    return value / n
