import numpy as np
import pytest

from isingms.baseline import (
    PlmFit, RecoveryMetrics, lambda_max, metrics, plm_graph, plm_l1_fit, plm_recover, roc_sweep, symmetrize,
)
from isingms.recovery import recover, self_consistent_epsilon
from isingms.synth import IsingInstance, TopologySpec, gibbs_sample, make_instance, true_edges


def _coins(n_samples, n, seed):
    return np.where(np.random.default_rng(seed).random((n_samples, n)) < 0.5, 1, -1).astype(np.int8)


@pytest.fixture(scope="module")
def er_data():
    inst = make_instance(TopologySpec("erdos_renyi", 24), 0.8, "bimodal", 3)
    return inst, gibbs_sample(inst, 400, rng_seed=3)


def test_above_lambda_max_is_empty(er_data):
    _, x = er_data
    lm = lambda_max(x)
    for lam in (lm, 1.001 * lm, 3 * lm):
        fit = plm_l1_fit(x, lam)
        assert fit.converged
        assert not np.any(fit.couplings)
        assert not plm_graph(fit).any()
    assert plm_graph(plm_l1_fit(x, 0.95 * lm)).any()


def test_lambda_max_is_kkt_bound(er_data):
    _, x = er_data
    xf = x.astype(float)
    h = np.arctanh(xf.mean(axis=0))
    grad = ((np.tanh(h) - xf).T @ xf) / len(xf)
    np.fill_diagonal(grad, 0)
    assert np.max(np.abs(grad)) == pytest.approx(lambda_max(x), abs=1e-12)


def test_lambda_max_examples():
    col = np.array([1] * 30 + [-1] * 10, dtype=np.int8)
    pair = np.column_stack([col, col])
    m = col.mean()
    assert lambda_max(pair) == pytest.approx(1 - m**2, abs=1e-15)
    assert lambda_max(pair) > 0
    big = _coins(20000, 10, 0)
    assert lambda_max(big) < 5 / np.sqrt(20000)
    frozen = np.column_stack([np.ones(40, dtype=np.int8), col, -col])
    assert lambda_max(frozen) == pytest.approx(1 - m**2)


def test_strong_dimer_dominates():
    J = np.zeros((6, 6))
    J[1, 4] = J[4, 1] = 1.2
    x = gibbs_sample(IsingInstance(J, np.zeros(6)), 2000, rng_seed=0)
    fit = plm_l1_fit(x, 0.01)
    mags = np.abs(fit.couplings)
    top_two = sorted(zip(mags.ravel(), range(36)))[-2:]
    assert {divmod(k, 6) for _, k in top_two} == {(1, 4), (4, 1)}


def test_objective_never_increases(er_data):
    _, x = er_data
    for frac in (0.05, 0.3, 0.7):
        fit = plm_l1_fit(x, frac * lambda_max(x), record=True)
        assert fit.converged
        assert np.all(np.diff(fit.objective_trace) <= 1e-12)
        assert not fit.couplings.diagonal().any()


def test_l1_norm_monotone_in_lambda(er_data):
    _, x = er_data
    grid = np.linspace(0.02, 1.1, 12) * lambda_max(x)
    norms = [np.abs(plm_l1_fit(x, lam).couplings).sum() for lam in grid]
    assert np.all(np.diff(norms) <= 1e-9)


def test_warm_start_agrees_with_cold(er_data):
    _, x = er_data
    lam = 0.4 * lambda_max(x)
    cold = plm_l1_fit(x, lam)
    warm = plm_l1_fit(x, lam, init=plm_l1_fit(x, 0.6 * lambda_max(x)))
    np.testing.assert_allclose(warm.couplings, cold.couplings, atol=2e-4)


def test_plm_graph_examples():
    zero = PlmFit(np.zeros((3, 3)), np.zeros(3), 0.1, True, 1)
    assert not plm_graph(zero).any()
    w = np.zeros((3, 3))
    w[0, 1], w[1, 0] = 0.3, -0.3
    w[1, 2] = 0.2
    g = plm_graph(PlmFit(w, np.zeros(3), 0.1, True, 1))
    assert not g[0, 1] and g[1, 2] and g[2, 1]
    np.testing.assert_array_equal(symmetrize(PlmFit(w, np.zeros(3), 0.1, True, 1)), (w + w.T) / 2)


def test_plm_recover_default_fraction(er_data):
    _, x = er_data
    adj, fit = plm_recover(x)
    assert fit.lam == pytest.approx(0.5 * lambda_max(x))
    np.testing.assert_array_equal(adj, plm_graph(fit))


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        plm_l1_fit(_coins(10, 3, 0), -1.0)


def test_metrics_examples():
    truth = {(0, 1), (2, 3)}
    n = 5
    perfect = metrics(truth, truth, n)
    assert perfect.tpr == perfect.tnr == 1.0
    empty = metrics(truth, set(), n)
    assert empty.tpr == 0.0 and empty.tnr == 1.0
    complete = metrics(truth, ~np.eye(n, dtype=bool), n)
    assert complete.tpr == 1.0 and complete.tnr == 0.0
    m = metrics(truth, {(1, 0), (0, 4)}, n)
    assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 1, 7)
    assert m.tp + m.fp + m.fn + m.tn == m.total == 10
    assert m.tpr + m.fnr == 1 and m.tnr + m.fpr == 1
    assert set(m.as_dict()) >= {"tpr", "tnr", "fpr", "fnr"}


def test_metrics_without_edges_reports_nan():
    m = metrics(set(), set(), 4)
    assert np.isnan(m.tpr) and m.tnr == 1.0
    assert isinstance(m, RecoveryMetrics)


def test_ms_roc_endpoints_and_monotone(er_data):
    inst, x = er_data
    truth = true_edges(inst)
    flat = recover(x, 1.0)
    rows = roc_sweep(x, truth, "ms_over_epsilon", [0.0, 1.0])
    assert rows[0][1].tp + rows[0][1].fp == 0
    assert rows[1][1].tp + rows[1][1].fp == flat.n_bonds
    grid = np.concatenate([[0], np.logspace(-4, 1, 15)])
    counts = [m.tp + m.fp for _, m in roc_sweep(x, truth, "ms_over_epsilon", grid, graph=flat)]
    assert counts == sorted(counts)
    with pytest.raises(ValueError):
        roc_sweep(x, truth, "ms_over_epsilon", [])
    with pytest.raises(ValueError):
        roc_sweep(x, truth, "bogus", [1.0])


def test_plm_roc_sweep(er_data):
    inst, x = er_data
    lm = lambda_max(x)
    grid = np.linspace(0, 1.5, 7) * lm
    rows = roc_sweep(x, true_edges(inst), "plm_over_lambda", grid)
    assert [p for p, _ in rows] == pytest.approx(list(grid))
    predicted = [m.tp + m.fp for _, m in rows]
    assert predicted[-1] == 0 and predicted[-2] == 0
    assert predicted == sorted(predicted, reverse=True)


@pytest.mark.slow
def test_roc_curves_reach_upper_left():
    eps_grid = [1e-6, 1e-4, 1e-2, 1.0]
    lam_fracs = [0.3, 0.5, 0.7]
    ms = np.zeros((len(eps_grid), 2))
    plm = np.zeros((len(lam_fracs), 2))
    seeds = range(20)
    for seed in seeds:
        inst = make_instance(TopologySpec("erdos_renyi", 64), 0.5, "bimodal", seed)
        x = gibbs_sample(inst, 500, rng_seed=seed)
        truth = true_edges(inst)
        ms += [(m.tpr, m.tnr) for _, m in roc_sweep(x, truth, "ms_over_epsilon", eps_grid)]
        grid = np.array(lam_fracs) * lambda_max(x)
        plm += [(m.tpr, m.tnr) for _, m in roc_sweep(x, truth, "plm_over_lambda", grid)]
    ms /= len(seeds)
    plm /= len(seeds)
    assert np.any((ms[:, 0] > 0.5) & (ms[:, 1] > 0.9))
    assert np.any((plm[:, 0] > 0.5) & (plm[:, 1] > 0.9))
