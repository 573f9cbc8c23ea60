import numpy as np
import pytest
from scipy import stats

from mixcontrast.fdr import (
    benjamini_hochberg,
    evaluate_against_truth,
    fdp_curve,
    fit_two_normal_mixture,
    infer,
    select_by_local_fdr,
    z_scores,
)


def test_bh_examples():
    sel, q = benjamini_hochberg([0.01, 0.02, 0.5], 0.05)
    assert sel.tolist() == [True, True, False]
    assert np.allclose(q, [0.03, 0.03, 0.5])
    assert not benjamini_hochberg(np.ones(10))[0].any()
    assert benjamini_hochberg([0.001])[0].tolist() == [True]
    with pytest.raises(ValueError):
        benjamini_hochberg([0.1], alpha=1.0)


def test_bh_step_up_beyond_first_failure():
    # 0.04 > 0.05*2/4 but 0.05 <= 0.05*4/4: step-up rejects all four
    sel, _ = benjamini_hochberg([0.001, 0.04, 0.045, 0.05], 0.05)
    assert sel.all()


def test_bh_q_values_match_reference(rng):
    P = rng.uniform(size=300) ** 3
    _, q = benjamini_hochberg(P)
    order = np.argsort(P)
    n = P.size
    raw = n * P[order] / np.arange(1, n + 1)
    ref = np.array([raw[k:].min() for k in range(n)])
    expected = np.empty(n)
    expected[order] = np.minimum(ref, 1.0)
    assert np.allclose(q, expected, rtol=1e-14)
    for alpha in (0.01, 0.05, 0.2):
        assert np.array_equal(benjamini_hochberg(P, alpha)[0], q <= alpha)


def test_bh_controls_fdr_on_planted_signal():
    fdp = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        truth = np.zeros(2000, dtype=bool)
        truth[:200] = True
        P = rng.uniform(size=2000)
        P[truth] = stats.norm.sf(rng.normal(3.0, 1.0, 200))
        sel, _ = benjamini_hochberg(P, 0.1)
        fdp.append((sel & ~truth).sum() / max(sel.sum(), 1))
    assert np.mean(fdp) <= 0.1 + 0.02


def test_z_score_examples():
    assert z_scores([0.5])[0] == 0.0
    assert z_scores([0.025])[0] == pytest.approx(1.959964, abs=1e-6)
    z = z_scores(np.linspace(0.01, 0.99, 50))
    assert np.all(np.diff(z) < 0)
    with pytest.warns(RuntimeWarning, match="clamped"):
        clamped = z_scores([0.0, 1.0])
    assert np.all(np.isfinite(clamped))


def test_z_scores_of_uniform_are_standard_normal():
    P = np.random.default_rng(1).uniform(size=20000)
    assert stats.kstest(z_scores(P), "norm").statistic < 0.015


@pytest.mark.parametrize("seed", range(5))
def test_two_normal_recovers_mixture(seed):
    rng = np.random.default_rng(seed)
    z = np.concatenate([rng.normal(0, 1, 4500), rng.normal(3, 1, 500)])
    fit = fit_two_normal_mixture(z)
    assert 0.85 <= fit.pi0 <= 0.95
    assert 2.5 <= fit.mu1 <= 3.5
    assert fit.converged and fit.mu0 < fit.mu1


@pytest.mark.parametrize("seed", range(5))
def test_two_normal_pure_null(seed):
    z = np.random.default_rng(seed).normal(size=5000)
    fit = fit_two_normal_mixture(z)
    assert fit.pi0 >= 0.95
    assert not select_by_local_fdr(fit.local_fdr, 0.1)[0].any()


def test_collapse_rule_keeps_real_signal(rng):
    z = np.concatenate([rng.normal(0, 1, 4800), rng.normal(3, 1, 200)])
    fit = fit_two_normal_mixture(z)
    assert not fit.collapsed and fit.pi0 < 0.99


def test_local_fdr_monotone_with_equal_variances():
    rng = np.random.default_rng(3)
    z = np.concatenate([rng.normal(0, 1, 1800), rng.normal(2.5, 1, 200)])
    fit = fit_two_normal_mixture(z, theoretical_null=True)
    assert not fit.collapsed
    grid = np.linspace(-6, 6, 400)
    # with sd0 = sd1 the density ratio is monotone, so local FDR falls above the crossing point
    l0 = fit.pi0 * stats.norm.pdf(grid, fit.mu0, fit.sd0)
    l1 = (1 - fit.pi0) * stats.norm.pdf(grid, fit.mu1, fit.sd0)
    lfdr = l0 / (l0 + l1)
    above = grid > (fit.mu0 + fit.mu1) / 2
    assert np.all(np.diff(lfdr[above]) <= 1e-15)


def test_local_fdr_is_null_posterior(rng):
    z = np.concatenate([rng.normal(0, 1, 900), rng.normal(3, 1, 100)])
    fit = fit_two_normal_mixture(z)
    l0 = fit.pi0 * stats.norm.pdf(z, fit.mu0, fit.sd0)
    l1 = (1 - fit.pi0) * stats.norm.pdf(z, fit.mu1, fit.sd1)
    assert np.allclose(fit.local_fdr, l0 / (l0 + l1), atol=1e-6)
    assert np.all((fit.local_fdr >= 0) & (fit.local_fdr <= 1))


def test_theoretical_null_is_pinned(rng):
    z = np.concatenate([rng.normal(0.3, 1.2, 900), rng.normal(3, 1, 100)])
    fit = fit_two_normal_mixture(z, theoretical_null=True)
    assert (fit.mu0, fit.sd0) == (0.0, 1.0)


def test_two_normal_needs_enough_scores():
    with pytest.raises(ValueError):
        fit_two_normal_mixture(np.zeros(99))


def test_local_fdr_selection_examples():
    sel, implied, empty = select_by_local_fdr([0.01, 0.5], 0.1)
    assert sel.tolist() == [True, False] and implied == 0.01 and not empty
    sel, implied, empty = select_by_local_fdr([0.3, 0.5], 0.1)
    assert not sel.any() and implied == 0.0 and empty
    sel, _, _ = select_by_local_fdr([0.3, 1.0], 1.0)
    assert sel.all()


def test_infer_wiring(rng):
    P = np.concatenate([rng.uniform(size=900), rng.uniform(0, 1e-4, 100)])
    bh = infer(P, method="bh", alpha=0.05)
    assert np.array_equal(bh.selected, benjamini_hochberg(P, 0.05)[0])
    lf = infer(P, method="localfdr", c0=0.1)
    assert np.array_equal(lf.selected, lf.local_fdr < 0.1)
    assert np.all(np.isfinite(lf.z))
    with pytest.raises(ValueError):
        infer(P, method="storey")


def test_evaluation_examples():
    truth = np.array([True] * 3 + [False] * 7)
    m = evaluate_against_truth(truth, selected=truth)
    assert (m.fdp, m.power, m.fndp) == (0.0, 1.0, 0.0)
    m = evaluate_against_truth(truth, selected=np.zeros(10, dtype=bool))
    assert (m.fdp, m.power, m.fndp, m.n_selected) == (0.0, 0.0, 0.3, 0)
    with pytest.raises(ValueError):
        evaluate_against_truth(truth, selected=np.zeros(9, dtype=bool))


def test_evaluation_accounting(rng):
    truth = rng.uniform(size=500) < 0.2
    sel = rng.uniform(size=500) < 0.3
    m = evaluate_against_truth(truth, selected=sel)
    tp = int((sel & truth).sum())
    assert m.fdp * m.n_selected == pytest.approx(m.false_positives)
    assert round(m.fdp * m.n_selected) == pytest.approx(m.fdp * m.n_selected, abs=1e-9)
    assert m.power * m.n_de == pytest.approx(tp)
    assert m.fndp * (m.n - m.n_selected) == pytest.approx(m.false_negatives)
    assert tp + m.false_negatives == m.n_de
    assert all(0 <= v <= 1 for v in (m.fdp, m.fndp, m.power))


def test_ranking_mode_and_curve():
    truth = np.array([True, False, True, False])
    metrics, curve = evaluate_against_truth(truth, order=np.array([0, 1, 2, 3]), top=3)
    assert metrics.n_selected == 3 and metrics.false_positives == 1
    assert np.allclose(curve, [0.0, 0.5, 1 / 3])
    assert np.allclose(fdp_curve([2, 0, 3, 1], truth), [0, 0, 1 / 3, 0.5])
