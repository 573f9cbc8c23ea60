"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``. The simulation-based
criteria fit the full three-component model with the default ten EM starts
and take most of the suite's runtime.
"""

import time
from functools import lru_cache

import numpy as np
import pytest
from conftest import random_model
from oracles import clustering_accuracy, dense_contrast_variance, draw_lmm_mixture, joint_gaussian_blups
from scipy import stats

from mixcontrast.contrast import (
    ContrastVector,
    assemble_omega,
    contrast_statistics,
    contrast_variance,
    estimate_blups,
    rank_genes,
)
from mixcontrast.data import ExpressionMatrix
from mixcontrast.em import EmConfig, fit_mixture, initialize, run_em
from mixcontrast.fdr import benjamini_hochberg, evaluate_against_truth, infer
from mixcontrast.permutation import PermutationPlan, fit_t_df, replicate_statistics
from mixcontrast.pipeline import add_pvalues, score_genes
from mixcontrast.simulate import SimConfig, generate_dataset, preset
from mixcontrast.ttest import pooled_t

pytestmark = pytest.mark.acceptance

N_PERMS = 50
G = 3


def report(capsys, number, title, passed, detail, started):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number} ({title}): {detail} [{time.time() - started:.0f}s]"
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


@lru_cache(maxsize=None)
def analyse(name, seed, delta=None):
    """Fit, score and permutation P-values for one simulated replicate."""
    config = preset(name) if delta is None else SimConfig(delta=delta)
    data, truth = generate_dataset(config, seed)
    analysis = add_pvalues(score_genes(data, G, EmConfig(seed=seed)), N_PERMS, seed)
    return data, truth, analysis


def test_omega_oracle(capsys):
    started = time.time()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        p = int(rng.choice([4, 6, 8]))
        n_slots = int(rng.integers(1, 16))
        labels = [1] * (p // 2) + [2] * (p // 2)
        model = random_model(rng, labels, g=1, n=n_slots)
        comp = model.components[0]
        slot = int(rng.integers(1, n_slots + 1))
        lam_sq = contrast_variance(assemble_omega(model, 0), ContrastVector((1, 2), slot, n_slots, 2, p))
        ref = dense_contrast_variance(model.design.X, comp.B, comp.sigma_e_sq, comp.sigma_c_sq, n_slots, slot)
        worst = max(worst, abs(lam_sq - ref) / ref)
    report(capsys, 1, "contrast variance vs dense inverse", worst <= 1e-8,
           f"max relative error {worst:.2e} over 100 instances (tol 1e-8)", started)


def test_blup_oracle(capsys):
    started = time.time()
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(2000 + seed)
        n = int(rng.integers(1, 6))
        p = int(rng.integers(2, 7))
        labels = [1] * (p // 2) + [2] * (p - p // 2)
        model = random_model(rng, labels, g=1)
        Y = rng.normal(size=(n, p)) * 2
        est = estimate_blups(Y, model)
        comp = model.components[0]
        b_ref, c_ref = joint_gaussian_blups(Y, model.design.X, comp.beta, comp.B, comp.sigma_c_sq, comp.sigma_e_sq)
        worst = max(worst, np.abs(est.b_hat[:, 0] - b_ref).max(), np.abs(est.c_hat[0] - c_ref).max())
    report(capsys, 2, "BLUPs vs joint-Gaussian conditioning", worst <= 1e-6,
           f"max abs error {worst:.2e} over 50 instances (tol 1e-6)", started)


def test_em_ascent(capsys):
    started = time.time()
    violations = 0
    steps = 0
    for seed in range(50):
        rng = np.random.default_rng(3000 + seed)
        g = int(rng.integers(1, 4))
        p = int(rng.integers(4, 11))
        n = int(rng.integers(60, 201))
        labels = [1] * (p // 2) + [2] * (p - p // 2)
        betas = [rng.normal(0, 2, 2) for _ in range(g)]
        Y, _, _ = draw_lmm_mixture(
            rng, n, np.array(labels), np.full(g, 1 / g), betas,
            [rng.uniform(0.2, 1.0, 2) for _ in range(g)], float(rng.uniform(-0.5, 0.8)),
            list(rng.uniform(0.01, 0.5, g)), list(rng.uniform(0.2, 1.5, g)),
        )
        data = ExpressionMatrix.from_array(Y, labels)
        _, path, _, _ = run_em(data, initialize(data, g, seed=seed), max_iter=200)
        diffs = np.diff(path)
        violations += int((diffs < -1e-9).sum())
        steps += diffs.size
    report(capsys, 3, "EM log-likelihood ascent", violations == 0,
           f"{violations} violations in {steps} iterations over 50 datasets", started)


def test_parameter_recovery(capsys):
    started = time.time()
    labels = [1] * 8 + [2] * 8
    truth = [np.array([0.0, 0.5]), np.array([3.0, 3.5])]
    hits = []
    for seed in range(5):
        rng = np.random.default_rng(4000 + seed)
        Y, z, _ = draw_lmm_mixture(
            rng, 2000, np.array(labels), [0.5, 0.5], truth, [np.array([0.5, 0.5])] * 2, 0.3,
            [0.01, 0.01], [0.5, 0.5],
        )
        model, _ = fit_mixture(ExpressionMatrix.from_array(Y, labels), 2, EmConfig(n_starts=3, seed=seed))
        acc = clustering_accuracy(z, model.z_map)
        order = np.argsort(model.beta[:, 0])
        err = np.abs(model.beta[order] - np.array(truth)).max()
        hits.append(acc >= 0.95 and err <= 0.1)
        with capsys.disabled():
            print(f"\n  seed {seed}: accuracy {acc:.4f}, max beta error {err:.4f}")
    report(capsys, 4, "two-component parameter recovery", sum(hits) >= 4,
           f"{sum(hits)}/5 seeds with accuracy >= 0.95 and beta within 0.1 (need 4)", started)


def test_top_ranked_fdp_beats_t_test(capsys):
    started = time.time()
    wins = 0
    for seed in range(10):
        data, truth, analysis = analyse("fig3-set2", seed)
        fdp_c = evaluate_against_truth(truth.is_de, order=rank_genes(analysis.W).order, top=600)[0].fdp
        tt = pooled_t(data)
        order_t = np.argsort(-tt.ranking_key(), kind="stable")
        fdp_t = evaluate_against_truth(truth.is_de, order=order_t, top=600)[0].fdp
        wins += fdp_c <= fdp_t
        with capsys.disabled():
            print(f"\n  seed {seed}: top-600 FDP contrast {fdp_c:.4f}, t-test {fdp_t:.4f}")
    report(capsys, 5, "top-600 FDP, contrast vs t-test (delta=2, rho=0.4)", wins >= 8,
           f"contrast no worse in {wins}/10 replicates (need 8)", started)


BRACKETS = {"table2-set3": (0.92, 0.08), "table2-set4": (0.95, 0.07)}


def test_table_bracket(capsys):
    started = time.time()
    verdicts = []
    for name, (min_power, max_fdp) in BRACKETS.items():
        power, fdp = [], []
        for seed in range(10):
            _, truth, analysis = analyse(name, seed)
            res = infer(analysis.P, method="localfdr", c0=0.1)
            m = evaluate_against_truth(truth.is_de, selected=res.selected)
            power.append(m.power)
            fdp.append(m.fdp)
            with capsys.disabled():
                print(f"\n  {name} seed {seed}: N_r {m.n_selected}, power {m.power:.4f}, FDP {m.fdp:.4f}")
        ok = np.mean(power) >= min_power and np.mean(fdp) <= max_fdp
        verdicts.append((ok, f"{name} power {np.mean(power):.4f} (>= {min_power}) FDP {np.mean(fdp):.4f} "
                             f"(<= {max_fdp}) {'ok' if ok else 'missed'}"))
    report(capsys, 6, "local-FDR selection bracket", all(v[0] for v in verdicts),
           "; ".join(v[1] for v in verdicts), started)


def test_null_calibration(capsys):
    started = time.time()
    ks, bh = [], []
    for seed in range(5):
        _, _, analysis = analyse("null", seed, delta=0.0)
        ks.append(stats.kstest(analysis.P, "uniform").statistic)
        bh.append(benjamini_hochberg(analysis.P, 0.05)[0].mean())
        with capsys.disabled():
            print(f"\n  seed {seed}: KS {ks[-1]:.4f}, BH fraction {bh[-1]:.4f}")
    ok = np.mean(ks) < 0.05 and np.mean(bh) <= 0.01
    report(capsys, 7, "null calibration", ok,
           f"mean KS {np.mean(ks):.4f} (need < 0.05), mean BH fraction {np.mean(bh):.4f} (need <= 0.01)", started)


def test_statistic_identities(capsys):
    started = time.time()
    failures = []
    for seed in range(20):
        rng = np.random.default_rng(8000 + seed)
        p = int(rng.choice([4, 6, 8]))
        labels = [1] * (p // 2) + [2] * (p // 2)
        g = int(rng.integers(1, 4))
        n = int(rng.integers(g, 16))
        model = random_model(rng, labels, g=g, n=n)
        Y = rng.normal(size=(n, p))
        W = contrast_statistics(Y, model)[0]
        plan = PermutationPlan.from_orders(model.class_of_sample, [np.arange(p)])
        if not np.array_equal(replicate_statistics(Y, model, None, plan)[:, 0], W):
            failures.append(f"identity replicate seed {seed}")
        for i in range(model.g):
            blocks = assemble_omega(model, i)
            size = blocks.n_slots
            lam = [contrast_variance(blocks, ContrastVector((1, 2), s, size, 2, p)) for s in range(1, size + 1)]
            if np.ptp(lam) > 1e-12 * max(lam):
                failures.append(f"slot exchangeability seed {seed}")
            for s in (1, size):
                if ContrastVector((1, 2), s, size, 2, p).dense().sum() != 0:
                    failures.append(f"contrast sum seed {seed}")
    report(capsys, 8, "statistic identities", not failures,
           f"{len(failures)} failures over 20 instances" + (f" ({failures[:3]})" if failures else ""), started)


def test_t_fit_sanity(capsys):
    started = time.time()
    nu_t5, nu_norm = [], []
    for seed in range(5):
        rng = np.random.default_rng(9000 + seed)
        nu_t5.append(fit_t_df(stats.t.rvs(5, size=10_000, random_state=rng)).nu)
        nu_norm.append(fit_t_df(rng.standard_normal(10_000)).nu)
    ok = all(4 <= v <= 6.5 for v in nu_t5) and all(v >= 30 for v in nu_norm)
    report(capsys, 9, "t degrees-of-freedom fit", ok,
           f"t5 nu in [{min(nu_t5):.2f}, {max(nu_t5):.2f}] (need [4, 6.5]), "
           f"normal nu min {min(nu_norm):.1f} (need >= 30)", started)
