"""Multiple-testing control and truth-based evaluation.

Benjamini-Hochberg step-up, probit z-scores, a two-normal mixture for the
local false discovery rate, and the FDP / FNDP / power bookkeeping used to
score selections against simulated ground truth.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import stats

log = logging.getLogger(__name__)

P_CLAMP = 1e-15


def benjamini_hochberg(P, alpha: float = 0.05) -> tuple[NDArray[np.bool_], NDArray[np.float64]]:
    """Step-up selection at level ``alpha`` and the monotone BH q-values."""
    P = np.asarray(P, dtype=float)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    n = P.size
    order = np.argsort(P, kind="stable")
    ranked = P[order]
    k = np.arange(1, n + 1)
    below = np.flatnonzero(ranked <= alpha * k / n)
    selected = np.zeros(n, dtype=bool)
    if below.size:
        selected[order[: below[-1] + 1]] = True
    q_sorted = np.minimum.accumulate((n * ranked / k)[::-1])[::-1]
    q = np.empty(n)
    q[order] = np.minimum(q_sorted, 1.0)
    return selected, q


def z_scores(P) -> NDArray[np.float64]:
    """``Phi^{-1}(1 - P)``; P-values of exactly 0 or 1 are clamped."""
    P = np.asarray(P, dtype=float)
    clamped = np.clip(P, P_CLAMP, 1 - P_CLAMP)
    if np.any(clamped != P):
        warnings.warn("P-values of 0 or 1 clamped before the probit transform", RuntimeWarning, stacklevel=2)
    return stats.norm.isf(clamped)


@dataclass(frozen=True)
class TwoNormalFit:
    pi0: float
    mu0: float
    sd0: float
    mu1: float
    sd1: float
    local_fdr: NDArray[np.float64]
    loglik: float
    iterations: int
    converged: bool
    flagged: bool = False
    collapsed: bool = False


def fit_two_normal_mixture(
    z, theoretical_null: bool = False, max_iter: int = 5000, rel_tol: float = 1e-8
) -> TwoNormalFit:
    """EM fit of ``pi0 N(mu0, sd0^2) + (1 - pi0) N(mu1, sd1^2)`` to z-scores.

    The null is the component with the smaller mean.  With
    ``theoretical_null`` it is pinned to ``N(0, 1)``.

    When the two-normal fit does not beat a single normal by BIC (three
    extra parameters, ``log n`` each), the non-null component is discarded:
    ``pi0 = 1``, every local FDR is 1 and ``collapsed`` is set.
    """
    z = np.asarray(z, dtype=float)
    if z.size < 100:
        raise ValueError(f"need at least 100 z-scores, got {z.size}")
    pi0, mu0, sd0 = 0.9, 0.0, 1.0
    mu1, sd1 = float(np.percentile(z, 90)), 1.0
    flagged = False
    prev = -np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        l0 = np.log(pi0) + stats.norm.logpdf(z, mu0, sd0)
        l1 = np.log1p(-pi0) + stats.norm.logpdf(z, mu1, sd1)
        total = np.logaddexp(l0, l1)
        ll = float(total.sum())
        w0 = np.exp(l0 - total)
        w1 = 1.0 - w0
        if it > 1 and abs(ll - prev) <= rel_tol * abs(prev):
            converged = True
            break
        prev = ll
        n0, n1 = w0.sum(), w1.sum()
        pi0 = float(np.clip(n0 / z.size, 1e-12, 1 - 1e-12))
        if not theoretical_null:
            mu0 = float(w0 @ z / n0)
            sd0 = float(np.sqrt(w0 @ (z - mu0) ** 2 / n0))
        if n1 > 1e-12:
            mu1 = float(w1 @ z / n1)
            sd1 = float(np.sqrt(w1 @ (z - mu1) ** 2 / n1))
        if sd0 < 1e-6 or sd1 < 1e-6:
            sd0, sd1 = max(sd0, 1e-6), max(sd1, 1e-6)
            flagged = True
    if mu1 < mu0 and not theoretical_null:
        pi0, mu0, sd0, mu1, sd1 = 1 - pi0, mu1, sd1, mu0, sd0
        w0 = 1.0 - w0
    single_mu, single_sd = (0.0, 1.0) if theoretical_null else (float(z.mean()), float(z.std()))
    single_ll = float(stats.norm.logpdf(z, single_mu, single_sd).sum())
    if 2.0 * (ll - single_ll) < 3.0 * np.log(z.size):
        log.info("two-normal fit does not improve on one normal by BIC; all features treated as null")
        return TwoNormalFit(1.0, single_mu, single_sd, mu1, sd1, np.ones(z.size), single_ll, it, converged,
                            flagged, collapsed=True)
    return TwoNormalFit(pi0, mu0, sd0, mu1, sd1, w0, ll, it, converged, flagged)


def select_by_local_fdr(local_fdr, c0: float = 0.1) -> tuple[NDArray[np.bool_], float, bool]:
    """Select ``local_fdr < c0``; returns ``(selected, implied FDR, empty)``.

    The implied FDR is the mean local FDR over the selection, or 0 when
    nothing is selected.
    """
    local_fdr = np.asarray(local_fdr, dtype=float)
    if not 0 < c0 <= 1:
        raise ValueError("c0 must lie in (0, 1]")
    selected = local_fdr < c0 if c0 < 1 else np.ones(local_fdr.size, dtype=bool)
    if not selected.any():
        return selected, 0.0, True
    return selected, float(local_fdr[selected].mean()), False


@dataclass
class InferenceResults:
    """Per-feature P-values, z-scores, local FDR, BH q-values and the selection."""

    P: NDArray[np.float64]
    z: NDArray[np.float64]
    local_fdr: NDArray[np.float64]
    bh_q: NDArray[np.float64]
    selected: NDArray[np.bool_]
    method: str
    alpha: float | None = None
    c0: float | None = None
    implied_fdr: float | None = None
    mixture: TwoNormalFit | None = field(default=None, repr=False)


def infer(P, method: str = "localfdr", alpha: float = 0.05, c0: float = 0.1, theoretical_null: bool = False):
    """Apply one selection rule to P-values and fill every per-feature column."""
    P = np.asarray(P, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        z = z_scores(P)
    _, q = benjamini_hochberg(P, alpha)
    fit = fit_two_normal_mixture(z, theoretical_null=theoretical_null)
    if method == "bh":
        selected, _ = benjamini_hochberg(P, alpha)
        return InferenceResults(P, z, fit.local_fdr, q, selected, "bh", alpha=alpha, mixture=fit)
    if method == "localfdr":
        selected, implied, _ = select_by_local_fdr(fit.local_fdr, c0)
        return InferenceResults(P, z, fit.local_fdr, q, selected, "localfdr", c0=c0, implied_fdr=implied, mixture=fit)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class EvaluationMetrics:
    n_selected: int
    fdp: float
    fndp: float
    power: float
    false_positives: int
    false_negatives: int
    n_de: int
    n: int


def _is_de(truth) -> NDArray[np.bool_]:
    return np.asarray(getattr(truth, "is_de", truth), dtype=bool)


def evaluate_selection(selected, truth) -> EvaluationMetrics:
    """FDP, FNDP and power of a selection against the true DE labels."""
    selected = np.asarray(selected, dtype=bool)
    is_de = _is_de(truth)
    if selected.shape != is_de.shape:
        raise ValueError(f"truth has {is_de.size} features, selection has {selected.size}")
    n = is_de.size
    n_sel = int(selected.sum())
    fp = int((selected & ~is_de).sum())
    fn = int((~selected & is_de).sum())
    n_de = int(is_de.sum())
    fdp = fp / n_sel if n_sel else 0.0
    fndp = fn / (n - n_sel) if n - n_sel else 0.0
    power = 1.0 - fn / n_de if n_de else 0.0
    return EvaluationMetrics(n_sel, fdp, fndp, power, fp, fn, n_de, n)


def fdp_curve(order, truth, K: int | None = None) -> NDArray[np.float64]:
    """FDP among the top ``k`` ranked features for ``k = 1..K``."""
    is_de = _is_de(truth)
    order = np.asarray(order)
    if order.size != is_de.size and K is None:
        raise ValueError("ranking does not cover every feature; pass K")
    K = order.size if K is None else K
    nulls = np.cumsum(~is_de[order[:K]])
    return nulls / np.arange(1, K + 1)


def evaluate_against_truth(truth, selected=None, order=None, top: int | None = None):
    """Metrics for a selection, or for the top-``top`` features of a ranking.

    With a ranking the FDP curve up to ``top`` is returned as well.
    """
    is_de = _is_de(truth)
    if selected is not None:
        return evaluate_selection(selected, is_de)
    if order is None:
        raise ValueError("pass either a selection or a ranking")
    order = np.asarray(order)
    if order.max(initial=-1) >= is_de.size:
        raise ValueError("ranking refers to features beyond the truth table")
    top = order.size if top is None else top
    sel = np.zeros(is_de.size, dtype=bool)
    sel[order[:top]] = True
    return evaluate_selection(sel, is_de), fdp_curve(order, is_de, top)
