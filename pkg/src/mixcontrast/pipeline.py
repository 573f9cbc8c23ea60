"""End-to-end analysis: standardize, fit, score, permutation P-values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .contrast import ContrastScorer, RandomEffectsEstimates, estimate_blups
from .data import ExpressionMatrix, column_standardize
from .em import EmConfig, FitTrace, fit_mixture
from .mixture import MixtureModel
from .permutation import NullDistribution, fit_t_df, p_values, permute_labels, replicate_statistics


@dataclass
class Analysis:
    data: ExpressionMatrix
    model: MixtureModel
    trace: FitTrace
    estimates: RandomEffectsEstimates
    W: NDArray[np.float64]
    S: NDArray[np.float64]
    tau: NDArray[np.float64]
    replicates: NDArray[np.float64] | None = None
    null: NullDistribution | None = None
    P: NDArray[np.float64] | None = None


def score_genes(data: ExpressionMatrix, g: int = 3, config: EmConfig | None = None) -> Analysis:
    """Fit a ``g``-component model to the column-standardized data and compute W."""
    std = data if data.standardized else column_standardize(data)
    model, trace = fit_mixture(std, g, config)
    estimates = estimate_blups(std, model)
    W, S, tau = ContrastScorer(model, estimates.c_hat).score(std.values)
    return Analysis(std, model, trace, estimates, W, S, tau)


def add_pvalues(analysis: Analysis, n_perms: int = 50, seed: int = 0) -> Analysis:
    """Permutation replicates, pooled t fit and two-sided P-values."""
    plan = permute_labels(analysis.data.class_of_sample, n_perms, seed)
    reps = replicate_statistics(analysis.data, analysis.model, analysis.estimates, plan)
    null = fit_t_df(reps.ravel())
    analysis.replicates = reps
    analysis.null = null
    analysis.P = p_values(analysis.W, null)
    return analysis
