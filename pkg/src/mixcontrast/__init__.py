"""Differential expression by weighted cluster-specific contrasts.

Feature profiles are clustered with a mixture of linear mixed models;
each feature is then scored by a posterior-weighted, normalized contrast
of the fitted class effects plus its own random effects.  Permutation
replicates give a t null for P-values, and FDR control works either by
Benjamini-Hochberg or by a two-normal local-FDR fit to z-scores.
"""

__version__ = "0.1.0"

from .contrast import (
    ContrastScorer,
    ContrastVector,
    RandomEffectsEstimates,
    RankedTable,
    assemble_omega,
    contrast_statistics,
    contrast_variance,
    estimate_blups,
    rank_genes,
)
from .data import (
    DesignMatrices,
    ExpressionMatrix,
    build_design_matrices,
    column_standardize,
    load_expression_matrix,
    write_expression_matrix,
)
from .em import EmConfig, FitTrace, bic, e_step, fit_mixture, initialize, m_step, run_em, select_g
from .errors import (
    ConditioningError,
    DataError,
    InitializationError,
    MixContrastError,
    NumericalError,
    ParameterDomainError,
)
from .fdr import (
    EvaluationMetrics,
    InferenceResults,
    benjamini_hochberg,
    evaluate_against_truth,
    fit_two_normal_mixture,
    infer,
    select_by_local_fdr,
    z_scores,
)
from .mixture import ComponentParams, MixtureModel, build_B, posterior_tau
from .permutation import NullDistribution, PermutationPlan, fit_t_df, p_values, permute_labels, replicate_statistics
from .pipeline import Analysis, add_pvalues, score_genes
from .simulate import PRESETS, SimConfig, SimulationTruth, generate_dataset, preset
from .ttest import TTestResult, pooled_t
