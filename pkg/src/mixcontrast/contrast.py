"""Cluster-specific contrasts of mixed effects and the weighted statistic.

For gene ``j`` scored against component ``i`` the normalized contrast is

    S_ij = (beta_hi - beta_ki + b_hij - b_kij) / lambda_ij,

where ``lambda_ij^2 = d^T Omega_i d`` and ``Omega_i`` is the inverse of the
mixed-model-equation matrix over ``(beta_i, b_i1..b_in', c_i)``.  The
gene test statistic is ``W_j = sum_i tau_ij S_ij``.

``Omega_i`` is never formed: the ``n' * m`` gene block is eliminated by a
Schur complement that uses the fact that all gene blocks are identical and
couple to ``beta`` and ``c`` through ``1_{n'}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from .em import b_posterior, c_posterior
from .errors import ConditioningError, DataError
from .mixture import MixtureModel


@dataclass(frozen=True)
class RandomEffectsEstimates:
    """BLUPs ``b_hat`` (``n x g x m``), ``c_hat`` (``g x p``) and fixed effects (``g x m``)."""

    b_hat: NDArray[np.float64]
    c_hat: NDArray[np.float64]
    beta_hat: NDArray[np.float64]


@dataclass(frozen=True)
class ContrastVector:
    """Contrast between classes ``h`` and ``k`` (1-based) for the gene in ``slot``.

    ``slot`` is 1-based among ``n_slots`` gene positions of the component.
    """

    class_pair: tuple[int, int]
    slot: int
    n_slots: int
    m: int
    p: int

    def __post_init__(self) -> None:
        h, k = self.class_pair
        if not 1 <= h < k <= self.m:
            raise ValueError(f"class pair {self.class_pair} invalid for m={self.m}")
        if not 1 <= self.slot <= self.n_slots:
            raise ValueError(f"slot {self.slot} outside 1..{self.n_slots}")

    @property
    def class_difference(self) -> NDArray[np.float64]:
        e = np.zeros(self.m)
        e[self.class_pair[0] - 1] = 1.0
        e[self.class_pair[1] - 1] = -1.0
        return e

    def dense(self) -> NDArray[np.float64]:
        """Layout ``beta (m) | b_1..b_n' (m each) | c (p)``."""
        m = self.m
        d = np.zeros(m + m * self.n_slots + self.p)
        e = self.class_difference
        d[:m] = e
        start = m + m * (self.slot - 1)
        d[start:start + m] = e
        return d


@dataclass(frozen=True)
class OmegaBlocks:
    """Distinct blocks of the mixed-model-equation matrix whose inverse is ``Omega_i``.

    Replicated blocks are stored once: ``omega_beta_b`` is repeated ``n_slots``
    times along the gene partition, ``omega_b`` along its diagonal and
    ``omega_bc`` down the gene/c coupling.
    """

    omega_beta: NDArray[np.float64]
    omega_beta_b: NDArray[np.float64]
    omega_beta_c: NDArray[np.float64]
    omega_b: NDArray[np.float64]
    omega_bc: NDArray[np.float64]
    omega_c: NDArray[np.float64]
    n_slots: int
    component: int

    @property
    def m(self) -> int:
        return self.omega_beta.shape[0]

    @property
    def p(self) -> int:
        return self.omega_c.shape[0]


def assemble_omega(model: MixtureModel, i: int, member: bool = True, n_members: int | None = None) -> OmegaBlocks:
    """Blocks for component ``i`` (0-based).

    ``n_members`` defaults to the MAP count of the component; a non-member
    gene is appended as one extra slot.
    """
    if n_members is None:
        n_members = int(model.n_map[i])
    if member and n_members == 0:
        raise DataError(f"component {i + 1} has no members")
    n_slots = n_members if member else n_members + 1
    comp = model.components[i]
    design = model.design
    X, U, V = design.X, design.U, design.V
    a_inv = 1.0 / comp.sigma_e_sq
    B_inv = linalg.cho_solve(linalg.cho_factor(comp.B, lower=True), np.eye(design.m))
    p = design.p
    return OmegaBlocks(
        omega_beta=n_slots * a_inv * (X.T @ X),
        omega_beta_b=a_inv * (X.T @ U),
        omega_beta_c=n_slots * a_inv * (X.T @ V),
        omega_b=a_inv * (U.T @ U) + B_inv,
        omega_bc=a_inv * (U.T @ V),
        omega_c=n_slots * (a_inv * (V.T @ V) + np.eye(p) / max(comp.sigma_c_sq, 1e-300)),
        n_slots=n_slots,
        component=i,
    )


def contrast_variance(blocks: OmegaBlocks, d: ContrastVector) -> float:
    """``d^T Omega d`` via the Schur complement of the gene partition.

    Solving the mixed-model equations for ``d`` and writing ``x_s`` for the
    gene slots gives ``x_s = G^{-1}(delta_s e - K x_beta - F x_c)``, so the
    sum over slots only needs ``n'`` and the system reduces to ``m + p``
    unknowns.
    """
    if d.n_slots != blocks.n_slots or d.m != blocks.m or d.p != blocks.p:
        raise ValueError("contrast vector not dimensioned for these blocks")
    n = blocks.n_slots
    e = d.class_difference
    K = blocks.omega_beta_b
    F = blocks.omega_bc
    G = blocks.omega_b
    try:
        gf = linalg.cho_factor(G, lower=True)
    except linalg.LinAlgError as exc:
        raise ConditioningError("per-gene block is not positive definite") from exc
    Ginv_K = linalg.cho_solve(gf, K)
    Ginv_F = linalg.cho_solve(gf, F)
    Ginv_e = linalg.cho_solve(gf, e)

    top_left = blocks.omega_beta - n * (K.T @ Ginv_K)
    top_right = blocks.omega_beta_c - n * (K.T @ Ginv_F)
    bottom_right = blocks.omega_c - n * (F.T @ Ginv_F)
    reduced = np.block([[top_left, top_right], [top_right.T, bottom_right]])
    rhs = np.concatenate([e - K.T @ Ginv_e, -F.T @ Ginv_e])
    try:
        rf = linalg.cho_factor(reduced, lower=True)
    except linalg.LinAlgError as exc:
        raise ConditioningError(f"reduced system of component {blocks.component + 1} is indefinite") from exc
    x = linalg.cho_solve(rf, rhs)
    m = blocks.m
    x_beta, x_c = x[:m], x[m:]
    x_slot = Ginv_e - Ginv_K @ x_beta - Ginv_F @ x_c
    lam_sq = float(e @ x_beta + e @ x_slot)
    if not lam_sq > 0:
        raise ConditioningError(f"non-positive contrast variance {lam_sq}")
    return lam_sq


def estimate_blups(data, model: MixtureModel) -> RandomEffectsEstimates:
    """``b_hat_ij`` for every gene and component, centred on ``c_hat_i = E[c_i | y]``."""
    Y = data.values if hasattr(data, "values") else np.asarray(data, dtype=float)
    tau = model.tau if model.tau is not None else model.posterior(Y)[0]
    c_hat, _ = c_posterior(Y, model, tau)
    b_hat, _ = b_posterior(Y, model, c_hat)
    return RandomEffectsEstimates(b_hat, c_hat, model.beta.copy())


def normalized_contrast(
    j: int, i: int, estimates: RandomEffectsEstimates, lam: float, class_pair: tuple[int, int] = (1, 2)
) -> float:
    """``(beta_hi - beta_ki + b_hij - b_kij) / lambda`` for 0-based gene ``j`` and component ``i``."""
    h, k = class_pair[0] - 1, class_pair[1] - 1
    num = estimates.beta_hat[i, h] - estimates.beta_hat[i, k] + estimates.b_hat[j, i, h] - estimates.b_hat[j, i, k]
    return float(num / lam)


def weighted_statistic(tau: NDArray[np.float64], S: NDArray[np.float64]) -> NDArray[np.float64]:
    """``W = sum_i tau_i S_i`` along the last axis."""
    return np.einsum("...i,...i->...", tau, S)


class ContrastScorer:
    """Scores profiles against a fitted model with fixed ``beta_hat``, ``c_hat`` and denominators.

    The denominators depend only on the component and on whether the gene
    is a MAP member of it (``n_i`` slots) or appended (``n_i + 1``).  They are
    computed once and reused for permuted data.
    """

    def __init__(self, model: MixtureModel, c_hat: NDArray[np.float64], class_pair: tuple[int, int] = (1, 2)):
        self.model = model.with_(c_hat=np.array(c_hat, dtype=float))
        self.class_pair = class_pair
        self.z_map = model.z_map
        n_map = model.n_map
        design = model.design
        self.lam_member = np.full(model.g, np.nan)
        self.lam_other = np.empty(model.g)
        for i in range(model.g):
            for member in (True, False):
                n_slots = n_map[i] if member else n_map[i] + 1
                if n_slots == 0:
                    continue
                blocks = assemble_omega(model, i, member)
                d = ContrastVector(class_pair, 1, n_slots, design.m, design.p)
                lam = np.sqrt(contrast_variance(blocks, d))
                if member:
                    self.lam_member[i] = lam
                else:
                    self.lam_other[i] = lam
        e = np.zeros(design.m)
        e[class_pair[0] - 1], e[class_pair[1] - 1] = 1.0, -1.0
        self.e = e
        self.beta_diff = model.beta @ e

    def denominators(self) -> NDArray[np.float64]:
        """``(n, g)`` matrix of ``lambda_ij`` for the genes the model was fitted on."""
        n = self.z_map.size
        lam = np.tile(self.lam_other, (n, 1))
        lam[np.arange(n), self.z_map] = self.lam_member[self.z_map]
        return lam

    def score(self, Y: NDArray[np.float64]) -> tuple[NDArray, NDArray, NDArray]:
        """``(W, S, tau)`` for the rows of ``Y``, matched to the fitted genes by row."""
        # column-permuted views take a different BLAS path; a fixed layout keeps results bit-stable
        Y = np.ascontiguousarray(Y, dtype=float)
        tau, _ = self.model.posterior(Y)
        b_hat, _ = b_posterior(Y, self.model, self.model.c_hat)
        S = (self.beta_diff + b_hat @ self.e) / self.denominators()
        return weighted_statistic(tau, S), S, tau


@dataclass(frozen=True)
class RankedTable:
    """Features ordered by decreasing ``|W|``; ``order`` holds 0-based feature indices."""

    order: NDArray[np.int64]
    W: NDArray[np.float64]

    @property
    def ranks(self) -> NDArray[np.int64]:
        """1-based rank of every feature, in feature order (0 if cut off by ``top``)."""
        r = np.zeros(self.W.size, dtype=np.int64)
        r[self.order] = np.arange(1, self.order.size + 1)
        return r

    @property
    def direction(self) -> NDArray[np.str_]:
        """``down`` when class 1 exceeds class 2 (positive W), ``up`` otherwise."""
        return np.where(self.W > 0, "down", "up")


def rank_genes(W, top: int | None = None) -> RankedTable:
    """Order by decreasing ``|W|``, ties by ascending feature index."""
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise ValueError("W must be finite")
    if top is not None and not 0 <= top <= W.size:
        raise ValueError(f"top-{top} requested from {W.size} features")
    order = np.lexsort((np.arange(W.size), -np.abs(W)))
    if top is not None:
        order = order[:top]
    return RankedTable(order, W)


def contrast_statistics(data, model: MixtureModel, estimates: RandomEffectsEstimates | None = None):
    """Weighted statistic for every gene: ``(W, S, tau, scorer)``."""
    Y = data.values if hasattr(data, "values") else np.asarray(data, dtype=float)
    if model.m != 2:
        raise DataError("the contrast statistic is defined for two-class data")
    if estimates is None:
        estimates = estimate_blups(Y, model)
    scorer = ContrastScorer(model, estimates.c_hat)
    W, S, tau = scorer.score(Y)
    return W, S, tau, scorer
