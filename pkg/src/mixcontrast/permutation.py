"""Permutation null distribution of the weighted statistic and P-values.

Class labels are permuted globally (every gene sees the same arrangement);
the fitted parameters, ``c_hat`` and the contrast denominators are kept
from the unpermuted fit and only ``tau`` and ``b_hat`` are recomputed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import stats
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .contrast import ContrastScorer, RandomEffectsEstimates, estimate_blups
from .mixture import MixtureModel

NU_BOUNDS = (1.0, 200.0)


@dataclass(frozen=True)
class PermutationPlan:
    """``B`` column rearrangements of the samples.

    ``column_orders[b]`` gives the permuted matrix as ``values[:, column_orders[b]]``;
    ``arrangements[b]`` is the class label each original sample receives.
    """

    column_orders: NDArray[np.int64]
    arrangements: NDArray[np.int64]
    seed: int | None
    with_replacement: bool = False

    @property
    def B(self) -> int:
        return self.column_orders.shape[0]

    @classmethod
    def from_orders(cls, labels, orders, seed=None) -> PermutationPlan:
        labels = np.asarray(labels)
        orders = np.atleast_2d(np.asarray(orders, dtype=np.int64))
        arrangements = np.empty_like(orders)
        for b, order in enumerate(orders):
            arrangements[b, order] = labels
        return cls(orders, arrangements, seed)


def count_arrangements(labels) -> int:
    """Number of distinct label vectors obtainable by permuting ``labels``."""
    counts = np.unique(np.asarray(labels), return_counts=True)[1]
    total = math.factorial(int(counts.sum()))
    for c in counts:
        total //= math.factorial(int(c))
    return total


def permute_labels(labels, B: int, seed: int) -> PermutationPlan:
    """Draw ``B`` non-identity label arrangements.

    Arrangements are distinct when enough exist; otherwise they are drawn
    with replacement and the plan is flagged.
    """
    labels = np.asarray(labels, dtype=np.int64)
    p = labels.size
    if B < 1:
        raise ValueError("B must be >= 1")
    if p < 4:
        raise ValueError(f"need at least 4 samples to permute, got {p}")
    available = count_arrangements(labels) - 1
    if available < 2:
        raise ValueError("label multiset admits fewer than 2 non-identity arrangements")
    with_replacement = B > available
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    seen: set[bytes] = set()
    orders = []
    arrangements = []
    while len(orders) < B:
        order = rng.permutation(p)
        arr = np.empty(p, dtype=np.int64)
        arr[order] = labels
        if np.array_equal(arr, labels):
            continue
        key = arr.tobytes()
        if not with_replacement:
            if key in seen:
                continue
            seen.add(key)
        orders.append(order)
        arrangements.append(arr)
    return PermutationPlan(np.array(orders), np.array(arrangements), seed, with_replacement)


def replicate_statistics(
    data,
    model: MixtureModel,
    estimates: RandomEffectsEstimates | None,
    plan: PermutationPlan,
) -> NDArray[np.float64]:
    """``(n, B)`` matrix of permutation replicates of the weighted statistic."""
    Y = data.values if hasattr(data, "values") else np.asarray(data, dtype=float)
    if estimates is None:
        estimates = estimate_blups(Y, model)
    scorer = ContrastScorer(model, estimates.c_hat)
    out = np.empty((Y.shape[0], plan.B))
    for b, order in enumerate(plan.column_orders):
        out[:, b] = scorer.score(Y[:, order])[0]
    return out


@dataclass(frozen=True)
class NullDistribution:
    """Location-scale t fitted to pooled null replicates."""

    mu: float
    s: float
    nu: float
    loglik: float
    n_values: int

    def __iter__(self):
        return iter((self.mu, self.s, self.nu))


def t_loglik(x: NDArray[np.float64], mu: float, s: float, nu: float) -> float:
    r2 = ((x - mu) / s) ** 2
    const = gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * math.log(nu * math.pi) - math.log(s)
    return float(x.size * const - 0.5 * (nu + 1) * np.log1p(r2 / nu).sum())


def _fit_location_scale(x, nu, mu, s, max_iter=500, tol=1e-10):
    """EM for the t location and scale at fixed ``nu``."""
    for _ in range(max_iter):
        w = (nu + 1) / (nu + ((x - mu) / s) ** 2)
        mu_new = float(w @ x / w.sum())
        s_new = math.sqrt(float(w @ (x - mu_new) ** 2) / x.size)
        done = abs(mu_new - mu) <= tol * s and abs(s_new - s) <= tol * s
        mu, s = mu_new, s_new
        if done:
            break
    return mu, s


def fit_t_df(pooled, nu_tol: float = 1e-4) -> NullDistribution:
    """Maximum-likelihood location-scale t by profiling over ``nu`` in ``[1, 200]``."""
    x = np.asarray(pooled, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("pooled null values must be finite")
    if x.size < 500:
        raise ValueError(f"need at least 500 pooled values, got {x.size}")
    mu0 = float(np.median(x))
    s0 = float(stats.median_abs_deviation(x, scale="normal")) or float(x.std()) or 1.0
    cache: dict[float, tuple[float, float, float]] = {}

    def profile(nu):
        nu = float(nu)
        if nu not in cache:
            mu, s = _fit_location_scale(x, nu, mu0, s0)
            cache[nu] = (t_loglik(x, mu, s, nu), mu, s)
        return cache[nu]

    grid = np.geomspace(*NU_BOUNDS, 30)
    values = [profile(nu)[0] for nu in grid]
    k = int(np.argmax(values))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    minimize_scalar(lambda nu: -profile(nu)[0], bounds=(lo, hi), method="bounded", options={"xatol": nu_tol})
    # every evaluated nu is cached, including the grid; keep the best seen
    nu, (ll, mu, s) = max(cache.items(), key=lambda kv: kv[1][0])
    return NullDistribution(mu, s, nu, ll, x.size)


def p_values(W, null: NullDistribution) -> NDArray[np.float64]:
    """Two-sided ``2 Pr(T_nu > |W - mu| / s)``."""
    W = np.asarray(W, dtype=float)
    return np.minimum(2.0 * stats.t.sf(np.abs(W - null.mu) / null.s, null.nu), 1.0)
