"""Maximum-likelihood fitting of the mixture of LMMs.

The fitted log-likelihood conditions on the shared random-effect
estimates ``c_hat``:

    L = sum_j log sum_i pi_i N(y_j; X beta_i + c_hat_i, U B_i U^T + A_i).

Each iteration is an ECM cycle that cannot decrease ``L``:

1. ``c_hat`` moves to its conditional posterior mean, or halfway there, if
   that does not lower ``L``; otherwise it stays.  ``L`` does not involve
   ``sigma_c^2``, which is updated from the posterior moments of ``c_i``
   whether or not the offset moved.
2. E-step at the accepted ``c_hat``: posterior probabilities and the
   conditional moments of the gene random effects ``b_ij``.
3. CM-steps: closed forms for ``pi``, ``beta``, ``sigma_e^2``; coordinate
   ascent for the ``sigma_b`` vectors and a bounded line search for the
   shared ``rho``, each accepted only if the expected complete-data
   log-likelihood does not decrease.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import linalg
from scipy.cluster.vq import ClusterError, kmeans2
from scipy.optimize import minimize_scalar

from .data import ExpressionMatrix, build_design_matrices
from .errors import InitializationError, NumericalError
from .mixture import (
    LOG_2PI,
    ComponentParams,
    MixtureModel,
    cholesky_or_raise,
    conditional_covariance,
    rho_bounds,
)

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-10
_C_STEP_SIZES = (1.0, 0.5)
_KMEANS_ATTEMPTS = 20


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 2000
    rel_tol: float = 1e-8
    n_starts: int = 10
    seed: int = 0
    g_range: tuple[int, int] = (1, 1)
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        lo, hi = self.g_range
        if lo < 1 or hi < lo:
            raise ValueError(f"invalid g_range {self.g_range}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class FitTrace:
    """Log-likelihood path of the selected EM run.

    ``segments`` holds one log-likelihood path per EM pass; a new pass
    starts whenever an empty component is dropped.
    """

    loglik: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    best_start: int = 0
    segments: list[list[float]] = field(default_factory=list)
    dropped: int = 0
    floored: set[str] = field(default_factory=set)
    start_logliks: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class EStep:
    """Posterior quantities from one E-step.

    Attributes:
        tau: ``(n, g)`` posterior component probabilities.
        b_hat: ``(n, g, m)`` conditional means of ``b_ij``.
        b_cov: ``(g, m, m)`` conditional covariance of ``b_ij`` (same for all j).
        c_hat: ``(g, p)`` shared random-effect estimates ``b_hat`` is centred on.
        c_cov: ``(g, p, p)`` posterior covariance of ``c_i``.
        c_mean: ``(g, p)`` posterior mean of ``c_i``; defaults to ``c_hat``.
        loglik: log-likelihood at the model the E-step started from.
    """

    tau: NDArray[np.float64]
    b_hat: NDArray[np.float64]
    b_cov: NDArray[np.float64]
    c_hat: NDArray[np.float64]
    c_cov: NDArray[np.float64]
    loglik: float
    c_mean: NDArray[np.float64] | None = None

    @property
    def c_moment(self) -> NDArray[np.float64]:
        mean = self.c_hat if self.c_mean is None else self.c_mean
        return np.einsum("ij,ij->i", mean, mean) + np.trace(self.c_cov, axis1=1, axis2=2)


def _values(data) -> NDArray[np.float64]:
    return data.values if isinstance(data, ExpressionMatrix) else np.asarray(data, dtype=float)


def b_posterior(
    Y: NDArray[np.float64], model: MixtureModel, c_hat: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Conditional mean and covariance of ``b_ij`` given ``y_j``, ``z_ij = 1`` and ``c_i``.

    ``b_hat_ij = B_i U^T Sigma_i^{-1} (y_j - X beta_i - c_i)``.
    """
    design = model.design
    n = Y.shape[0]
    b_hat = np.empty((n, model.g, model.m))
    b_cov = np.empty((model.g, model.m, model.m))
    for i, comp in enumerate(model.components):
        B = comp.B
        cf = cholesky_or_raise(conditional_covariance(comp, design), f"covariance of component {i + 1}")
        gain = linalg.cho_solve(cf, design.U @ B).T  # B U^T Sigma^{-1}
        resid = Y - (design.X @ comp.beta + c_hat[i])
        b_hat[:, i, :] = resid @ gain.T
        b_cov[i] = B - gain @ design.U @ B
    return b_hat, 0.5 * (b_cov + b_cov.transpose(0, 2, 1))


def c_posterior(
    Y: NDArray[np.float64], model: MixtureModel, tau: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Posterior mean and covariance of each ``c_i``, members weighted by ``tau``.

    This is the fixed point of alternating the ``b`` and ``c`` conditional
    updates: ``(N_i Sigma_i^{-1} + C_i^{-1})^{-1} Sigma_i^{-1} sum_j tau_ij (y_j - X beta_i)``.
    """
    design = model.design
    p = design.p
    c_hat = np.zeros((model.g, p))
    c_cov = np.zeros((model.g, p, p))
    for i, comp in enumerate(model.components):
        if comp.sigma_c_sq <= 0:
            continue
        cf = cholesky_or_raise(conditional_covariance(comp, design), f"covariance of component {i + 1}")
        w = tau[:, i]
        n_i = w.sum()
        resid_sum = w @ Y - n_i * (design.X @ comp.beta)
        sigma_inv = linalg.cho_solve(cf, np.eye(p))
        precision = n_i * sigma_inv + np.eye(p) / comp.sigma_c_sq
        pf = cholesky_or_raise(precision, f"posterior precision of c for component {i + 1}")
        c_hat[i] = linalg.cho_solve(pf, sigma_inv @ resid_sum)
        c_cov[i] = linalg.cho_solve(pf, np.eye(p))
    return c_hat, c_cov


def e_step(data, model: MixtureModel) -> EStep:
    """Posterior probabilities and random-effect predictions.

    ``tau`` is evaluated at the model's current ``c_hat``; the returned
    ``c_hat`` is the conditional mean ``E[c_i | y]`` and ``b_hat`` is
    centred on it, so for ``g = 1`` both equal the exact conditional
    expectations under the joint Gaussian model.
    """
    Y = _values(data)
    tau, log_mix = model.posterior(Y)
    c_hat, c_cov = c_posterior(Y, model, tau)
    b_hat, b_cov = b_posterior(Y, model, c_hat)
    return EStep(tau, b_hat, b_cov, c_hat, c_cov, float(log_mix.sum()))


# -- M-step ------------------------------------------------------------------


def _corr(rho: float, m: int) -> NDArray[np.float64]:
    R = np.full((m, m), rho)
    np.fill_diagonal(R, 1.0)
    return R


def _equicorr_inverse(rho: float, m: int) -> tuple[NDArray[np.float64], float]:
    """Inverse and log-determinant of the ``m x m`` equicorrelation matrix."""
    denom = 1.0 + (m - 1) * rho
    inv = (np.eye(m) - rho / denom * np.ones((m, m))) / (1.0 - rho)
    return inv, (m - 1) * math.log1p(-rho) + math.log(denom)


def _rho_profile(sigma_b: NDArray, S: NDArray, weights: NDArray):
    """``rho -> `` the B part of Q at fixed ``sigma_b``, from one aggregated matrix."""
    m = sigma_b.shape[1]
    scaled = S / (sigma_b[:, :, None] * sigma_b[:, None, :])
    T = np.einsum("i,ihk->hk", weights, scaled)
    total = float(weights.sum())
    const = 2.0 * float(weights @ np.log(sigma_b).sum(axis=1))

    def objective(rho: float) -> float:
        inv, logdet = _equicorr_inverse(rho, m)
        return -total * logdet - float((inv * T).sum()) - const

    return objective


def _b_objective(sigma_b: NDArray, rho: float, S: NDArray, weights: NDArray) -> float:
    """``sum_i N_i (-log|B_i| - tr(B_i^{-1} S_i))``, the rho/sigma_b part of Q (times 2)."""
    w = np.where(weights > 0, weights, 0.0)
    return _rho_profile(sigma_b, S, w)(rho)


def _update_sigma_b(sig: NDArray, inv_corr: NDArray, S_i: NDArray, floor: float) -> NDArray:
    """Coordinate ascent on ``u = 1/sigma_b`` for a fixed correlation matrix.

    The objective ``2 sum log u_h - u^T (R^{-1} o S) u`` is concave in ``u``;
    each coordinate has a closed-form maximizer.
    """
    m = sig.size
    Q = inv_corr * S_i
    u = 1.0 / sig
    u_max = 1.0 / math.sqrt(floor)
    for _ in range(200):
        u_old = u.copy()
        for h in range(m):
            a = Q[h] @ u - Q[h, h] * u[h]
            qhh = Q[h, h]
            if qhh <= 0:
                u[h] = u_max
                continue
            u[h] = min((-a + math.sqrt(a * a + 4.0 * qhh)) / (2.0 * qhh), u_max)
        if np.max(np.abs(u - u_old) / u) < 1e-13:
            break
    return 1.0 / u


def _update_b_params(
    sigma_b: NDArray, rho: float, S: NDArray, weights: NDArray, floored: set[str]
) -> tuple[NDArray, float]:
    """Conditional maximization over ``sigma_b`` then ``rho``, each kept only if Q does not drop."""
    m = sigma_b.shape[1]
    lo, hi = rho_bounds(m)
    w = np.where(weights > 0, weights, 0.0)
    current = _b_objective(sigma_b, rho, S, w)
    new_sig = sigma_b.copy()
    inv_corr = _equicorr_inverse(rho, m)[0]
    for i in range(len(sigma_b)):
        if w[i] > 0:
            new_sig[i] = _update_sigma_b(sigma_b[i], inv_corr, S[i], VARIANCE_FLOOR)
    val = _b_objective(new_sig, rho, S, w)
    if val >= current:
        sigma_b, current = new_sig, val
    if m >= 2:
        objective = _rho_profile(sigma_b, S, w)
        res = minimize_scalar(lambda r: -objective(r), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        cand = float(np.clip(res.x, lo, hi))
        if objective(cand) >= current:
            rho = cand
    if np.any(sigma_b**2 <= VARIANCE_FLOOR * (1 + 1e-9)):
        floored.add("sigma_b")
    return sigma_b, rho


def m_step(
    data, est: EStep, model: MixtureModel, floored: set[str] | None = None
) -> MixtureModel:
    """Conditional maximization of the expected complete-data log-likelihood.

    ``est.c_hat`` is held fixed as the mean offset of each component.
    Variances falling below ``1e-10`` are floored and the parameter name is
    added to ``floored``.
    """
    Y = _values(data)
    floored = set() if floored is None else floored
    design = model.design
    X = design.X
    n, p = Y.shape
    weights = est.tau.sum(axis=0)
    pi = weights / n
    xtx_inv = 1.0 / design.class_sizes

    comps = list(model.components)
    sigma_b = np.array([c.sigma_b for c in comps])
    S = np.empty((model.g, model.m, model.m))
    betas, sig_e, sig_c = [], [], []
    for i, comp in enumerate(comps):
        w = est.tau[:, i]
        n_i = weights[i]
        if n_i <= 1e-8 * n:
            betas.append(comp.beta)
            sig_e.append(comp.sigma_e_sq)
            sig_c.append(comp.sigma_c_sq)
            S[i] = comp.B
            weights[i] = 0.0
            continue
        fitted_b = est.b_hat[:, i, :] @ X.T
        target = Y - fitted_b - est.c_hat[i]
        beta = xtx_inv * ((w @ target) @ X) / n_i
        resid = target - X @ beta
        quad = w @ np.einsum("ij,ij->i", resid, resid) + n_i * np.trace(X @ est.b_cov[i] @ X.T)
        s_e = quad / (p * n_i)
        if s_e < VARIANCE_FLOOR:
            s_e = VARIANCE_FLOOR
            floored.add("sigma_e_sq")
        s_c = est.c_moment[i] / p
        if s_c < VARIANCE_FLOOR:
            s_c = VARIANCE_FLOOR
            floored.add("sigma_c_sq")
        bb = np.einsum("j,jh,jk->hk", w, est.b_hat[:, i, :], est.b_hat[:, i, :])
        S[i] = bb / n_i + est.b_cov[i]
        betas.append(beta)
        sig_e.append(s_e)
        sig_c.append(s_c)

    sigma_b, rho = _update_b_params(sigma_b, model.rho, S, weights, floored)
    new_comps = tuple(
        ComponentParams(pi[i], betas[i], sigma_b[i], rho, sig_c[i], sig_e[i]) for i in range(model.g)
    )
    return model.with_(components=new_comps, c_hat=est.c_hat, tau=est.tau)


def expected_complete_loglik(data, model: MixtureModel, est: EStep) -> float:
    """Q-function: expected complete-data log-likelihood of ``model`` under ``est``.

    The component offsets are taken from ``est.c_hat``.
    """
    Y = _values(data)
    X = model.design.X
    p, m = X.shape
    total = 0.0
    for i, comp in enumerate(model.components):
        w = est.tau[:, i]
        if w.sum() == 0:
            continue
        resid = Y - X @ comp.beta - est.c_hat[i] - est.b_hat[:, i, :] @ X.T
        quad = np.einsum("ij,ij->i", resid, resid) + np.trace(X @ est.b_cov[i] @ X.T)
        log_y = -0.5 * (p * (LOG_2PI + math.log(comp.sigma_e_sq)) + quad / comp.sigma_e_sq)
        B = comp.B
        cf = linalg.cho_factor(B, lower=True)
        logdet_b = 2.0 * np.log(np.diag(cf[0])).sum()
        Binv = linalg.cho_solve(cf, np.eye(m))
        bq = np.einsum("jh,hk,jk->j", est.b_hat[:, i, :], Binv, est.b_hat[:, i, :]) + np.trace(Binv @ est.b_cov[i])
        log_b = -0.5 * (m * LOG_2PI + logdet_b + bq)
        with np.errstate(divide="ignore"):
            log_pi = math.log(comp.pi) if comp.pi > 0 else -np.inf
        total += float(w @ (log_pi + log_y + log_b))
    return total


# -- initialization and the EM loop --------------------------------------------


def _start_seed(seed: int, start: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(start)])


def initialize(data, g: int, seed: int = 0, start: int = 0, class_of_sample=None) -> MixtureModel:
    """Starting values from k-means on the profile rows.

    The returned model's ``tau`` is the one-hot k-means partition.
    """
    Y = _values(data)
    labels = data.class_of_sample if class_of_sample is None else np.asarray(class_of_sample)
    n, p = Y.shape
    if g < 1 or g > n / 10:
        raise InitializationError(f"g={g} outside 1..n/10 (n={n})")
    design = build_design_matrices(labels)
    X = design.X
    class_sizes = design.class_sizes
    m = design.m

    rng = np.random.default_rng(_start_seed(seed, start))
    z = None
    if g == 1:
        z = np.zeros(n, dtype=int)
    else:
        for _ in range(_KMEANS_ATTEMPTS):
            try:
                _, z = kmeans2(Y, g, minit="++", missing="raise", seed=rng)
            except ClusterError:
                continue
            if np.bincount(z, minlength=g).min() > 0:
                break
            z = None
        if z is None:
            raise InitializationError(f"k-means left an empty cluster in {_KMEANS_ATTEMPTS} attempts")

    counts = np.bincount(z, minlength=g)
    pi = np.maximum(counts / n, 1.0 / (10 * g))
    pi = pi / pi.sum()
    comps = []
    for i in range(g):
        Yi = Y[z == i]
        gene_means = (Yi @ X) / class_sizes
        beta = gene_means.mean(axis=0)
        sd = gene_means.std(axis=0, ddof=1) if len(Yi) > 1 else np.zeros(m)
        sigma_b = np.maximum(sd, 1e-3)
        resid = Yi - gene_means @ X.T
        dof = max(len(Yi) * (p - m), 1)
        sigma_e = max(float((resid**2).sum() / dof), 1e-6)
        comps.append(ComponentParams(pi[i], beta, sigma_b, 0.0, 0.01, sigma_e))
    tau = np.zeros((n, g))
    tau[np.arange(n), z] = 1.0
    return MixtureModel(tuple(comps), design, np.zeros((g, p)), tau=tau)


def _c_step(Y, model: MixtureModel, tau, loglik: float):
    """Move ``c_hat`` towards its posterior mean without lowering the log-likelihood."""
    proposal, c_cov = c_posterior(Y, model, tau)
    old = model.c_hat
    for step in _C_STEP_SIZES:
        cand = model.with_(c_hat=old + step * (proposal - old))
        cand_tau, log_mix = cand.posterior(Y)
        cand_ll = float(log_mix.sum())
        if cand_ll >= loglik:
            return cand, cand_tau, cand_ll, proposal, c_cov
    return model, tau, loglik, proposal, c_cov


def run_em(data, model: MixtureModel, max_iter: int = 2000, rel_tol: float = 1e-8):
    """Iterate ECM cycles from ``model``; returns ``(model, loglik path, converged, floored)``."""
    Y = _values(data)
    tau, log_mix = model.posterior(Y)
    loglik = float(log_mix.sum())
    if not np.isfinite(loglik):
        raise NumericalError("non-finite log-likelihood at start")
    path = [loglik]
    floored: set[str] = set()
    converged = False
    for _ in range(max_iter):
        model, tau, loglik_c, c_mean, c_cov = _c_step(Y, model, tau, loglik)
        b_hat, b_cov = b_posterior(Y, model, model.c_hat)
        est = EStep(tau, b_hat, b_cov, model.c_hat, c_cov, loglik_c, c_mean)
        model = m_step(Y, est, model, floored)
        tau, log_mix = model.posterior(Y)
        new = float(log_mix.sum())
        if not np.isfinite(new):
            raise NumericalError("non-finite log-likelihood during EM")
        path.append(new)
        change = abs(new - loglik)
        loglik = new
        if change <= rel_tol * abs(loglik):
            converged = True
            break
    model = model.with_(tau=tau, log_likelihood=loglik)
    return model, path, converged, floored


def _drop_empty(model: MixtureModel) -> MixtureModel | None:
    keep = model.n_map > 0
    if keep.all() or keep.sum() == 0:
        return None
    comps = [c for c, k in zip(model.components, keep) if k]
    total = sum(c.pi for c in comps)
    comps = [ComponentParams(c.pi / total, c.beta, c.sigma_b, c.rho, c.sigma_c_sq, c.sigma_e_sq) for c in comps]
    return model.with_(components=tuple(comps), c_hat=model.c_hat[keep], tau=None)


def _fit_from_start(data, g: int, config: EmConfig, start: int):
    model = initialize(data, g, config.seed, start)
    trace = FitTrace(best_start=start)
    while True:
        model, path, converged, floored = run_em(data, model, config.max_iter, config.rel_tol)
        trace.segments.append(path)
        trace.floored |= floored
        trace.iterations += len(path) - 1
        trace.converged = converged
        reduced = _drop_empty(model)
        if reduced is None:
            break
        log.info("start %d: dropping %d empty component(s)", start, model.g - reduced.g)
        trace.dropped += model.g - reduced.g
        model = reduced
    trace.loglik = trace.segments[-1]
    return model, trace


def n_free_parameters(g: int, m: int) -> int:
    """Mixing weights, betas, sigma_b's, sigma_e's, sigma_c's and the shared rho."""
    return (g - 1) + g * m + g * m + g + g + 1


def bic(model: MixtureModel, data) -> float:
    """``-2 L + d log n`` with ``n`` the number of features."""
    Y = _values(data)
    loglik = model.loglik(Y)
    return -2.0 * loglik + n_free_parameters(model.g, model.m) * math.log(Y.shape[0])


def fit_mixture(data: ExpressionMatrix, g: int, config: EmConfig | None = None) -> tuple[MixtureModel, FitTrace]:
    """Best-of-``n_starts`` EM fit with ``g`` components."""
    config = config or EmConfig()
    results = []

    def one(start):
        try:
            return _fit_from_start(data, g, config, start)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            log.warning("start %d failed: %s", start, exc)
            return exc

    if config.n_jobs != 1 and config.n_starts > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=config.n_jobs, prefer="threads")(delayed(one)(s) for s in range(config.n_starts))
    else:
        results = [one(s) for s in range(config.n_starts)]

    ok = [(s, r) for s, r in enumerate(results) if not isinstance(r, Exception)]
    if not ok:
        raise InitializationError(f"all {config.n_starts} starts failed; last error: {results[-1]}")
    # first start wins ties so the choice does not depend on scheduling
    best_start, (model, trace) = max(ok, key=lambda sr: (sr[1][0].log_likelihood, -sr[0]))
    trace.best_start = best_start
    trace.start_logliks = [float("nan") if isinstance(r, Exception) else r[0].log_likelihood for r in results]
    model = model.with_(bic=bic(model, data))
    return model, trace


def select_g(data: ExpressionMatrix, config: EmConfig) -> tuple[MixtureModel, list[dict]]:
    """Fit every g in ``config.g_range`` and keep the smallest BIC (ties to smaller g)."""
    lo, hi = config.g_range
    table = []
    best = None
    for g in range(lo, hi + 1):
        try:
            model, trace = fit_mixture(data, g, config)
        except NumericalError as exc:
            table.append({"g": g, "loglik": float("nan"), "bic": float("nan"), "converged": False,
                          "iters": 0, "status": f"failed: {exc}"})
            continue
        table.append({"g": g, "loglik": model.log_likelihood, "bic": model.bic, "converged": trace.converged,
                      "iters": trace.iterations, "status": "ok" if model.g == g else f"reduced to g={model.g}"})
        if best is None or model.bic < best.bic:
            best = model
    if best is None:
        raise NumericalError(f"every fit in g_range {config.g_range} failed")
    return best, table
