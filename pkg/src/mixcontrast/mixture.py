"""Mixture of linear mixed models: parameters, covariances, posteriors.

Conditional on membership of component ``i`` a profile follows

    y = X beta_i + U b_i + V c_i + eps,

with ``b_i ~ N(0, B_i)``, ``c_i ~ N(0, sigma_c_i^2 I_p)`` shared by every
member and ``eps ~ N(0, sigma_e_i^2 I_p)``.  Component densities and
posteriors condition on the current estimate of ``c_i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import linalg
from scipy.special import logsumexp

from .data import FLOAT_FORMAT, DesignMatrices, build_design_matrices
from .errors import ConditioningError, DataError, ParameterDomainError

RHO_MAX = 0.99
LOG_2PI = float(np.log(2.0 * np.pi))


def rho_bounds(m: int) -> tuple[float, float]:
    """Admissible range of the shared correlation for ``m`` classes."""
    lower = -RHO_MAX if m <= 2 else max(-RHO_MAX, -1.0 / (m - 1) + 1e-6)
    return lower, RHO_MAX


def build_B(sigma_b: Sequence[float], rho: float) -> NDArray[np.float64]:
    """Gene random-effect covariance: ``sigma_h^2`` on the diagonal, ``rho sigma_h sigma_k`` off it."""
    sigma_b = np.asarray(sigma_b, dtype=float)
    if np.any(~(sigma_b > 0)):
        raise ParameterDomainError(f"sigma_b must be positive, got {sigma_b}")
    lo, hi = rho_bounds(sigma_b.size)
    if not (lo <= rho <= hi):
        raise ParameterDomainError(f"rho={rho} outside [{lo:.4g}, {hi}]")
    corr = np.full((sigma_b.size, sigma_b.size), float(rho))
    np.fill_diagonal(corr, 1.0)
    return corr * np.outer(sigma_b, sigma_b)


@dataclass(frozen=True)
class ComponentParams:
    """Parameters of one mixture component.

    ``rho`` is shared by all components of a model; it is stored per
    component for convenience.
    """

    pi: float
    beta: NDArray[np.float64]
    sigma_b: NDArray[np.float64]
    rho: float
    sigma_c_sq: float
    sigma_e_sq: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "sigma_b", np.asarray(self.sigma_b, dtype=float))
        object.__setattr__(self, "pi", float(self.pi))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "sigma_c_sq", float(self.sigma_c_sq))
        object.__setattr__(self, "sigma_e_sq", float(self.sigma_e_sq))

    def validate(self) -> None:
        if not (0.0 < self.pi < 1.0 or self.pi == 1.0):
            raise ParameterDomainError(f"pi={self.pi} outside (0, 1]")
        if not self.sigma_e_sq > 0:
            raise ParameterDomainError(f"sigma_e_sq={self.sigma_e_sq} must be positive")
        if not self.sigma_c_sq >= 0:
            raise ParameterDomainError(f"sigma_c_sq={self.sigma_c_sq} must be non-negative")
        build_B(self.sigma_b, self.rho)

    @property
    def B(self) -> NDArray[np.float64]:
        return build_B(self.sigma_b, self.rho)

    def to_dict(self) -> dict:
        return {
            "pi": self.pi,
            "beta": self.beta.tolist(),
            "sigma_b": self.sigma_b.tolist(),
            "rho": self.rho,
            "sigma_c_sq": self.sigma_c_sq,
            "sigma_e_sq": self.sigma_e_sq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ComponentParams:
        return cls(d["pi"], d["beta"], d["sigma_b"], d["rho"], d["sigma_c_sq"], d["sigma_e_sq"])


def conditional_covariance(comp: ComponentParams, design: DesignMatrices) -> NDArray[np.float64]:
    """``U B U^T + sigma_e^2 I_p``, the profile covariance given ``c_i``."""
    U = design.U
    return U @ comp.B @ U.T + comp.sigma_e_sq * np.eye(design.p)


def marginal_covariance(comp: ComponentParams, design: DesignMatrices) -> NDArray[np.float64]:
    """Profile covariance with ``c_i`` integrated out as well."""
    V = design.V
    return conditional_covariance(comp, design) + comp.sigma_c_sq * (V @ V.T)


def cholesky_or_raise(matrix: NDArray[np.float64], what: str):
    try:
        return linalg.cho_factor(matrix, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise ConditioningError(f"{what} is not positive definite") from exc


def component_log_densities(
    Y: NDArray[np.float64],
    components: Sequence[ComponentParams],
    design: DesignMatrices,
    c_hat: NDArray[np.float64],
) -> NDArray[np.float64]:
    """``log N(y_j; X beta_i + c_i, Sigma_i)`` for every row ``j`` and component ``i``."""
    Y = np.atleast_2d(Y)
    n, p = Y.shape
    out = np.empty((n, len(components)))
    eye = np.eye(p)
    for i, comp in enumerate(components):
        cf = cholesky_or_raise(conditional_covariance(comp, design), f"covariance of component {i + 1}")
        precision = linalg.cho_solve(cf, eye, check_finite=False)
        resid = Y - (design.X @ comp.beta + c_hat[i])
        quad = np.einsum("ij,ij->i", resid @ precision, resid)
        logdet = 2.0 * np.log(np.diag(cf[0])).sum()
        out[:, i] = -0.5 * (p * LOG_2PI + logdet + quad)
    return out


def tau_from_log_densities(log_pi: NDArray[np.float64], log_dens: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    """Posterior probabilities and per-row log mixture densities, in log space."""
    with np.errstate(divide="ignore"):
        weighted = np.asarray(log_dens) + np.asarray(log_pi)
    top = weighted.max(axis=-1, keepdims=True)
    if not np.all(np.isfinite(top)):
        log_mix = logsumexp(weighted, axis=-1, keepdims=True)
    else:
        log_mix = top + np.log(np.exp(weighted - top).sum(axis=-1, keepdims=True))
    tau = np.exp(weighted - log_mix)
    return tau, log_mix[..., 0]


def _log_pi(components: Sequence[ComponentParams]) -> NDArray[np.float64]:
    with np.errstate(divide="ignore"):
        return np.log(np.array([c.pi for c in components]))


@dataclass(frozen=True)
class MixtureModel:
    """A fitted (or initial) g-component mixture of LMMs.

    ``c_hat`` holds the per-component estimates of the sample-shared random
    effects; densities and ``tau`` condition on them.
    """

    components: tuple[ComponentParams, ...]
    design: DesignMatrices
    c_hat: NDArray[np.float64]
    tau: NDArray[np.float64] | None = None
    log_likelihood: float = float("nan")
    bic: float = float("nan")
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        c_hat = np.asarray(self.c_hat, dtype=float).reshape(self.g, self.design.p)
        object.__setattr__(self, "c_hat", c_hat)
        if self.tau is not None:
            object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))

    @property
    def g(self) -> int:
        return len(self.components)

    @property
    def m(self) -> int:
        return self.design.m

    @property
    def rho(self) -> float:
        return self.components[0].rho

    @property
    def pi(self) -> NDArray[np.float64]:
        return np.array([c.pi for c in self.components])

    @property
    def beta(self) -> NDArray[np.float64]:
        return np.array([c.beta for c in self.components])

    @property
    def z_map(self) -> NDArray[np.int64]:
        if self.tau is None:
            raise ValueError("model has no posterior probabilities")
        return np.argmax(self.tau, axis=1)

    @property
    def n_map(self) -> NDArray[np.int64]:
        return np.bincount(self.z_map, minlength=self.g)

    @property
    def class_of_sample(self) -> NDArray[np.int64]:
        return np.argmax(self.design.X, axis=1) + 1

    def log_densities(self, Y: NDArray[np.float64]) -> NDArray[np.float64]:
        return component_log_densities(Y, self.components, self.design, self.c_hat)

    def posterior(self, Y: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
        """``(tau, log mixture density)`` for the rows of ``Y``."""
        return tau_from_log_densities(_log_pi(self.components), self.log_densities(Y))

    def loglik(self, Y: NDArray[np.float64]) -> float:
        return float(self.posterior(Y)[1].sum())

    def validate(self) -> None:
        for comp in self.components:
            comp.validate()
        if abs(self.pi.sum() - 1.0) > 1e-10:
            raise ParameterDomainError(f"mixing proportions sum to {self.pi.sum()}")
        if len({c.rho for c in self.components}) != 1:
            raise ParameterDomainError("rho must be shared across components")

    def with_(self, **changes) -> MixtureModel:
        return replace(self, **changes)

    # -- serialization -------------------------------------------------
    def to_json(self, path: str | Path, tau_path: str | Path | None = None, extra: dict | None = None) -> None:
        path = Path(path)
        doc = {
            "g": self.g,
            "m": self.m,
            "rho": self.rho,
            "components": [
                {**comp.to_dict(), "c_hat": self.c_hat[i].tolist()} for i, comp in enumerate(self.components)
            ],
            "log_likelihood": self.log_likelihood,
            "bic": self.bic,
            "class_of_sample": self.class_of_sample.tolist(),
            "tau_path": None,
            **self.meta,
            **(extra or {}),
        }
        if tau_path is not None and self.tau is not None:
            tau_path = Path(tau_path)
            write_tau(self.tau, tau_path)
            doc["tau_path"] = tau_path.name if tau_path.parent == path.parent else str(tau_path)
            doc["n_map"] = self.n_map.tolist()
        path.write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> MixtureModel:
        path = Path(path)
        doc = json.loads(path.read_text())
        design = build_design_matrices(doc["class_of_sample"])
        comps = [ComponentParams.from_dict(c) for c in doc["components"]]
        c_hat = np.array([c["c_hat"] for c in doc["components"]], dtype=float)
        tau = None
        if doc.get("tau_path"):
            tau_path = Path(doc["tau_path"])
            if not tau_path.is_absolute():
                tau_path = path.parent / tau_path
            tau = read_tau(tau_path)
            if tau.shape[1] != len(comps):
                raise DataError(f"{tau_path}: expected {len(comps)} columns, got {tau.shape[1]}")
        known = {"g", "m", "rho", "components", "log_likelihood", "bic", "class_of_sample", "tau_path", "n_map"}
        meta = {k: v for k, v in doc.items() if k not in known}
        return cls(tuple(comps), design, c_hat, tau, doc["log_likelihood"], doc["bic"], meta)


def write_tau(tau: NDArray[np.float64], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(f"tau_{i + 1}" for i in range(tau.shape[1])) + "\n")
        for row in tau:
            fh.write("\t".join(format(x, FLOAT_FORMAT) for x in row) + "\n")


def read_tau(path: str | Path) -> NDArray[np.float64]:
    return np.atleast_2d(np.loadtxt(path, delimiter="\t", skiprows=1, ndmin=2))


def posterior_tau(y: NDArray[np.float64], model: MixtureModel, c_hats: NDArray[np.float64] | None = None) -> NDArray:
    """Posterior component probabilities of a single profile ``y``.

    ``c_hats`` overrides the model's shared random-effect estimates; zero
    vectors are allowed.
    """
    c_hats = model.c_hat if c_hats is None else np.asarray(c_hats, dtype=float).reshape(model.g, model.design.p)
    log_dens = component_log_densities(np.atleast_2d(y), model.components, model.design, c_hats)
    return tau_from_log_densities(_log_pi(model.components), log_dens)[0][0]
