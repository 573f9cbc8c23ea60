from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mixcontrast.data import build_design_matrices  # noqa: E402
from mixcontrast.mixture import ComponentParams, MixtureModel  # noqa: E402


def random_component(rng, m=2, pi=1.0, rho=None):
    return ComponentParams(
        pi=pi,
        beta=rng.normal(size=m),
        sigma_b=rng.uniform(0.2, 2.0, m),
        rho=rng.uniform(-0.9, 0.9) if rho is None else rho,
        sigma_c_sq=rng.uniform(0.05, 2.0),
        sigma_e_sq=rng.uniform(0.1, 2.0),
    )


def random_model(rng, labels, g=1, n=None):
    """Valid random model over ``labels``; ``tau`` is one-hot round-robin when ``n`` is given."""
    design = build_design_matrices(labels)
    rho = rng.uniform(max(-0.9, -0.9 / max(design.m - 1, 1)), 0.9)
    pi = rng.dirichlet(np.full(g, 5.0))
    comps = tuple(random_component(rng, design.m, pi[i], rho) for i in range(g))
    tau = None
    if n is not None:
        tau = np.zeros((n, g))
        tau[np.arange(n), np.arange(n) % g] = 1.0
    c_hat = rng.normal(0, 0.3, (g, design.p))
    return MixtureModel(comps, design, c_hat, tau=tau)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
