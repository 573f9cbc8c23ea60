"""Pooled two-sample t-test, the per-gene baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .data import ExpressionMatrix
from .errors import DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TTestResult:
    t: NDArray[np.float64]
    P: NDArray[np.float64]
    df: int
    zero_variance: NDArray[np.bool_]

    def ranking_key(self) -> NDArray[np.float64]:
        """``|t|`` with infinite statistics mapped above every finite one."""
        key = np.abs(self.t)
        finite_max = key[np.isfinite(key)].max(initial=0.0)
        return np.where(np.isinf(key), finite_max + 1.0, key)


def pooled_t(data: ExpressionMatrix) -> TTestResult:
    """Equal-variance two-sample t of class 1 minus class 2 for every feature."""
    if data.m != 2:
        raise DataError(f"pooled t-test needs two classes, got {data.m}")
    Y = data.values
    a = Y[:, data.class_of_sample == 1]
    b = Y[:, data.class_of_sample == 2]
    n1, n2 = a.shape[1], b.shape[1]
    df = n1 + n2 - 2
    diff = a.mean(axis=1) - b.mean(axis=1)
    ss = ((a - a.mean(axis=1, keepdims=True)) ** 2).sum(axis=1) + ((b - b.mean(axis=1, keepdims=True)) ** 2).sum(axis=1)
    sp2 = ss / df
    se = np.sqrt(sp2 * (1.0 / n1 + 1.0 / n2))
    zero = se == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = diff / se
        # zero variance: infinite t if the means differ, otherwise no evidence
        t[zero] = np.where(diff[zero] == 0, 0.0, np.sign(diff[zero]) * np.inf)
    if zero.any():
        log.warning("%d feature(s) with zero pooled variance", int(zero.sum()))
    P = np.minimum(2.0 * stats.t.sf(np.abs(t), df), 1.0)
    return TTestResult(t, P, df, zero)
