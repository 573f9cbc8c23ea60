"""Correlated-block synthetic expression data with known DE genes.

Each sample is drawn independently: genes come in equal blocks, and inside
a block they are equicorrelated normals with mean ``base_mean``, variance
``sigma_sq`` and correlation ``rho_sim``.  A random subset of genes is
shifted by ``+delta`` or ``-delta`` in every class-2 sample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .data import ExpressionMatrix
from .errors import DataError


@dataclass(frozen=True)
class SimConfig:
    n: int = 3000
    p1: int = 10
    p2: int = 10
    block_size: int = 500
    n_blocks: int = 6
    base_mean: float = 10.0
    sigma_sq: float = 4.0
    rho_sim: float = 0.0
    delta: float = 2.0
    de_fraction: float = 0.2
    stratify_blocks: bool = False

    def __post_init__(self) -> None:
        if self.n != self.block_size * self.n_blocks:
            raise DataError(f"n={self.n} != block_size*n_blocks={self.block_size * self.n_blocks}")
        if not 0 <= self.rho_sim < 1:
            raise DataError(f"rho_sim={self.rho_sim} outside [0, 1)")
        if self.p1 < 2 or self.p2 < 2:
            raise DataError("each class needs at least 2 samples")
        n_de = self.de_fraction * self.n
        if abs(n_de - round(n_de)) > 1e-9 or round(n_de) % 2:
            raise DataError(f"de_fraction*n={n_de} must be an even integer")

    @property
    def n_de(self) -> int:
        return int(round(self.de_fraction * self.n))

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS: dict[str, SimConfig] = {
    "table2-set1": SimConfig(delta=2.0, rho_sim=0.0),
    "table2-set2": SimConfig(delta=2.0, rho_sim=0.4),
    "table2-set3": SimConfig(delta=3.0, rho_sim=0.0),
    "table2-set4": SimConfig(delta=3.0, rho_sim=0.4),
    "fig3-set1": SimConfig(delta=2.0, rho_sim=0.0),
    "fig3-set2": SimConfig(delta=2.0, rho_sim=0.4),
    "fig3-set3": SimConfig(delta=2.0, rho_sim=0.6),
    "fig3-set4": SimConfig(delta=2.0, rho_sim=0.8),
    "null": SimConfig(delta=0.0, rho_sim=0.0),
}


@dataclass(frozen=True)
class SimulationTruth:
    """Per-feature label (``null``/``up``/``down``) and injected class-2 shift."""

    feature_ids: tuple[str, ...]
    de_label: NDArray[np.str_]
    shift: NDArray[np.float64]

    @property
    def is_de(self) -> NDArray[np.bool_]:
        return self.de_label != "null"

    def write(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(["feature_id", "de_label", "shift"])
            for fid, lab, s in zip(self.feature_ids, self.de_label, self.shift):
                writer.writerow([fid, lab, repr(float(s))])

    @classmethod
    def read(cls, path: str | Path) -> SimulationTruth:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh, delimiter="\t"))
        if not rows or rows[0][:2] != ["feature_id", "de_label"]:
            raise DataError(f"{path}: not a truth table")
        body = [r for r in rows[1:] if r]
        return cls(
            tuple(r[0] for r in body),
            np.array([r[1] for r in body]),
            np.array([float(r[2]) for r in body]),
        )


def generate_dataset(config: SimConfig, seed: int) -> tuple[ExpressionMatrix, SimulationTruth]:
    """Draw one dataset and its ground truth; identical seeds give identical data."""
    root = np.random.SeedSequence(int(seed))
    de_seq, sample_seq = root.spawn(2)
    p = config.p1 + config.p2
    block_of = np.repeat(np.arange(config.n_blocks), config.block_size)
    sd = math.sqrt(config.sigma_sq)
    shared = math.sqrt(config.rho_sim)
    own = math.sqrt(1.0 - config.rho_sim)

    values = np.empty((config.n, p))
    for k, seq in enumerate(sample_seq.spawn(p)):
        rng = np.random.default_rng(seq)
        s = rng.standard_normal(config.n_blocks)
        e = rng.standard_normal(config.n)
        values[:, k] = config.base_mean + sd * (shared * s[block_of] + own * e)

    rng = np.random.default_rng(de_seq)
    half = config.n_de // 2
    if config.stratify_blocks:
        per_block = config.n_de // config.n_blocks
        chosen = np.concatenate([
            b * config.block_size + rng.choice(config.block_size, per_block, replace=False)
            for b in range(config.n_blocks)
        ])
        chosen = rng.permutation(chosen)
    else:
        chosen = rng.choice(config.n, config.n_de, replace=False)
    shift = np.zeros(config.n)
    shift[chosen[:half]] = config.delta
    shift[chosen[half:]] = -config.delta
    label = np.full(config.n, "null", dtype=object)
    label[chosen[:half]] = "up"
    label[chosen[half:]] = "down"
    values[:, config.p1:] += shift[:, None]

    width = len(str(config.n))
    feature_ids = tuple(f"g{j + 1:0{width}d}" for j in range(config.n))
    sample_ids = tuple(f"s{k + 1:02d}" for k in range(p))
    classes = np.r_[np.ones(config.p1, dtype=np.int64), np.full(config.p2, 2, dtype=np.int64)]
    data = ExpressionMatrix(values, feature_ids, sample_ids, classes)
    return data, SimulationTruth(feature_ids, label.astype(str), shift)


def preset(name: str, **overrides) -> SimConfig:
    if name not in PRESETS:
        raise DataError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)
