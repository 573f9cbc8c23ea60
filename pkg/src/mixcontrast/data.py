"""Expression matrices, class labels and the mixed-model design.

Rows of the matrix are features (genes), columns are samples.  Class
labels are integers ``1..m``; the labels file, not the column order,
decides class membership.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DataError

FLOAT_FORMAT = ".17g"


@dataclass(frozen=True)
class ExpressionMatrix:
    """An ``n x p`` matrix of feature measurements with sample classes.

    Attributes:
        values: ``(n, p)`` float array, rows are features.
        feature_ids: ``n`` feature identifiers.
        sample_ids: ``p`` sample identifiers, in column order.
        class_of_sample: ``p`` integers in ``1..m``.
        standardized: whether ``column_standardize`` has been applied.
    """

    values: NDArray[np.float64]
    feature_ids: tuple[str, ...]
    sample_ids: tuple[str, ...]
    class_of_sample: NDArray[np.int64]
    standardized: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        labels = np.asarray(self.class_of_sample, dtype=np.int64)
        if values.ndim != 2:
            raise DataError("values must be a 2-D array")
        n, p = values.shape
        if len(self.feature_ids) != n:
            raise DataError(f"expected {n} feature ids, got {len(self.feature_ids)}")
        if len(self.sample_ids) != p:
            raise DataError(f"expected {p} sample ids, got {len(self.sample_ids)}")
        if len(set(self.feature_ids)) != n:
            raise DataError("duplicate feature ids")
        if labels.shape != (p,):
            raise DataError(f"expected {p} class labels, got shape {labels.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("matrix contains missing or non-finite values")
        validate_class_labels(labels)
        values.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "class_of_sample", labels)
        object.__setattr__(self, "feature_ids", tuple(self.feature_ids))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def m(self) -> int:
        return int(self.class_of_sample.max())

    @property
    def class_sizes(self) -> NDArray[np.int64]:
        """Samples per class, ``p_1..p_m``."""
        return np.bincount(self.class_of_sample, minlength=self.m + 1)[1:]

    def with_values(self, values: NDArray[np.float64], standardized: bool | None = None) -> ExpressionMatrix:
        return replace(
            self,
            values=np.array(values, dtype=float),
            standardized=self.standardized if standardized is None else standardized,
        )

    @classmethod
    def from_array(
        cls,
        values,
        class_of_sample: Sequence[int],
        feature_ids: Sequence[str] | None = None,
        sample_ids: Sequence[str] | None = None,
        standardized: bool = False,
    ) -> ExpressionMatrix:
        values = np.asarray(values, dtype=float)
        n, p = values.shape
        if feature_ids is None:
            feature_ids = [f"f{j + 1}" for j in range(n)]
        if sample_ids is None:
            sample_ids = [f"s{k + 1}" for k in range(p)]
        return cls(values, tuple(feature_ids), tuple(sample_ids), np.asarray(class_of_sample), standardized)


@dataclass(frozen=True)
class DesignMatrices:
    """Design matrices of the component linear mixed model.

    ``X`` maps class fixed effects to samples, ``U`` (equal to ``X``) maps
    the per-class gene random effects, and ``V`` (the identity) maps the
    per-sample component random effects.
    """

    X: NDArray[np.float64]
    U: NDArray[np.float64]
    V: NDArray[np.float64]

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def class_sizes(self) -> NDArray[np.float64]:
        return self.X.sum(axis=0)


def validate_class_labels(labels: NDArray[np.int64]) -> None:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("no samples")
    present = np.unique(labels)
    m = int(present.max())
    if present.min() < 1 or not np.array_equal(present, np.arange(1, m + 1)):
        raise DataError(f"class indices must form 1..m, got {present.tolist()}")
    counts = np.bincount(labels, minlength=m + 1)[1:]
    for h, count in enumerate(counts, start=1):
        if count < 2:
            raise DataError(f"class {h} has fewer than 2 samples")


def build_design_matrices(class_of_sample: Sequence[int]) -> DesignMatrices:
    """Class-indicator fixed-effect design with ``U = X`` and ``V = I_p``."""
    labels = np.asarray(class_of_sample, dtype=np.int64)
    present = np.unique(labels)
    m = int(present.max())
    if present.min() < 1 or not np.array_equal(present, np.arange(1, m + 1)):
        raise DataError(f"class indices must form 1..m, got {present.tolist()}")
    p = labels.size
    X = np.zeros((p, m))
    X[np.arange(p), labels - 1] = 1.0
    X.setflags(write=False)
    V = np.eye(p)
    V.setflags(write=False)
    return DesignMatrices(X=X, U=X, V=V)


def column_standardize(data: ExpressionMatrix) -> ExpressionMatrix:
    """Rescale every sample column to mean 0 and sample sd 1.

    The sd uses the ``n - 1`` denominator over the ``n`` features.  Rows
    are never standardized.
    """
    values = data.values
    if data.n < 2:
        raise DataError("column standardization needs at least 2 features")
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1)
    constant = np.flatnonzero(~(sd > 0))
    if constant.size:
        k = int(constant[0])
        raise DataError(f"constant column {k + 1} ({data.sample_ids[k]!r})")
    return data.with_values((values - mean) / sd, standardized=True)


def file_digest(*paths: str | Path) -> str:
    """SHA-256 over the concatenated bytes of ``paths``."""
    h = hashlib.sha256()
    for path in paths:
        h.update(Path(path).read_bytes())
    return h.hexdigest()


def _read_tsv(path: str | Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh, delimiter="\t") if row and any(cell.strip() for cell in row)]


def read_labels(path: str | Path) -> dict[str, int]:
    """Read ``sample_id<TAB>class_index`` lines; a non-integer header line is skipped."""
    rows = _read_tsv(path)
    labels: dict[str, int] = {}
    for lineno, row in enumerate(rows, start=1):
        if len(row) < 2:
            raise DataError(f"{path}: line {lineno} needs sample id and class index")
        sample, cls = row[0].strip(), row[1].strip()
        try:
            value = int(cls)
        except ValueError:
            if lineno == 1:
                continue
            raise DataError(f"{path}: non-integer class index {cls!r} at line {lineno}") from None
        if sample in labels:
            raise DataError(f"{path}: duplicate sample id {sample!r}")
        labels[sample] = value
    return labels


def load_expression_matrix(matrix_path: str | Path, labels_path: str | Path) -> ExpressionMatrix:
    """Load a feature-by-sample TSV and its labels file.

    The matrix header holds the sample ids, optionally preceded by a corner
    cell; every other line is a feature id followed by ``p`` numbers.
    """
    rows = _read_tsv(matrix_path)
    if len(rows) < 2:
        raise DataError(f"{matrix_path}: need a header and at least one feature row")
    header = [cell.strip() for cell in rows[0]]
    width = len(rows[1])
    if len(header) == width:
        sample_ids = header[1:]
    elif len(header) == width - 1:
        sample_ids = header
    else:
        raise DataError(f"{matrix_path}: header has {len(header)} fields but rows have {width}")
    p = len(sample_ids)
    feature_ids: list[str] = []
    values = np.empty((len(rows) - 1, p))
    for r, row in enumerate(rows[1:]):
        lineno = r + 2
        if len(row) != p + 1:
            raise DataError(f"{matrix_path}: row {lineno} has {len(row)} fields, expected {p + 1}")
        feature_ids.append(row[0].strip())
        for c, cell in enumerate(row[1:]):
            try:
                x = float(cell)
            except ValueError:
                x = float("nan")
            if not np.isfinite(x):
                raise DataError(f"non-numeric value at row {lineno}, column {c + 2}: {cell!r}")
            values[r, c] = x
    if len(set(feature_ids)) != len(feature_ids):
        seen: set[str] = set()
        dup = next(f for f in feature_ids if f in seen or seen.add(f))
        raise DataError(f"duplicate feature id {dup!r}")

    label_map = read_labels(labels_path)
    missing = [s for s in sample_ids if s not in label_map]
    if missing:
        raise DataError(f"sample id {missing[0]!r} missing from labels file")
    classes = np.array([label_map[s] for s in sample_ids], dtype=np.int64)
    return ExpressionMatrix(values, tuple(feature_ids), tuple(sample_ids), classes, standardized=False)


def write_expression_matrix(data: ExpressionMatrix, matrix_path: str | Path, labels_path: str | Path) -> None:
    """Write the matrix and labels TSV pair; floats round-trip exactly."""
    with open(matrix_path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["feature_id", *data.sample_ids])
        for fid, row in zip(data.feature_ids, data.values):
            writer.writerow([fid, *(format(x, FLOAT_FORMAT) for x in row)])
    with open(labels_path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for sid, cls in zip(data.sample_ids, data.class_of_sample):
            writer.writerow([sid, int(cls)])
