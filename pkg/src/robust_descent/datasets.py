"""CSV ingestion with per-feature [0, 1] scaling, and class-balanced splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Malformed dataset file; message carries the row/column position."""


@dataclass
class DatasetFile:
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    label_name: str
    classes: np.ndarray | None = None

    @property
    def n_rows(self):
        return self.X.shape[0]

    def subset(self, idx):
        return DatasetFile(self.X[idx], self.y[idx], self.feature_names, self.label_name, self.classes)


def minmax_scale(X):
    """Per-column min-max scaling to [0, 1]; constant columns map to 0."""
    X = np.asarray(X, dtype=float)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    out = np.zeros_like(X)
    live = span > 0
    out[:, live] = (X[:, live] - lo[live]) / span[live]
    return out


def load_csv_dataset(path, label_column: str, label_kind: str = "class", normalize: bool = True) -> DatasetFile:
    """Read a headered numeric CSV.

    ``label_kind="class"`` maps the label column's distinct values (sorted) to
    indices ``0..C-1``; ``"real"`` parses it as a float response. Every other
    column is a numeric feature.
    """
    if label_kind not in ("class", "real"):
        raise ValueError(f"label_kind must be 'class' or 'real', got {label_kind!r}")
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if label_column not in header:
            raise DatasetError(f"{path}: label column {label_column!r} missing from header {header}")
        li = header.index(label_column)
        feats, labels = [], []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}: row {row_no} has {len(row)} fields, header has {len(header)}")
            vals = []
            for col, cell in enumerate(row):
                if col == li:
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {row_no}, column {col + 1} ({header[col]!r}): non-numeric value {cell!r}"
                    ) from None
            if not np.all(np.isfinite(vals)):
                raise DatasetError(f"{path}: row {row_no}: non-finite feature value")
            lab = row[li].strip()
            if label_kind == "real":
                try:
                    lab = float(lab)
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {row_no}, column {li + 1} ({label_column!r}): non-numeric label {lab!r}"
                    ) from None
            elif not lab:
                raise DatasetError(f"{path}: row {row_no}, column {li + 1}: empty label")
            feats.append(vals)
            labels.append(lab)
    if not feats:
        raise DatasetError(f"{path}: no data rows")
    names = [h for i, h in enumerate(header) if i != li]
    X = np.array(feats, dtype=float).reshape(len(feats), len(names))
    if normalize:
        X = minmax_scale(X)
    classes = None
    if label_kind == "class":
        classes, y = np.unique(np.array(labels), return_inverse=True)
    else:
        y = np.array(labels, dtype=float)
    return DatasetFile(X=X, y=y, feature_names=names, label_name=label_column, classes=classes)


def write_csv_dataset(path, X, y, feature_names=None, label_name="label"):
    X = np.asarray(X)
    names = feature_names or [f"x{j}" for j in range(X.shape[1])]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, label_name])
        for row, lab in zip(X, y):
            w.writerow([*(repr(float(v)) for v in row), lab])


def _per_class(counts, n_classes):
    if isinstance(counts, int):
        return {c: counts for c in range(n_classes)}
    return {int(k): int(v) for k, v in dict(counts).items()}


def balanced_subsample(dataset: DatasetFile, train_counts, test_counts, seed):
    """Disjoint train/test subsets with exact per-class counts.

    Counts are an int (same for every class) or a ``{class_index: count}``
    mapping. Rows are drawn without replacement within each class.
    """
    y = np.asarray(dataset.y)
    n_classes = int(y.max()) + 1
    train_c = _per_class(train_counts, n_classes)
    test_c = _per_class(test_counts, n_classes)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in sorted(set(train_c) | set(test_c)):
        pool = np.flatnonzero(y == c)
        need_tr, need_te = train_c.get(c, 0), test_c.get(c, 0)
        if need_tr + need_te > pool.size:
            raise ValueError(f"class {c}: requested {need_tr}+{need_te} rows, only {pool.size} available")
        pick = rng.permutation(pool)[: need_tr + need_te]
        train_idx.append(pick[:need_tr])
        test_idx.append(pick[need_tr:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    return dataset.subset(train_idx), dataset.subset(test_idx)
