"""Datasets: seeded synthetic anchors and CSV ingestion."""

from __future__ import annotations

import csv
import gzip
import io
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .rng import SplitMix64, derive_seed


class TargetKind(str, Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"
    NONE = "none"


class CSVFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray | None = None
    names: tuple[str, ...] | None = None
    target_name: str | None = None
    target_kind: TargetKind = TargetKind.NONE
    #: original class labels, position = class id
    class_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        X = np.array(self.features, dtype=np.float64, ndmin=2)
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target_kind", TargetKind(self.target_kind))
        if self.targets is not None:
            dtype = np.int64 if self.target_kind is TargetKind.CLASSIFICATION else np.float64
            y = np.array(self.targets, dtype=dtype).reshape(-1)
            if y.shape[0] != X.shape[0]:
                raise ValueError("targets length differs from row count")
            y.setflags(write=False)
            object.__setattr__(self, "targets", y)
        if self.names is not None and len(self.names) != X.shape[1]:
            raise ValueError("names length differs from feature count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        if self.target_kind is not TargetKind.CLASSIFICATION:
            raise ValueError("dataset has no class targets")
        return int(self.targets.max()) + 1 if self.n else 0

    def head(self, rows: int) -> "Dataset":
        y = None if self.targets is None else self.targets[:rows]
        return replace(self, features=self.features[:rows], targets=y)


def gen_synthetic(seed: int, n: int = 32, dim: int = 2, low: float = -10.0, high: float = 10.0) -> Dataset:
    """``n`` vectors with coordinates i.i.d. uniform on ``[low, high]``."""
    if not low < high:
        raise ValueError("low must be below high")
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be positive")
    values = SplitMix64(derive_seed(seed, 0x5EED)).uniform(low, high, n * dim)
    return Dataset(values.reshape(n, dim), names=tuple(f"x{j}" for j in range(dim)))


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def load_csv(
    path,
    target_column: str | int | None = None,
    target_kind: TargetKind | str = TargetKind.NONE,
    max_rows: int | None = None,
) -> Dataset:
    """Read a headed CSV (optionally gzip-compressed) into a :class:`Dataset`.

    Every non-target column must be numeric. Classification targets are
    encoded 0..K-1 in order of first appearance.
    """
    path = Path(path)
    target_kind = TargetKind(target_kind)
    if target_kind is not TargetKind.NONE and target_column is None:
        raise ValueError("target_kind set but no target_column given")
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CSVFormatError(f"{path}: empty file") from None
        t_idx = None
        if target_column is not None:
            if isinstance(target_column, int):
                if not -len(header) <= target_column < len(header):
                    raise ValueError(f"target column index {target_column} out of range")
                t_idx = target_column % len(header)
            elif target_column in header:
                t_idx = header.index(target_column)
            else:
                raise ValueError(f"target column {target_column!r} not in header {header}")
        feat_cols = [j for j in range(len(header)) if j != t_idx]

        rows, raw_targets = [], []
        for line_no, row in enumerate(reader, start=2):
            if max_rows is not None and len(rows) >= max_rows:
                break
            if not row:
                continue
            if len(row) != len(header):
                raise CSVFormatError(f"{path}: row {line_no} has {len(row)} cells, header has {len(header)}")
            vals = []
            for j in feat_cols:
                try:
                    vals.append(float(row[j]))
                except ValueError:
                    raise CSVFormatError(
                        f"{path}: row {line_no}, column {header[j]!r}: cannot parse {row[j]!r} as a number"
                    ) from None
            rows.append(vals)
            if t_idx is not None:
                raw_targets.append(row[t_idx].strip())

    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_cols))
    names = tuple(header[j] for j in feat_cols)
    if t_idx is None or target_kind is TargetKind.NONE:
        return Dataset(features, names=names)
    if target_kind is TargetKind.CLASSIFICATION:
        classes: dict[str, int] = {}
        ids = [classes.setdefault(t, len(classes)) for t in raw_targets]
        return Dataset(features, np.array(ids), names, header[t_idx], target_kind, tuple(classes))
    try:
        y = np.array([float(t) for t in raw_targets])
    except ValueError as exc:
        raise CSVFormatError(f"{path}: non-numeric regression target in column {header[t_idx]!r}") from exc
    return Dataset(features, y, names, header[t_idx], target_kind)


def save_csv(data: Dataset, path) -> None:
    """Write ``data`` with a header row; floats use repr so reloading is exact."""
    path = Path(path)
    names = data.names or tuple(f"x{j}" for j in range(data.dim))
    header = list(names)
    if data.targets is not None:
        header.append(data.target_name or "target")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.features[i]]
            if data.targets is not None:
                t = data.targets[i]
                if data.target_kind is TargetKind.CLASSIFICATION:
                    row.append(data.class_names[t] if data.class_names else str(int(t)))
                else:
                    row.append(repr(float(t)))
            w.writerow(row)


def minmax_scale(data: Dataset) -> Dataset:
    """Rescale each feature column to [0, 1]; constant columns map to 0."""
    X = data.features
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return replace(data, features=(X - lo) / span)
