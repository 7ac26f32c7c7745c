"""
Labeled datasets for source and target domains
Feature augmentation, CSV / sparse-text ingestion and split construction
"""

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.utils.errors import DataParseError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

LABEL_COLUMN = "label"


class Domain(str, Enum):
    """Which side of the shift a dataset comes from"""
    SOURCE = "source"
    TARGET = "target"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LabeledDataset:
    """
    Feature matrix with integer class labels

    Rows are examples. Labels are contiguous indices 0..num_classes-1;
    label_names keeps the original label token for each index.
    """
    features: np.ndarray
    labels: np.ndarray
    domain: Domain
    num_classes: int
    label_names: Tuple[str, ...] = ()
    feature_names: Tuple[str, ...] = ()

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        if features.ndim != 2:
            raise ValidationError(f"features must be a 2-D matrix, got shape {features.shape}")
        if features.shape[0] != labels.shape[0]:
            raise ValidationError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if self.num_classes < 1:
            raise ValidationError(f"num_classes must be positive, got {self.num_classes}")
        if not np.all(np.isfinite(features)):
            bad_row = int(np.argwhere(~np.isfinite(features))[0, 0])
            raise ValidationError(f"non-finite feature value in row {bad_row}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValidationError(
                f"labels must lie in 0..{self.num_classes - 1}, got range "
                f"[{labels.min()}, {labels.max()}]"
            )

        label_names = tuple(self.label_names) or tuple(str(k) for k in range(self.num_classes))
        if len(label_names) != self.num_classes:
            raise ValidationError(
                f"{len(label_names)} label names for {self.num_classes} classes"
            )
        feature_names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(features.shape[1]))
        if len(feature_names) != features.shape[1]:
            raise ValidationError(
                f"{len(feature_names)} feature names for {features.shape[1]} columns"
            )

        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "domain", Domain(self.domain))
        object.__setattr__(self, "label_names", label_names)
        object.__setattr__(self, "feature_names", feature_names)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def __len__(self) -> int:
        return self.n

    def class_counts(self) -> np.ndarray:
        """Number of examples per class index"""
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        """Rows selected by index, same metadata"""
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            features=self.features[indices],
            labels=self.labels[indices],
            domain=self.domain,
            num_classes=self.num_classes,
            label_names=self.label_names,
            feature_names=self.feature_names,
        )

    def with_domain(self, domain: Domain) -> "LabeledDataset":
        return LabeledDataset(
            features=self.features,
            labels=self.labels,
            domain=domain,
            num_classes=self.num_classes,
            label_names=self.label_names,
            feature_names=self.feature_names,
        )

    def augmented(self) -> np.ndarray:
        """n x (d+1) matrix of [x; 1] rows"""
        return augment_rows(self.features)

    @classmethod
    def empty(cls, dim: int, domain: Domain, num_classes: int,
              label_names: Tuple[str, ...] = ()) -> "LabeledDataset":
        return cls(
            features=np.zeros((0, dim)),
            labels=np.zeros(0, dtype=np.int64),
            domain=domain,
            num_classes=num_classes,
            label_names=label_names,
        )


class SplitSpec(BaseModel):
    """How many labeled examples per class go to the training side"""
    model_config = ConfigDict(frozen=True)

    train_per_class: int = Field(..., ge=0)
    holdout_classes: Tuple[int, ...] = ()
    seed: int = 0

    @field_validator("holdout_classes")
    @classmethod
    def _sorted_unique(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(k < 0 for k in value):
            raise ValueError("holdout class indices must be non-negative")
        return tuple(sorted(set(value)))


def augment(x: Sequence[float]) -> np.ndarray:
    """
    Bias-trick augmentation

    Args:
        x: Feature vector of length d

    Returns:
        Vector [x; 1] of length d+1
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValidationError("cannot augment a vector with non-finite entries")
    return np.append(x, 1.0)


def augment_rows(features: np.ndarray) -> np.ndarray:
    """Append a column of ones to an n x d matrix"""
    features = np.asarray(features, dtype=np.float64)
    return np.hstack([features, np.ones((features.shape[0], 1))])


def _label_sort_key(token: str):
    try:
        return (0, float(token), token)
    except ValueError:
        return (1, 0.0, token)


def _encode_labels(
    tokens: List[str],
    label_names: Optional[Sequence[str]],
    path: str,
    first_line: int,
    line_numbers: Optional[List[int]] = None
) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """Map raw label tokens to contiguous indices"""
    if label_names is None:
        vocabulary = tuple(sorted(set(tokens), key=_label_sort_key))
    else:
        vocabulary = tuple(label_names)
    mapping: Dict[str, int] = {token: k for k, token in enumerate(vocabulary)}

    labels = np.empty(len(tokens), dtype=np.int64)
    for row, token in enumerate(tokens):
        if token not in mapping:
            line = line_numbers[row] if line_numbers else first_line + row
            raise DataParseError(f"label {token!r} not in label set {list(vocabulary)}", path, line)
        labels[row] = mapping[token]
    return labels, vocabulary


def _canonical_label(token: str) -> str:
    token = token.strip()
    # "2.0" and "2" name the same class
    try:
        value = float(token)
    except ValueError:
        return token
    if np.isfinite(value) and value == int(value):
        return str(int(value))
    return token


def _read_rows(path: str) -> Tuple[List[str], List[List[str]], List[int]]:
    """
    Header, data rows and the physical line number of each data row

    Blank lines are skipped; every other line must have as many fields as
    the header.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle, skipinitialspace=True)
        header: Optional[List[str]] = None
        rows: List[List[str]] = []
        line_numbers: List[int] = []
        for fields in reader:
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            if header is None:
                header = [field.strip() for field in fields]
                continue
            if len(fields) != len(header):
                raise DataParseError(
                    f"ragged row: expected {len(header)} fields, found {len(fields)}",
                    path, reader.line_num
                )
            rows.append(fields)
            line_numbers.append(reader.line_num)

    if header is None:
        raise DataParseError("file is empty (header row required)", path, 1)
    return header, rows, line_numbers


def load_dense(
    path: PathLike,
    domain: Domain,
    label_names: Optional[Sequence[str]] = None
) -> LabeledDataset:
    """
    Load a CSV dataset

    Args:
        path: CSV file with a header row and a `label` column
        domain: Domain tag for the result
        label_names: Fixed label vocabulary (e.g. the source's) instead of
            deriving one from the file

    Returns:
        LabeledDataset; feature order follows the column order
    """
    path = str(path)
    logger.debug(f"Loading dense dataset from {path}")

    header, rows, line_numbers = _read_rows(path)
    if LABEL_COLUMN not in header:
        raise DataParseError(f"missing '{LABEL_COLUMN}' column", path, 1)
    if len(set(header)) != len(header):
        raise DataParseError("duplicate column name in header", path, 1)
    frame = pd.DataFrame(rows, columns=header, dtype=str)

    feature_columns = [c for c in frame.columns if c != LABEL_COLUMN]

    features = np.empty((len(frame), len(feature_columns)), dtype=np.float64)
    for j, column in enumerate(feature_columns):
        cells = frame[column].str.strip()
        coerced = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(coerced)
        if bad.any():
            row = int(np.argmax(bad))
            raise DataParseError(
                f"non-numeric feature value {cells.iloc[row]!r} in column '{column}'",
                path, line_numbers[row]
            )
        features[:, j] = cells.astype(np.float64).to_numpy()

    tokens = [_canonical_label(t) for t in frame[LABEL_COLUMN].tolist()]
    if any(t == "" for t in tokens):
        raise DataParseError("empty label", path, line_numbers[tokens.index("")])
    labels, vocabulary = _encode_labels(tokens, label_names, path, first_line=2, line_numbers=line_numbers)

    if not vocabulary:
        vocabulary = ("0",)

    dataset = LabeledDataset(
        features=features,
        labels=labels,
        domain=domain,
        num_classes=len(vocabulary),
        label_names=vocabulary,
        feature_names=tuple(feature_columns),
    )
    logger.info(f"Loaded {dataset.n} {Domain(domain).value} examples (d={dataset.dim}, K={dataset.num_classes}) from {path}")
    return dataset


def save_dense(dataset: LabeledDataset, path: PathLike) -> None:
    """Write a dataset as CSV; floats use shortest round-trip repr"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    columns = {
        name: [repr(float(v)) for v in dataset.features[:, j]]
        for j, name in enumerate(dataset.feature_names)
    }
    frame = pd.DataFrame(columns, columns=list(dataset.feature_names))
    frame.insert(0, LABEL_COLUMN, [dataset.label_names[k] for k in dataset.labels])
    frame.to_csv(path, index=False, lineterminator="\n")


def load_sparse(
    path: PathLike,
    dim: int,
    domain: Domain,
    label_names: Optional[Sequence[str]] = None
) -> LabeledDataset:
    """
    Load a sparse `label idx:val ...` file into a dense dataset

    Args:
        path: Text file, one example per line, 1-based feature indices
        dim: Number of features
        domain: Domain tag for the result
        label_names: Fixed label vocabulary

    Returns:
        LabeledDataset with absent indices set to 0
    """
    path = str(path)
    if dim < 0:
        raise ValidationError(f"dim must be non-negative, got {dim}")

    rows: List[np.ndarray] = []
    tokens: List[str] = []
    line_numbers: List[int] = []

    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            words = line.split()
            if not words:
                continue

            features = np.zeros(dim, dtype=np.float64)
            seen = set()
            for word in words[1:]:
                index_text, sep, value_text = word.partition(":")
                if not sep:
                    raise DataParseError(f"expected idx:val, got {word!r}", path, line_number)
                try:
                    index = int(index_text)
                    value = float(value_text)
                except ValueError:
                    raise DataParseError(f"malformed entry {word!r}", path, line_number)
                if index < 1 or index > dim:
                    raise DataParseError(f"feature index {index} outside 1..{dim}", path, line_number)
                if index in seen:
                    raise DataParseError(f"duplicate feature index {index}", path, line_number)
                if not np.isfinite(value):
                    raise DataParseError(f"non-finite value in {word!r}", path, line_number)
                seen.add(index)
                features[index - 1] = value

            rows.append(features)
            tokens.append(_canonical_label(words[0]))
            line_numbers.append(line_number)

    labels, vocabulary = _encode_labels(tokens, label_names, path, first_line=1,
                                        line_numbers=line_numbers)
    if not vocabulary:
        vocabulary = ("0",)

    matrix = np.vstack(rows) if rows else np.zeros((0, dim))
    dataset = LabeledDataset(
        features=matrix,
        labels=labels,
        domain=domain,
        num_classes=len(vocabulary),
        label_names=vocabulary,
    )
    logger.info(f"Loaded {dataset.n} sparse {Domain(domain).value} examples (d={dim}) from {path}")
    return dataset


def save_sparse(dataset: LabeledDataset, path: PathLike) -> None:
    """Write a dataset in the sparse text format, zeros omitted"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "w", encoding="utf-8") as f:
        for row, label in zip(dataset.features, dataset.labels):
            entries = [f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v != 0.0]
            f.write(" ".join([dataset.label_names[label]] + entries) + "\n")


def split_indices(data: LabeledDataset, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted (train, test) row indices for a split"""
    if any(k >= data.num_classes for k in spec.holdout_classes):
        raise ValidationError(
            f"holdout classes {list(spec.holdout_classes)} outside 0..{data.num_classes - 1}"
        )

    rng = np.random.default_rng(spec.seed)
    holdout = set(spec.holdout_classes)
    train_parts = []

    for k in range(data.num_classes):
        members = np.flatnonzero(data.labels == k)
        if k in holdout:
            continue
        if members.size < spec.train_per_class:
            raise ValidationError(
                f"class {k} ({data.label_names[k]}) has {members.size} examples, "
                f"fewer than train_per_class={spec.train_per_class}"
            )
        train_parts.append(rng.permutation(members)[:spec.train_per_class])

    train = np.sort(np.concatenate(train_parts)) if train_parts else np.zeros(0, dtype=np.int64)
    mask = np.ones(data.n, dtype=bool)
    mask[train] = False
    test = np.flatnonzero(mask)
    return train.astype(np.int64), test.astype(np.int64)


def make_split(data: LabeledDataset, spec: SplitSpec) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Partition a dataset into labeled training and test parts

    Args:
        data: Dataset to split
        spec: Examples per class, held-out classes and seed

    Returns:
        (train, test); holdout classes go entirely to test
    """
    train, test = split_indices(data, spec)
    logger.debug(f"Split seed={spec.seed}: {train.size} train / {test.size} test")
    return data.subset(train), data.subset(test)
