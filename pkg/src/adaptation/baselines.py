"""
Non-adaptive baselines and evaluation metrics
svm_s, svm_t and pooled one-vs-all SVMs, accuracy and the constraint-count model
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Sequence

import numpy as np

from src.adaptation.hyperplanes import HyperplaneSet, argmax_lowest, fit_one_vs_all
from src.data.dataset import LabeledDataset, augment_rows
from src.utils.errors import UnsupportedFeatureSpaceError, ValidationError

logger = logging.getLogger(__name__)


class ConstraintMethod(str, Enum):
    """Methods compared by the constraint-count scaling model"""
    MMDT = "mmdt"
    ARCT = "arct"


def _train_one_vs_all(
    data: LabeledDataset,
    C: float,
    solver_tol: float,
    max_passes: int,
    name: str
) -> HyperplaneSet:
    if data.n == 0:
        raise ValidationError(f"{name} needs a non-empty training set")
    if not C > 0:
        raise ValidationError(f"C must be positive, got {C}")

    hyperplanes, solutions = fit_one_vs_all(
        data.features,
        data.labels,
        np.full(data.n, float(C)),
        np.ones(data.n),
        data.num_classes,
        solver_tol,
        max_passes,
        name=name,
    )
    logger.debug(f"{name}: n={data.n} d={data.dim} K={data.num_classes} "
                 f"objective={sum(s.objective for s in solutions):.10g}")
    return hyperplanes


def train_svm_source(
    source: LabeledDataset,
    C: float = 1.0,
    solver_tol: float = 1e-6,
    max_passes: int = 10000
) -> HyperplaneSet:
    """
    svm_s: one-vs-all SVM on source data alone

    Solves the same per-class problems as the classifier step with no target
    data, so the planes coincide with that step.
    """
    return _train_one_vs_all(source, C, solver_tol, max_passes, "svm_s")


def train_svm_target(
    target_train: LabeledDataset,
    C: float = 1.0,
    solver_tol: float = 1e-6,
    max_passes: int = 10000
) -> HyperplaneSet:
    """svm_t: one-vs-all SVM in target space; classes without examples get all-negative planes"""
    return _train_one_vs_all(target_train, C, solver_tol, max_passes, "svm_t")


def train_svm_pooled(
    source: LabeledDataset,
    target_train: LabeledDataset,
    C: float = 1.0,
    solver_tol: float = 1e-6,
    max_passes: int = 10000
) -> HyperplaneSet:
    """
    svm_st: one-vs-all SVM on source and target rows pooled together

    Args:
        source: Source training set
        target_train: Labeled target set with the same feature space
        C: Hinge weight shared by both domains

    Returns:
        HyperplaneSet usable on raw features of either domain
    """
    if source.dim != target_train.dim:
        raise UnsupportedFeatureSpaceError(
            f"heterogeneous features unsupported by svm_st (d_S={source.dim}, d_T={target_train.dim})"
        )
    if source.num_classes != target_train.num_classes:
        raise ValidationError("source and target disagree on the number of classes")

    pooled = LabeledDataset(
        features=np.vstack([source.features, target_train.features]),
        labels=np.concatenate([source.labels, target_train.labels]),
        domain=source.domain,
        num_classes=source.num_classes,
        label_names=source.label_names,
    )
    return _train_one_vs_all(pooled, C, solver_tol, max_passes, "svm_st")


def predict_svm(hyperplanes: HyperplaneSet, features: np.ndarray, model_name: str = "svm_s") -> np.ndarray:
    """
    Class indices for raw feature rows under a baseline classifier

    Raises:
        UnsupportedFeatureSpaceError: Rows do not live in the classifier's space
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != hyperplanes.dim:
        raise UnsupportedFeatureSpaceError(
            f"heterogeneous features unsupported by {model_name} "
            f"(model d={hyperplanes.dim}, data d={features.shape[1]})"
        )
    return argmax_lowest(hyperplanes.scores(augment_rows(features)))


def multiclass_accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Fraction of exact matches"""
    predictions = np.asarray(predictions).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if predictions.size == 0:
        raise ValidationError("accuracy of an empty prediction set is undefined")
    if predictions.shape != labels.shape:
        raise ValidationError(f"{predictions.size} predictions for {labels.size} labels")
    return float(np.mean(predictions == labels))


def per_class_accuracy(
    predictions: Sequence[int],
    labels: Sequence[int],
    label_names: Sequence[str]
) -> Dict[str, float]:
    """Accuracy restricted to each class present in labels, keyed by label name"""
    predictions = np.asarray(predictions).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    result = {}
    for k, name in enumerate(label_names):
        mask = labels == k
        if mask.any():
            result[name] = float(np.mean(predictions[mask] == k))
    return result


def constraint_count(method: ConstraintMethod, num_classes: int, n_source: int, n_target: int) -> int:
    """
    Hinge constraints a method must handle

    mmdt's transform step has one per (target point, class); ARC-t pairs every
    source point with every target point.
    """
    if min(num_classes, n_source, n_target) < 0:
        raise ValidationError("constraint counts need nonnegative sizes")
    if ConstraintMethod(method) == ConstraintMethod.MMDT:
        return int(num_classes) * int(n_target)
    return int(n_source) * int(n_target)


@dataclass(frozen=True)
class AccuracySummary:
    """Mean, sample standard deviation and standard error over repeats"""
    mean: float
    std: float
    stderr: float
    count: int

    def to_dict(self) -> Dict[str, float]:
        return {"mean": self.mean, "std": self.std, "stderr": self.stderr, "count": self.count}


def summarize(values: Sequence[float]) -> AccuracySummary:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("cannot summarize an empty result list")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return AccuracySummary(
        mean=float(np.mean(values)),
        std=std,
        stderr=std / float(np.sqrt(values.size)),
        count=int(values.size),
    )
