"""
Synthetic domain-shift generators
Gaussian class blobs in the source domain and an affine or projected copy in the target domain
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.adaptation.transform import TransformMatrix
from src.data.dataset import Domain, LabeledDataset
from src.utils.errors import ValidationError

logger = logging.getLogger(__name__)

MAX_CONDITION_NUMBER = 10.0
MAX_MEAN_ATTEMPTS = 1000
MAX_MATRIX_ATTEMPTS = 100
SCALE_RANGE = (0.5, 2.0)


class ShiftConfig(BaseModel):
    """Parameters of a synthetic source/target pair"""
    model_config = ConfigDict(frozen=True)

    num_classes: int = Field(..., ge=2)
    d_source: int = Field(..., ge=1)
    d_target: int = Field(..., ge=1)
    mean_scale: float = Field(5.0, gt=0)
    noise: float = Field(1.0, ge=0)
    kind: Literal["affine", "projection"] = "affine"
    samples_per_class: int = Field(20, ge=1)
    seed: int = 0
    translation_scale: float = Field(1.0, ge=0)
    matrix: Optional[Tuple[Tuple[float, ...], ...]] = None
    translation: Optional[Tuple[float, ...]] = None

    @model_validator(mode="after")
    def _check_shift(self) -> "ShiftConfig":
        if self.kind == "affine" and self.d_target != self.d_source:
            raise ValueError(
                f"affine shifts require d_target == d_source, got {self.d_target} and {self.d_source}"
            )
        if self.matrix is not None:
            shape = (len(self.matrix), len(self.matrix[0]) if self.matrix else 0)
            if shape != (self.d_target, self.d_source) or any(len(r) != self.d_source for r in self.matrix):
                raise ValueError(f"matrix must be {self.d_target} x {self.d_source}")
        if self.translation is not None:
            if self.kind != "affine":
                raise ValueError("translation applies to affine shifts only")
            if len(self.translation) != self.d_target:
                raise ValueError(f"translation must have length {self.d_target}")
        return self


class GenerateConfig(ShiftConfig):
    """ShiftConfig plus the target split written by cmd_generate"""
    target_train_per_class: int = Field(3, ge=0)
    holdout_classes: Tuple[int, ...] = ()

    @field_validator("holdout_classes")
    @classmethod
    def _sorted_unique(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(k < 0 for k in value):
            raise ValueError("holdout classes must be nonnegative")
        return tuple(sorted(set(value)))


@dataclass(frozen=True)
class ShiftTruth:
    """
    The shift a generator applied

    matrix is A (affine) or P (projection); w_star maps target points back
    onto the source distribution and exists for affine shifts only.
    """
    kind: str
    matrix: np.ndarray
    translation: Optional[np.ndarray] = None
    w_star: Optional[TransformMatrix] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "kind": self.kind,
            "matrix": self.matrix.tolist(),
            "translation": None if self.translation is None else self.translation.tolist(),
            "w_star": None if self.w_star is None else self.w_star.w.tolist(),
        }
        if self.kind == "affine":
            data["condition_number"] = invertibility_check(self)
        return data


def _class_means(rng: np.random.Generator, num_classes: int, dim: int, radius: float) -> np.ndarray:
    """Means on the sphere of the given radius, pairwise at least radius / 2 apart"""
    means: List[np.ndarray] = []
    min_distance = radius / 2.0
    for _ in range(num_classes):
        for _attempt in range(MAX_MEAN_ATTEMPTS):
            direction = rng.standard_normal(dim)
            norm = np.linalg.norm(direction)
            if norm == 0.0:
                continue
            candidate = radius * direction / norm
            if all(np.linalg.norm(candidate - m) >= min_distance for m in means):
                means.append(candidate)
                break
        else:
            raise ValidationError(
                f"cannot place {num_classes} class means {min_distance:g} apart on a sphere in d={dim}"
            )
    return np.vstack(means)


def _orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """rows x cols matrix with orthonormal columns (rows >= cols)"""
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def _random_affine(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random orthogonal times a diagonal scale, resampled until well conditioned"""
    for _ in range(MAX_MATRIX_ATTEMPTS):
        q = _orthonormal(rng, dim, dim)
        A = q @ np.diag(rng.uniform(*SCALE_RANGE, size=dim))
        if np.linalg.cond(A) <= MAX_CONDITION_NUMBER:
            return A
    raise ValidationError(f"no affine map with condition number <= {MAX_CONDITION_NUMBER} found")


def _random_projection(rng: np.random.Generator, d_target: int, d_source: int) -> np.ndarray:
    rank = min(d_target, d_source)
    u = _orthonormal(rng, d_target, rank)
    v = _orthonormal(rng, d_source, rank)
    return u @ np.diag(rng.uniform(*SCALE_RANGE, size=rank)) @ v.T


def _draw(rng: np.random.Generator, means: np.ndarray, per_class: int, noise: float) -> Tuple[np.ndarray, np.ndarray]:
    labels = np.repeat(np.arange(means.shape[0]), per_class)
    points = means[labels] + noise * rng.standard_normal((labels.size, means.shape[1]))
    return points, labels


def recovery_transform(matrix: np.ndarray, translation: np.ndarray) -> TransformMatrix:
    """W* = [[A^-1, -A^-1 t], [0, 1]], the transform undoing an affine shift"""
    dim = matrix.shape[0]
    try:
        inverse = np.linalg.inv(matrix)
    except np.linalg.LinAlgError as e:
        raise ValidationError(f"affine shift matrix is singular: {e}") from e
    w = np.zeros((dim + 1, dim + 1))
    w[:dim, :dim] = inverse
    w[:dim, dim] = -inverse @ translation
    w[dim, dim] = 1.0
    return TransformMatrix(w, dim, dim)


def generate(config: ShiftConfig) -> Tuple[LabeledDataset, LabeledDataset, ShiftTruth]:
    """
    Draw a source dataset and a shifted target dataset

    Args:
        config: Shift parameters; the seed fixes every draw

    Returns:
        (source, target, truth); rows are grouped by class in index order
    """
    rng = np.random.default_rng(config.seed)
    K = config.num_classes
    means = _class_means(rng, K, config.d_source, config.mean_scale)

    if config.kind == "affine":
        if config.matrix is not None:
            matrix = np.array(config.matrix, dtype=np.float64)
            condition = np.linalg.cond(matrix)
            if not condition <= MAX_CONDITION_NUMBER:
                raise ValidationError(
                    f"affine matrix has condition number {condition:.3g}, at most {MAX_CONDITION_NUMBER:g} allowed"
                )
        else:
            matrix = _random_affine(rng, config.d_source)
        if config.translation is not None:
            translation = np.array(config.translation, dtype=np.float64)
        else:
            translation = config.translation_scale * rng.standard_normal(config.d_target)
        truth = ShiftTruth("affine", matrix, translation, recovery_transform(matrix, translation))
    else:
        if config.matrix is not None:
            matrix = np.array(config.matrix, dtype=np.float64)
        else:
            matrix = _random_projection(rng, config.d_target, config.d_source)
        translation = np.zeros(config.d_target)
        truth = ShiftTruth("projection", matrix)

    source_x, source_y = _draw(rng, means, config.samples_per_class, config.noise)
    fresh_x, target_y = _draw(rng, means, config.samples_per_class, config.noise)
    target_x = fresh_x @ matrix.T + translation
    target_x = target_x + config.noise * rng.standard_normal(target_x.shape)

    source = LabeledDataset(source_x, source_y, Domain.SOURCE, K)
    target = LabeledDataset(target_x, target_y, Domain.TARGET, K)
    logger.info(
        f"Generated {config.kind} shift: K={K} d_S={config.d_source} d_T={config.d_target} "
        f"n_S={source.n} n_T={target.n} seed={config.seed}"
    )
    return source, target, truth


def invertibility_check(truth: ShiftTruth) -> float:
    """Condition number of an affine shift matrix"""
    if truth.kind != "affine":
        raise ValidationError("invertibility is defined for affine shifts only")
    return float(np.linalg.cond(truth.matrix))
