"""
One-vs-all hyperplanes in augmented source space and their per-class fitting
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.solvers.hinge import HingeProblem, HingeSolution, objective, solve
from src.utils.errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HyperplaneSet:
    """
    K affine hyperplanes, row k = [theta_k; b_k]

    Scores of an augmented point z are planes @ z; only theta_k is regularized.
    """
    planes: np.ndarray

    def __post_init__(self):
        planes = np.array(self.planes, dtype=np.float64)
        if planes.ndim != 2 or planes.shape[0] < 1 or planes.shape[1] < 1:
            raise ValidationError(f"planes must be a K x (d+1) matrix, got shape {planes.shape}")
        if not np.all(np.isfinite(planes)):
            raise ValidationError("hyperplanes contain non-finite values")
        planes.setflags(write=False)
        object.__setattr__(self, "planes", planes)

    @property
    def num_classes(self) -> int:
        return int(self.planes.shape[0])

    @property
    def dim(self) -> int:
        """d of the space the planes live in (without the bias slot)"""
        return int(self.planes.shape[1] - 1)

    @property
    def theta(self) -> np.ndarray:
        return self.planes[:, :-1]

    @property
    def bias(self) -> np.ndarray:
        return self.planes[:, -1]

    def scores(self, augmented: np.ndarray) -> np.ndarray:
        """n x K scores for n augmented rows"""
        augmented = np.atleast_2d(np.asarray(augmented, dtype=np.float64))
        if augmented.shape[1] != self.planes.shape[1]:
            raise ValidationError(
                f"points have {augmented.shape[1]} augmented coordinates, planes expect {self.planes.shape[1]}"
            )
        return augmented @ self.planes.T

    def regularizer(self) -> float:
        """sum_k 1/2 ||theta_k||^2"""
        return float(0.5 * np.sum(self.theta * self.theta))

    @classmethod
    def zeros(cls, num_classes: int, dim: int) -> "HyperplaneSet":
        return cls(np.zeros((num_classes, dim + 1)))


def argmax_lowest(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index"""
    return np.argmax(scores, axis=1).astype(np.int64)


def one_vs_all_signs(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """n x K matrix with +1 where label == k, else -1"""
    labels = np.asarray(labels, dtype=np.int64)
    return np.where(labels[:, None] == np.arange(num_classes)[None, :], 1.0, -1.0)


def fit_one_vs_all(
    examples: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    bias_scale: np.ndarray,
    num_classes: int,
    solver_tol: float,
    max_passes: int,
    name: str = "classifier",
    previous: Optional[HyperplaneSet] = None
) -> Tuple[HyperplaneSet, List[HingeSolution]]:
    """
    Solve the K binary hinge problems of a one-vs-all classifier

    Args:
        examples: n x d rows (without the bias slot)
        labels: Class index per row
        weights: Per-row hinge weight (C_S or C_T)
        bias_scale: Per-row coefficient of b_k
        num_classes: K
        solver_tol: Tolerance for the whole set; each plane gets solver_tol / K
        max_passes: Solver pass cap
        name: Label for logs and metrics
        previous: Planes to keep wherever the new solve does not lower a
            plane's objective

    Returns:
        (HyperplaneSet, per-plane solutions), planes in class order
    """
    signs = one_vs_all_signs(labels, num_classes)
    per_plane_tol = solver_tol / num_classes
    planes, solutions = [], []
    for k in range(num_classes):
        problem = HingeProblem(
            examples=examples,
            signs=signs[:, k],
            weights=weights,
            fit_bias=True,
            bias_scale=bias_scale,
        )
        solution = solve(problem, tol=per_plane_tol, max_passes=max_passes, name=name)
        plane = np.append(solution.w, solution.b)
        if previous is not None:
            kept = previous.planes[k]
            if objective(problem, kept[:-1], kept[-1]) < solution.objective:
                logger.debug(f"{name} plane {k}: previous plane has the lower objective, kept")
                plane = np.array(kept)
        planes.append(plane)
        solutions.append(solution)
    return HyperplaneSet(np.vstack(planes)), solutions
