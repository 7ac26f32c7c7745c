"""
Asymmetric target-to-source transform W
Projection of target points and the vec(W) reduction of the transform step
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.adaptation.hyperplanes import HyperplaneSet, one_vs_all_signs
from src.data.dataset import LabeledDataset, augment, augment_rows
from src.solvers.hinge import HingeProblem, HingeSolution, solve
from src.utils.errors import ValidationError
from src.utils.metrics import track_step_latency

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransformMatrix:
    """
    W of shape (d_S+1) x (d_T+1), mapping [x_t; 1] into augmented source space

    vec(W) is the row-major flattening.
    """
    w: np.ndarray
    d_source: int
    d_target: int

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        expected = (self.d_source + 1, self.d_target + 1)
        if w.shape != expected:
            raise ValidationError(f"transform must have shape {expected}, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("transform contains non-finite values")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.d_source + 1, self.d_target + 1)

    def flatten(self) -> np.ndarray:
        return self.w.reshape(-1).copy()

    @classmethod
    def from_flat(cls, vector: np.ndarray, d_source: int, d_target: int) -> "TransformMatrix":
        vector = np.asarray(vector, dtype=np.float64)
        return cls(vector.reshape(d_source + 1, d_target + 1), d_source, d_target)

    def frobenius_sq(self) -> float:
        return float(np.sum(self.w * self.w))

    @classmethod
    def zeros(cls, d_source: int, d_target: int) -> "TransformMatrix":
        return cls(np.zeros((d_source + 1, d_target + 1)), d_source, d_target)

    @classmethod
    def identity_pad(cls, d_source: int, d_target: int) -> "TransformMatrix":
        """Identity on the shared leading coordinates, 1 in the bias corner"""
        w = np.zeros((d_source + 1, d_target + 1))
        shared = min(d_source, d_target)
        w[np.arange(shared), np.arange(shared)] = 1.0
        w[d_source, d_target] = 1.0
        return cls(w, d_source, d_target)

    def with_pinned_row(self) -> "TransformMatrix":
        """Same W with the last row fixed to [0 ... 0 1]"""
        w = np.array(self.w)
        w[-1, :] = 0.0
        w[-1, -1] = 1.0
        return TransformMatrix(w, self.d_source, self.d_target)


def project(W: TransformMatrix, x_t: Sequence[float]) -> np.ndarray:
    """
    Map a target point into augmented source space

    Args:
        W: Transform
        x_t: Target feature vector of length d_T

    Returns:
        W @ [x_t; 1], length d_S+1
    """
    x_t = np.asarray(x_t, dtype=np.float64).reshape(-1)
    if x_t.shape[0] != W.d_target:
        raise ValidationError(f"target point has {x_t.shape[0]} features, W expects {W.d_target}")
    return W.w @ augment(x_t)


def project_rows(W: TransformMatrix, features: np.ndarray) -> np.ndarray:
    """n x (d_S+1) projections of n target rows"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != W.d_target:
        raise ValidationError(f"target rows have shape {features.shape}, W expects d_T={W.d_target}")
    return augment_rows(features) @ W.w.T


def _check_inputs(target_train: LabeledDataset, hyperplanes: HyperplaneSet, c_target: float):
    if target_train.n == 0:
        raise ValidationError("the transform step needs at least one labeled target example")
    if not c_target > 0:
        raise ValidationError(f"C_T must be positive, got {c_target}")
    if hyperplanes.num_classes != target_train.num_classes:
        raise ValidationError(
            f"{hyperplanes.num_classes} hyperplanes for {target_train.num_classes} target classes"
        )


def build_transform_problem(
    target_train: LabeledDataset,
    hyperplanes: HyperplaneSet,
    c_target: float,
    pin_augmented_row: bool = False
) -> HingeProblem:
    """
    Reduce the transform step to a hinge problem in vec(W)

    Uses h^T W z = <W, h z^T>_F: the example for target point i and class k
    is the row-major flattening of [theta_k; b_k] [x_i; 1]^T, ordered i-major.

    Args:
        target_train: Labeled target examples
        hyperplanes: Current hyperplanes
        c_target: C_T
        pin_augmented_row: Keep W's last row at [0 ... 0 1]; the problem then
            covers only the first d_S rows and b_k becomes a fixed offset

    Returns:
        HingeProblem with K * n_T examples and no bias
    """
    _check_inputs(target_train, hyperplanes, c_target)
    planes = hyperplanes.theta if pin_augmented_row else hyperplanes.planes
    return _outer_product_problem(target_train, hyperplanes, planes, c_target, pin_augmented_row)


def _outer_product_problem(
    target_train: LabeledDataset,
    hyperplanes: HyperplaneSet,
    left: np.ndarray,
    c_target: float,
    pin_augmented_row: bool
) -> HingeProblem:
    K = hyperplanes.num_classes
    Z = target_train.augmented()
    signs = one_vs_all_signs(target_train.labels, K).reshape(-1)
    weights = np.full(signs.shape[0], float(c_target))
    examples = np.einsum("ka,ib->ikab", left, Z).reshape(target_train.n * K, -1)

    offsets = None
    if pin_augmented_row:
        # (W z)_last = z_last = 1, so b_k contributes a constant score
        offsets = np.tile(hyperplanes.bias, target_train.n)
    return HingeProblem(examples=examples, signs=signs, weights=weights,
                        fit_bias=False, offsets=offsets, factors=(left, Z))


def _row_space_problem(
    target_train: LabeledDataset,
    hyperplanes: HyperplaneSet,
    c_target: float,
    pin_augmented_row: bool
) -> Tuple[HingeProblem, np.ndarray]:
    """
    The transform problem over W = U V, U an orthonormal basis of the planes' span

    Scores depend on W only through U^T W and the regularizer only grows with
    the orthogonal part, so the optimum over V is the optimum over W.
    Returns the problem in vec(V) together with U.
    """
    _check_inputs(target_train, hyperplanes, c_target)
    planes = hyperplanes.theta if pin_augmented_row else hyperplanes.planes
    basis, coords = np.linalg.qr(planes.T)
    problem = _outer_product_problem(target_train, hyperplanes, coords.T, c_target, pin_augmented_row)
    return problem, basis


def transform_objective(
    W: TransformMatrix,
    target_train: LabeledDataset,
    hyperplanes: HyperplaneSet,
    c_target: float
) -> float:
    """Direct evaluation of 1/2 ||W||_F^2 + C_T sum_k sum_i hinge"""
    if target_train.n == 0:
        return 0.5 * W.frobenius_sq()
    scores = hyperplanes.scores(project_rows(W, target_train.features))
    signs = one_vs_all_signs(target_train.labels, hyperplanes.num_classes)
    losses = np.maximum(0.0, 1.0 - signs * scores)
    return float(0.5 * W.frobenius_sq() + c_target * np.sum(losses))


@track_step_latency("transform")
def fit_transform_step(
    target_train: LabeledDataset,
    hyperplanes: HyperplaneSet,
    c_target: float,
    tol: float = 1e-6,
    max_passes: int = 10000,
    pin_augmented_row: bool = False
) -> Tuple[TransformMatrix, HingeSolution]:
    """
    Transform step returning the solver certificate alongside W

    The solve runs in the span of the planes, so the certificate's w is
    vec(V) of W = U V rather than vec(W); objective and gap are those of W,
    less the constant 1/2 of a pinned last row.
    """
    problem, basis = _row_space_problem(target_train, hyperplanes, c_target, pin_augmented_row)
    solution = solve(problem, tol=tol, max_passes=max_passes, name="transform")

    d_source, d_target = hyperplanes.dim, target_train.dim
    rows = basis @ solution.w.reshape(basis.shape[1], d_target + 1)
    if pin_augmented_row:
        last = np.zeros((1, d_target + 1))
        last[0, -1] = 1.0
        W = TransformMatrix(np.vstack([rows, last]), d_source, d_target)
    else:
        W = TransformMatrix(rows, d_source, d_target)

    logger.debug(f"Transform step: m={problem.num_examples} p={problem.num_features} "
                 f"objective={solution.objective:.10g} gap={solution.suboptimality_bound:.2e}")
    return W, solution


def solve_transform_step(
    target_train: LabeledDataset,
    hyperplanes: HyperplaneSet,
    c_target: float,
    tol: float = 1e-6,
    max_passes: int = 10000,
    pin_augmented_row: bool = False
) -> TransformMatrix:
    """
    Minimize 1/2 ||W||_F^2 + C_T sum_k sum_i hinge over W with planes fixed

    Args:
        target_train: Labeled target examples
        hyperplanes: Hyperplanes from the classifier step
        c_target: C_T
        tol: Suboptimality bound for the step objective
        max_passes: Solver pass cap

    Returns:
        TransformMatrix of shape (d_S+1) x (d_T+1)
    """
    W, _ = fit_transform_step(target_train, hyperplanes, c_target, tol, max_passes, pin_augmented_row)
    return W
