"""
Max-margin domain transform
Joint objective, alternating minimization driver, prediction and model I/O
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from src.adaptation.hyperplanes import HyperplaneSet, argmax_lowest, fit_one_vs_all, one_vs_all_signs
from src.adaptation.transform import (
    TransformMatrix,
    fit_transform_step,
    project,
    project_rows,
    transform_objective,
)
from src.data.dataset import Domain, LabeledDataset, augment, augment_rows
from src.solvers.hinge import HingeProblem
from src.utils.config import Config, get_config
from src.utils.errors import DescentViolationError, ValidationError
from src.utils.metrics import record_objective, track_step_latency

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

StepCallback = Callable[[int, str, float], None]


class TrainConfig(BaseModel):
    """Hyperparameters of the alternating minimization"""
    model_config = ConfigDict(frozen=True)

    c_source: float = Field(1.0, gt=0)
    c_target: float = Field(1.0, gt=0)
    max_outer_iters: int = Field(50, ge=1)
    outer_tol: float = Field(1e-4, gt=0)
    solver_tol: float = Field(1e-6, gt=0)
    solver_max_passes: int = Field(10000, ge=1)
    seed: int = 0
    init: Literal["zero", "identity_pad"] = "zero"
    pin_augmented_row: bool = False

    @classmethod
    def from_defaults(cls, config: Optional[Config] = None, **overrides) -> "TrainConfig":
        """Build from configs/config.yaml, explicit keyword values win"""
        config = config or get_config()
        values: Dict[str, Any] = dict(config.get_train_defaults())
        solver = config.get_solver_defaults()
        if "tol" in solver:
            values["solver_tol"] = solver["tol"]
        if "max_passes" in solver:
            values["solver_max_passes"] = solver["max_passes"]
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**{k: v for k, v in values.items() if k in cls.model_fields})


@dataclass(frozen=True)
class MmdtModel:
    """Trained transform and hyperplanes with the objective trace"""
    transform: TransformMatrix
    hyperplanes: HyperplaneSet
    config: TrainConfig
    objective_history: Tuple[float, ...]
    converged: bool
    outer_iters_run: int
    label_names: Tuple[str, ...] = field(default=())

    @property
    def num_classes(self) -> int:
        return self.hyperplanes.num_classes

    @property
    def d_source(self) -> int:
        return self.transform.d_source

    @property
    def d_target(self) -> int:
        return self.transform.d_target

    def target_scores(self, features: np.ndarray) -> np.ndarray:
        """n x K scores of target rows through W"""
        return self.hyperplanes.scores(project_rows(self.transform, np.atleast_2d(features)))

    def source_scores(self, features: np.ndarray) -> np.ndarray:
        """n x K scores of source rows"""
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[1] != self.d_source:
            raise ValidationError(f"source rows have {features.shape[1]} features, model expects {self.d_source}")
        return self.hyperplanes.scores(augment_rows(features))

    def decision_scores(self, features: np.ndarray, domain: Domain = Domain.TARGET) -> np.ndarray:
        if Domain(domain) == Domain.SOURCE:
            return self.source_scores(features)
        return self.target_scores(features)

    def predict_target_batch(self, features: np.ndarray) -> np.ndarray:
        return argmax_lowest(self.target_scores(features))

    def predict_source_batch(self, features: np.ndarray) -> np.ndarray:
        return argmax_lowest(self.source_scores(features))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "num_classes": self.num_classes,
            "d_source": self.d_source,
            "d_target": self.d_target,
            "label_names": list(self.label_names),
            "transform": {
                "shape": list(self.transform.shape),
                "data": [float(v) for v in self.transform.w.reshape(-1)],
            },
            "hyperplanes": {
                "shape": list(self.hyperplanes.planes.shape),
                "data": [float(v) for v in self.hyperplanes.planes.reshape(-1)],
            },
            "config": self.config.model_dump(),
            "objective_history": [float(v) for v in self.objective_history],
            "converged": self.converged,
            "outer_iters_run": self.outer_iters_run,
        }

    def to_json(self) -> str:
        # json writes floats with repr, the shortest exact round-trip form
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MmdtModel":
        try:
            version = data["format_version"]
            if version != MODEL_FORMAT_VERSION:
                raise ValidationError(f"unsupported model format_version {version}")
            d_source, d_target = int(data["d_source"]), int(data["d_target"])
            transform_shape = tuple(data["transform"]["shape"])
            plane_shape = tuple(data["hyperplanes"]["shape"])
            transform = TransformMatrix(
                np.array(data["transform"]["data"], dtype=np.float64).reshape(transform_shape),
                d_source, d_target,
            )
            hyperplanes = HyperplaneSet(
                np.array(data["hyperplanes"]["data"], dtype=np.float64).reshape(plane_shape)
            )
            config = TrainConfig(**data["config"])
        except (KeyError, TypeError, ValueError, PydanticValidationError) as e:
            if isinstance(e, ValidationError):
                raise
            raise ValidationError(f"malformed model document: {e}") from e

        if hyperplanes.dim != d_source or hyperplanes.num_classes != int(data["num_classes"]):
            raise ValidationError("hyperplanes disagree with recorded d_source / num_classes")
        return cls(
            transform=transform,
            hyperplanes=hyperplanes,
            config=config,
            objective_history=tuple(float(v) for v in data["objective_history"]),
            converged=bool(data["converged"]),
            outer_iters_run=int(data["outer_iters_run"]),
            label_names=tuple(data.get("label_names") or ()),
        )

    @classmethod
    def from_json(cls, text: str) -> "MmdtModel":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValidationError(f"model file is not valid JSON: {e}") from e
        return cls.from_dict(data)

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        logger.info(f"Model saved to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MmdtModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _check_shapes(
    W: TransformMatrix,
    hyperplanes: HyperplaneSet,
    source: Optional[LabeledDataset],
    target_train: Optional[LabeledDataset]
) -> None:
    if hyperplanes.dim != W.d_source:
        raise ValidationError(f"hyperplanes live in d={hyperplanes.dim}, W maps into d_S={W.d_source}")
    if source is not None:
        if source.dim != W.d_source:
            raise ValidationError(f"source has d={source.dim}, W expects d_S={W.d_source}")
        if source.num_classes != hyperplanes.num_classes:
            raise ValidationError(f"source has K={source.num_classes}, hyperplanes have K={hyperplanes.num_classes}")
    if target_train is not None:
        if target_train.dim != W.d_target:
            raise ValidationError(f"target has d={target_train.dim}, W expects d_T={W.d_target}")
        if target_train.num_classes != hyperplanes.num_classes:
            raise ValidationError(f"target has K={target_train.num_classes}, hyperplanes have K={hyperplanes.num_classes}")


def joint_cost(
    W: TransformMatrix,
    hyperplanes: HyperplaneSet,
    source: LabeledDataset,
    target_train: LabeledDataset,
    c_source: float,
    c_target: float
) -> float:
    """
    Joint objective J(W, theta, b)

    1/2 ||W||_F^2 + sum_k [1/2 ||theta_k||^2 + C_S sum_i L(source) + C_T sum_i L(W target)];
    b_k is not regularized.
    """
    _check_shapes(W, hyperplanes, source, target_train)
    K = hyperplanes.num_classes
    total = 0.5 * W.frobenius_sq() + hyperplanes.regularizer()

    if source.n:
        scores = hyperplanes.scores(source.augmented())
        total += c_source * float(np.sum(np.maximum(0.0, 1.0 - one_vs_all_signs(source.labels, K) * scores)))
    if target_train.n:
        scores = hyperplanes.scores(project_rows(W, target_train.features))
        total += c_target * float(np.sum(np.maximum(0.0, 1.0 - one_vs_all_signs(target_train.labels, K) * scores)))
    return float(total)


def classifier_data(
    W: TransformMatrix,
    source: LabeledDataset,
    target_train: LabeledDataset,
    c_source: float,
    c_target: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Stacked (examples, labels, weights, bias_scale) of the classifier step

    Source rows enter as x with bias coefficient 1; target rows as the first
    d_S coordinates of z = W [x; 1], whose last coordinate multiplies b_k.
    """
    d_source = W.d_source
    parts, labels, weights, bias_scale = [], [], [], []

    if source.n:
        parts.append(source.features)
        labels.append(source.labels)
        weights.append(np.full(source.n, float(c_source)))
        bias_scale.append(np.ones(source.n))
    if target_train.n:
        Z = project_rows(W, target_train.features)
        parts.append(Z[:, :d_source])
        labels.append(target_train.labels)
        weights.append(np.full(target_train.n, float(c_target)))
        bias_scale.append(Z[:, d_source])

    if not parts:
        raise ValidationError("the classifier step needs at least one source or target example")

    return (
        np.vstack(parts),
        np.concatenate(labels),
        np.concatenate(weights),
        np.concatenate(bias_scale),
    )


def classifier_problem(
    k: int,
    W: TransformMatrix,
    source: LabeledDataset,
    target_train: LabeledDataset,
    c_source: float,
    c_target: float
) -> HingeProblem:
    """Hinge problem for plane k with W fixed"""
    examples, labels, weights, bias_scale = classifier_data(W, source, target_train, c_source, c_target)
    return HingeProblem(
        examples=examples,
        signs=np.where(labels == k, 1.0, -1.0),
        weights=weights,
        fit_bias=True,
        bias_scale=bias_scale,
    )


@track_step_latency("classifier")
def solve_classifier_step(
    W: TransformMatrix,
    source: LabeledDataset,
    target_train: LabeledDataset,
    config: TrainConfig,
    previous: Optional[HyperplaneSet] = None
) -> HyperplaneSet:
    """
    Minimize J over (theta_k, b_k) with W fixed

    Args:
        W: Current transform
        source: Source training set
        target_train: Labeled target set (may be empty)
        config: Training configuration
        previous: Current planes; a plane whose new solve is not better is kept

    Returns:
        HyperplaneSet with one plane per class
    """
    if source.dim != W.d_source:
        raise ValidationError(f"source has d={source.dim}, W expects d_S={W.d_source}")
    if target_train.dim != W.d_target:
        raise ValidationError(f"target has d={target_train.dim}, W expects d_T={W.d_target}")
    if source.num_classes != target_train.num_classes:
        raise ValidationError("source and target disagree on the number of classes")

    examples, labels, weights, bias_scale = classifier_data(
        W, source, target_train, config.c_source, config.c_target
    )
    hyperplanes, _ = fit_one_vs_all(
        examples, labels, weights, bias_scale, source.num_classes,
        config.solver_tol, config.solver_max_passes, previous=previous,
    )
    return hyperplanes


def _initial_transform(config: TrainConfig, d_source: int, d_target: int) -> TransformMatrix:
    if config.init == "identity_pad":
        W = TransformMatrix.identity_pad(d_source, d_target)
    else:
        W = TransformMatrix.zeros(d_source, d_target)
    if config.pin_augmented_row:
        W = W.with_pinned_row()
    return W


def fit(
    source: LabeledDataset,
    target_train: LabeledDataset,
    config: TrainConfig,
    on_step: Optional[StepCallback] = None
) -> MmdtModel:
    """
    Alternate the classifier and transform steps until J stops decreasing

    Args:
        source: Labeled source data
        target_train: Labeled target data
        config: Training configuration
        on_step: Called with (outer iteration, step name, J) after each half-step

    Returns:
        Trained MmdtModel
    """
    if source.n == 0:
        raise ValidationError("source training set is empty")
    if target_train.n == 0:
        raise ValidationError("target training set is empty")
    if source.num_classes != target_train.num_classes:
        raise ValidationError(
            f"source has K={source.num_classes} classes, target has K={target_train.num_classes}"
        )

    K = source.num_classes
    slack = 2.0 * config.solver_tol
    W = _initial_transform(config, source.dim, target_train.dim)
    hyperplanes = HyperplaneSet.zeros(K, source.dim)

    logger.info(
        f"Fitting MMDT: n_S={source.n} n_T={target_train.n} K={K} "
        f"d_S={source.dim} d_T={target_train.dim} C_S={config.c_source} C_T={config.c_target}"
    )

    previous = joint_cost(W, hyperplanes, source, target_train, config.c_source, config.c_target)
    iteration_start = previous
    history: List[float] = []
    converged = False
    iteration = 0

    def record(step: str, value: float, last: float) -> float:
        if value > last + slack:
            raise DescentViolationError(iteration, step, last, value, slack)
        history.append(value)
        record_objective(step, value)
        logger.debug(f"iter={iteration} step={step} J={value:.17g}",
                     extra={"iteration": iteration, "step": step, "objective": value})
        if on_step is not None:
            on_step(iteration, step, value)
        return value

    for iteration in range(1, config.max_outer_iters + 1):
        hyperplanes = solve_classifier_step(W, source, target_train, config, previous=hyperplanes)
        previous = record(
            "classifier",
            joint_cost(W, hyperplanes, source, target_train, config.c_source, config.c_target),
            previous,
        )

        candidate, _ = fit_transform_step(
            target_train, hyperplanes, config.c_target,
            tol=config.solver_tol, max_passes=config.solver_max_passes,
            pin_augmented_row=config.pin_augmented_row,
        )
        if (transform_objective(candidate, target_train, hyperplanes, config.c_target)
                <= transform_objective(W, target_train, hyperplanes, config.c_target)):
            W = candidate
        else:
            logger.debug(f"iter={iteration}: transform step did not lower its objective, W kept")
        previous = record(
            "transform",
            joint_cost(W, hyperplanes, source, target_train, config.c_source, config.c_target),
            previous,
        )

        decrease = (iteration_start - previous) / max(iteration_start, 1e-12)
        iteration_start = previous
        if decrease < config.outer_tol:
            converged = True
            break

    logger.info(f"MMDT fit finished after {iteration} outer iterations: J={previous:.10g} converged={converged}")
    return MmdtModel(
        transform=W,
        hyperplanes=hyperplanes,
        config=config,
        objective_history=tuple(history),
        converged=converged,
        outer_iters_run=iteration,
        label_names=source.label_names,
    )


def predict_target(model: MmdtModel, x_t: Sequence[float]) -> int:
    """
    Class of a target point: argmax_k plane_k . (W [x_t; 1])

    Ties go to the lowest class index.
    """
    scores = model.hyperplanes.planes @ project(model.transform, x_t)
    return int(np.argmax(scores))


def predict_source(model: MmdtModel, x_s: Sequence[float]) -> int:
    """Class of a source point: argmax_k plane_k . [x_s; 1]"""
    x_s = np.asarray(x_s, dtype=np.float64).reshape(-1)
    if x_s.shape[0] != model.d_source:
        raise ValidationError(f"source point has {x_s.shape[0]} features, model expects {model.d_source}")
    scores = model.hyperplanes.planes @ augment(x_s)
    return int(np.argmax(scores))
