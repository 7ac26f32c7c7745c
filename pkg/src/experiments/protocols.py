"""
Experiment protocols on synthetic domain shifts
Standard, heterogeneous, novel-category and scaling evaluations with seeded splits
"""

import json
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from src.adaptation.baselines import (
    ConstraintMethod,
    constraint_count,
    multiclass_accuracy,
    predict_svm,
    summarize,
    train_svm_pooled,
    train_svm_source,
    train_svm_target,
)
from src.adaptation.mmdt import TrainConfig, fit
from src.data.dataset import LabeledDataset, SplitSpec, make_split
from src.data.synthgen import ShiftConfig, generate
from src.utils.config import get_config
from src.utils.errors import UnsupportedFeatureSpaceError, ValidationError

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1


class Protocol(str, Enum):
    """Evaluation settings exposed by cmd_experiment"""
    STANDARD = "standard"
    HETEROGENEOUS = "heterogeneous"
    NOVEL_CATEGORY = "novel-category"
    SCALING = "scaling"


class ExperimentConfig(BaseModel):
    """Data, training and split parameters of an experiment"""
    model_config = ConfigDict(frozen=True)

    shift: ShiftConfig
    train: TrainConfig = Field(default_factory=TrainConfig)
    source_per_class: Optional[int] = Field(None, ge=1)
    target_train_per_class: int = Field(3, ge=1)
    holdout_classes: Optional[Tuple[int, ...]] = None
    evaluate_all_test_points: bool = False
    sweep_target_per_class: Optional[Tuple[int, ...]] = None
    sweep_n_target: Optional[Tuple[int, ...]] = None
    repeats: int = Field(20, ge=1)
    timing_repeats: int = Field(3, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_sweep(self) -> "ExperimentConfig":
        if self.sweep_n_target is not None:
            if self.sweep_target_per_class is not None:
                raise ValueError("give sweep_n_target or sweep_target_per_class, not both")
            K = self.shift.num_classes
            if any(n <= 0 or n % K for n in self.sweep_n_target):
                raise ValueError(f"every sweep_n_target value must be a positive multiple of K={K}")
        if self.sweep_target_per_class is not None and any(n <= 0 for n in self.sweep_target_per_class):
            raise ValueError("sweep_target_per_class values must be positive")
        if self.holdout_classes is not None:
            if any(k < 0 or k >= self.shift.num_classes for k in self.holdout_classes):
                raise ValueError(f"holdout classes must lie in 0..{self.shift.num_classes - 1}")
        return self

    @classmethod
    def from_file(cls, path: Union[str, Path], **overrides) -> "ExperimentConfig":
        """Load a JSON experiment document; repeats and timing_repeats fall back to config.yaml"""
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: not valid JSON: {e}") from e
        defaults = get_config().get_experiment_defaults()
        for key in ("repeats", "timing_repeats"):
            if key in defaults:
                data.setdefault(key, defaults[key])
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def sweep(self) -> List[int]:
        """Per-class labeled target counts of the scaling sweep"""
        if self.sweep_n_target is not None:
            return [n // self.shift.num_classes for n in self.sweep_n_target]
        if self.sweep_target_per_class is not None:
            return list(self.sweep_target_per_class)
        return [self.target_train_per_class]

    def novel_classes(self) -> Tuple[int, ...]:
        """Classes without target labels; the upper half by default"""
        if self.holdout_classes is not None:
            return tuple(sorted(set(self.holdout_classes)))
        K = self.shift.num_classes
        return tuple(range(K // 2, K))


@dataclass
class MethodResult:
    """Accuracy of one method across seeded splits"""
    name: str
    seeds: List[int] = field(default_factory=list)
    accuracies: List[float] = field(default_factory=list)

    def add(self, seed: int, accuracy: float) -> None:
        self.seeds.append(seed)
        self.accuracies.append(accuracy)

    def to_dict(self) -> Dict[str, Any]:
        data = summarize(self.accuracies).to_dict()
        order = np.argsort(self.seeds, kind="stable")
        data["per_seed"] = [
            {"seed": int(self.seeds[i]), "accuracy": float(self.accuracies[i])} for i in order
        ]
        return data


@dataclass
class ExperimentReport:
    """Outcome of a protocol run, serialized as schema-stable JSON"""
    protocol: Protocol
    config: ExperimentConfig
    methods: Dict[str, MethodResult] = field(default_factory=dict)
    refused: Dict[str, str] = field(default_factory=dict)
    sweep: List[Dict[str, Any]] = field(default_factory=list)

    def method(self, name: str) -> MethodResult:
        return self.methods.setdefault(name, MethodResult(name))

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "format_version": REPORT_FORMAT_VERSION,
            "protocol": self.protocol.value,
            "config": self.config.model_dump(mode="json"),
            "repeats": self.config.repeats,
            "methods": {name: result.to_dict() for name, result in sorted(self.methods.items())},
            "refused": dict(sorted(self.refused.items())),
        }
        if self.protocol == Protocol.SCALING:
            data["sweep"] = self.sweep
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        logger.info(f"Report saved to {path}")


def _check_protocol(protocol: Protocol, config: ExperimentConfig) -> None:
    shift = config.shift
    if protocol == Protocol.STANDARD:
        if shift.d_source != shift.d_target:
            raise ValidationError(
                f"standard protocol needs d_source == d_target; use heterogeneous for "
                f"d_source={shift.d_source}, d_target={shift.d_target}"
            )
    if protocol == Protocol.HETEROGENEOUS and shift.d_source == shift.d_target:
        raise ValidationError("heterogeneous protocol needs d_source != d_target")
    if protocol == Protocol.NOVEL_CATEGORY:
        novel = config.novel_classes()
        if not novel or len(novel) >= shift.num_classes:
            raise ValidationError("novel-category protocol needs at least one labeled and one held-out class")

    largest = max(config.sweep()) if protocol == Protocol.SCALING else config.target_train_per_class
    if shift.samples_per_class <= largest:
        raise ValidationError(
            f"samples_per_class={shift.samples_per_class} leaves no target test points "
            f"with {largest} labeled target points per class"
        )
    if config.source_per_class is not None and config.source_per_class > shift.samples_per_class:
        raise ValidationError(
            f"source_per_class={config.source_per_class} exceeds samples_per_class={shift.samples_per_class}"
        )


def _source_split(source: LabeledDataset, config: ExperimentConfig, seed: int) -> LabeledDataset:
    if config.source_per_class is None:
        return source
    train, _ = make_split(source, SplitSpec(train_per_class=config.source_per_class, seed=seed))
    return train


def _fit_timed(
    source: LabeledDataset,
    target_train: LabeledDataset,
    train: TrainConfig,
    timing_repeats: int
):
    """Fit repeatedly; returns the model and the median wall-clock in ms"""
    durations = []
    model = None
    for _ in range(timing_repeats):
        start = time.perf_counter()
        model = fit(source, target_train, train)
        durations.append((time.perf_counter() - start) * 1000.0)
    return model, float(np.median(durations))


def _progress(iterable, show_progress: bool, description: str):
    return tqdm(iterable, desc=description, disable=not show_progress, leave=False)


def _run_accuracy_protocol(
    protocol: Protocol,
    config: ExperimentConfig,
    report: ExperimentReport,
    show_progress: bool
) -> None:
    source_all, target_all, _ = generate(config.shift)
    train = config.train
    novel = config.novel_classes() if protocol == Protocol.NOVEL_CATEGORY else ()
    source_planes = None

    for r in _progress(range(config.repeats), show_progress, protocol.value):
        seed = config.seed + r
        source = _source_split(source_all, config, seed)
        target_train, target_test = make_split(
            target_all,
            SplitSpec(train_per_class=config.target_train_per_class, holdout_classes=novel, seed=seed),
        )
        if novel and not config.evaluate_all_test_points:
            target_test = target_test.subset(np.flatnonzero(np.isin(target_test.labels, novel)))

        model = fit(source, target_train, train)
        accuracy = multiclass_accuracy(model.predict_target_batch(target_test.features), target_test.labels)
        report.method("mmdt").add(seed, accuracy)
        logger.debug(f"mmdt accuracy {accuracy:.4f}", extra={"protocol": protocol.value, "seed": seed})

        if "svm_s" not in report.refused:
            if source_planes is None or config.source_per_class is not None:
                source_planes = train_svm_source(source, train.c_source, train.solver_tol, train.solver_max_passes)
            try:
                predictions = predict_svm(source_planes, target_test.features, "svm_s")
                report.method("svm_s").add(seed, multiclass_accuracy(predictions, target_test.labels))
            except UnsupportedFeatureSpaceError as e:
                logger.info(f"svm_s refused: {e}", extra={"protocol": protocol.value, "seed": seed})
                report.refused["svm_s"] = str(e)

        if protocol == Protocol.NOVEL_CATEGORY:
            continue

        target_planes = train_svm_target(target_train, train.c_target, train.solver_tol, train.solver_max_passes)
        report.method("svm_t").add(
            seed, multiclass_accuracy(predict_svm(target_planes, target_test.features, "svm_t"), target_test.labels)
        )
        if protocol == Protocol.STANDARD:
            pooled = train_svm_pooled(source, target_train, train.c_source, train.solver_tol, train.solver_max_passes)
            report.method("svm_st").add(
                seed, multiclass_accuracy(predict_svm(pooled, target_test.features, "svm_st"), target_test.labels)
            )


def _run_scaling(config: ExperimentConfig, report: ExperimentReport, show_progress: bool) -> None:
    source_all, target_all, _ = generate(config.shift)
    train = config.train
    K = config.shift.num_classes

    for per_class in _progress(config.sweep(), show_progress, "scaling"):
        n_target = per_class * K
        mmdt = MethodResult(f"mmdt@{n_target}")
        svm_t = MethodResult(f"svm_t@{n_target}")
        timings = []
        n_source = 0

        for r in range(config.repeats):
            seed = config.seed + r
            source = _source_split(source_all, config, seed)
            n_source = source.n
            target_train, target_test = make_split(
                target_all, SplitSpec(train_per_class=per_class, seed=seed)
            )
            model, elapsed_ms = _fit_timed(source, target_train, train, config.timing_repeats)
            timings.append(elapsed_ms)
            mmdt.add(seed, multiclass_accuracy(model.predict_target_batch(target_test.features), target_test.labels))

            target_planes = train_svm_target(target_train, train.c_target, train.solver_tol, train.solver_max_passes)
            svm_t.add(seed, multiclass_accuracy(
                predict_svm(target_planes, target_test.features, "svm_t"), target_test.labels
            ))

        logger.info(f"Scaling n_T={n_target}: median fit {np.median(timings):.1f} ms",
                    extra={"protocol": Protocol.SCALING.value})
        report.sweep.append({
            "n_target": n_target,
            "target_per_class": per_class,
            "n_source": n_source,
            "fit_time_ms": float(np.median(timings)),
            "fit_time_ms_per_seed": timings,
            "constraint_count": {
                ConstraintMethod.MMDT.value: constraint_count(ConstraintMethod.MMDT, K, n_source, n_target),
                ConstraintMethod.ARCT.value: constraint_count(ConstraintMethod.ARCT, K, n_source, n_target),
            },
            "accuracy": {"mmdt": mmdt.to_dict(), "svm_t": svm_t.to_dict()},
        })


def run_experiment(
    protocol: Union[Protocol, str],
    config: ExperimentConfig,
    show_progress: Optional[bool] = None
) -> ExperimentReport:
    """
    Run one protocol over config.repeats seeded splits

    Args:
        protocol: standard, heterogeneous, novel-category or scaling
        config: Experiment configuration
        show_progress: tqdm progress bar; defaults to experiments.show_progress

    Returns:
        ExperimentReport

    Raises:
        ValidationError: Protocol and configuration do not fit together
    """
    try:
        protocol = Protocol(protocol)
    except ValueError as e:
        raise ValidationError(f"unknown protocol {protocol!r}") from e
    _check_protocol(protocol, config)

    if show_progress is None:
        show_progress = bool(get_config().get("experiments.show_progress", False))

    logger.info(f"Running {protocol.value} protocol with {config.repeats} repeats",
                extra={"protocol": protocol.value})
    report = ExperimentReport(protocol=protocol, config=config)
    if protocol == Protocol.SCALING:
        _run_scaling(config, report, show_progress)
    else:
        _run_accuracy_protocol(protocol, config, report, show_progress)

    for name, result in sorted(report.methods.items()):
        summary = summarize(result.accuracies)
        logger.info(f"{protocol.value} {name}: {summary.mean:.4f} +/- {summary.std:.4f}",
                    extra={"protocol": protocol.value})
    return report
