"""
Command-line entry point
generate, train, eval and experiment subcommands with JSON outputs
"""

import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import click
from pydantic import ValidationError as PydanticValidationError

from src.adaptation.baselines import multiclass_accuracy, per_class_accuracy, summarize
from src.adaptation.mmdt import MmdtModel, TrainConfig, fit
from src.data.dataset import (
    Domain,
    LabeledDataset,
    SplitSpec,
    load_dense,
    load_sparse,
    make_split,
    save_dense,
)
from src.data.synthgen import GenerateConfig, generate
from src.experiments.protocols import ExperimentConfig, Protocol, run_experiment
from src.utils.config import Config, get_config
from src.utils.errors import MmdtError, ValidationError
from src.utils.logger import setup_logger

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: not valid JSON: {e}") from e


def _load(
    path: str,
    domain: Domain,
    data_format: str,
    dim: Optional[int],
    label_names: Optional[Sequence[str]] = None
) -> LabeledDataset:
    if data_format == "sparse":
        if dim is None:
            raise ValidationError(f"sparse input {path} needs its feature dimension")
        return load_sparse(path, dim, domain, label_names)
    return load_dense(path, domain, label_names)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@click.group()
@click.option("--log-level", default=None, help="Logging level (defaults to logging.level in config.yaml)")
@click.option("--json-logs", is_flag=True, help="Emit JSON log records")
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False),
              help="YAML defaults file (defaults to MMDT_CONFIG or configs/config.yaml)")
@click.pass_context
def cli(ctx: click.Context, log_level: Optional[str], json_logs: bool, config_path: Optional[str]):
    """Max-margin domain transforms: data generation, training, evaluation and experiments"""
    config = Config(config_path) if config_path else get_config()
    logging_config = config.get_logging_config()
    setup_logger(
        "src",
        log_level=log_level or logging_config.get("level", "INFO"),
        log_file=(logging_config.get("file") or {}).get("path"),
        json_format=json_logs or logging_config.get("format") == "json",
        stream=sys.stderr,
    )
    ctx.obj = config


@cli.command("generate")
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
def cmd_generate(config_file: str, out_dir: str):
    """Write source.csv, target_train.csv, target_test.csv and shift.json"""
    config = GenerateConfig(**_read_json(config_file))
    source, target, truth = generate(config)
    target_train, target_test = make_split(
        target,
        SplitSpec(
            train_per_class=config.target_train_per_class,
            holdout_classes=config.holdout_classes,
            seed=config.seed,
        ),
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dense(source, out / "source.csv")
    save_dense(target_train, out / "target_train.csv")
    save_dense(target_test, out / "target_test.csv")
    _write_json(out / "shift.json", {"config": config.model_dump(mode="json"), "shift": truth.to_dict()})

    click.echo(f"wrote {source.n} source, {target_train.n} target train, "
               f"{target_test.n} target test rows to {out}")


@cli.command("train")
@click.argument("source_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("target_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--c-s", "c_source", type=float, default=None, help="Source hinge weight C_S")
@click.option("--c-t", "c_target", type=float, default=None, help="Target hinge weight C_T")
@click.option("--max-iter", "max_outer_iters", type=int, default=None, help="Outer iteration cap")
@click.option("--tol", "outer_tol", type=float, default=None, help="Relative objective decrease to stop")
@click.option("--solver-tol", type=float, default=None, help="Hinge solver suboptimality bound")
@click.option("--solver-max-passes", type=int, default=None, help="Hinge solver pass cap")
@click.option("--init", type=click.Choice(["zero", "identity_pad"]), default=None, help="Initial transform")
@click.option("--pin-augmented-row/--free-augmented-row", default=None,
              help="Fix the last row of W to [0 ... 0 1]")
@click.option("--format", "data_format", type=click.Choice(["dense", "sparse"]), default="dense")
@click.option("--source-dim", type=int, default=None, help="Feature dimension of sparse source input")
@click.option("--target-dim", type=int, default=None, help="Feature dimension of sparse target input")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="model.json", show_default=True)
@click.pass_obj
def cmd_train(config: Config, source_path: str, target_path: str, data_format: str,
              source_dim: Optional[int], target_dim: Optional[int], out_path: str, **flags):
    """Fit MMDT on a labeled source set and a labeled target set"""
    train_config = TrainConfig.from_defaults(config, **flags)
    source = _load(source_path, Domain.SOURCE, data_format, source_dim)
    target = _load(target_path, Domain.TARGET, data_format, target_dim, source.label_names)

    def echo_step(iteration: int, step: str, value: float) -> None:
        click.echo(f"iter={iteration} step={step} J={value!r}")

    model = fit(source, target, train_config, on_step=echo_step)
    model.save(out_path)
    logger.info(f"Wrote model to {out_path} (converged={model.converged})")


@cli.command("eval")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("test_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--domain", type=click.Choice([d.value for d in Domain]), default=Domain.TARGET.value,
              show_default=True, help="Domain of the test rows")
@click.option("--format", "data_format", type=click.Choice(["dense", "sparse"]), default="dense")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="eval.json", show_default=True,
              help="Report JSON path")
def cmd_eval(model_path: str, test_path: str, domain: str, data_format: str, out_path: str):
    """Multi-class accuracy of a trained model on a test set"""
    model = MmdtModel.load(model_path)
    domain = Domain(domain)
    dim = model.d_source if domain == Domain.SOURCE else model.d_target
    test = _load(test_path, domain, data_format, dim, model.label_names or None)

    if domain == Domain.SOURCE:
        predictions = model.predict_source_batch(test.features)
    else:
        predictions = model.predict_target_batch(test.features)

    report = {
        "accuracy": multiclass_accuracy(predictions, test.labels),
        "n": test.n,
        "per_class_accuracy": per_class_accuracy(predictions, test.labels, test.label_names),
    }
    _write_json(Path(out_path), report)
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@cli.command("experiment")
@click.argument("protocol", type=click.Choice([p.value for p in Protocol]))
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--repeats", type=int, default=None, help="Seeded splits to run")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="report.json", show_default=True)
@click.option("--progress/--no-progress", default=None, help="Show a progress bar on stderr")
def cmd_experiment(protocol: str, config_file: str, repeats: Optional[int], out_path: str,
                   progress: Optional[bool]):
    """Run one of the four evaluation protocols and write a JSON report"""
    if repeats is not None and repeats < 1:
        raise click.BadParameter("--repeats must be at least 1")
    config = ExperimentConfig.from_file(config_file, repeats=repeats)
    report = run_experiment(protocol, config, show_progress=progress)
    report.save(out_path)

    for name, result in sorted(report.methods.items()):
        summary = summarize(result.accuracies)
        click.echo(f"{name}: {summary.mean:.4f} +/- {summary.std:.4f} (n={summary.count})")
    for name, reason in sorted(report.refused.items()):
        click.echo(f"{name}: refused ({reason})")
    for row in report.sweep:
        click.echo(f"n_T={row['n_target']}: fit {row['fit_time_ms']:.1f} ms, "
                   f"constraints mmdt={row['constraint_count']['mmdt']} arct={row['constraint_count']['arct']}")


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and map failures to exit codes (1 usage/validation, 2 runtime)"""
    try:
        result = cli.main(args=argv, prog_name="mmdt", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except (ValidationError, PydanticValidationError) as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_USAGE
    except (MmdtError, OSError) as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_RUNTIME
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
