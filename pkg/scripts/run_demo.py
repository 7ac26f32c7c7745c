#!/usr/bin/env python3
"""
End-to-End Demo Script
Generates a shifted dataset, trains MMDT, evaluates it and runs a short experiment
"""

import json
import logging
import sys
import tempfile
from pathlib import Path

# Add repository root to path
ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from src.cli.main import EXIT_OK, main as cli_main

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

CONFIG_DIR = ROOT / "configs"


def print_section(title):
    """Print a formatted section header"""
    print("\n" + "=" * 70)
    print(f"  {title}")
    print("=" * 70 + "\n")


def run(args):
    """Invoke the CLI and stop the demo on failure"""
    code = cli_main(["--log-level", "WARNING"] + [str(a) for a in args])
    if code != EXIT_OK:
        raise RuntimeError(f"mmdt {args[0]} exited with code {code}")


def demo_generate(workdir: Path) -> Path:
    """Demo 1: synthetic affine shift"""
    print_section("DEMO 1: Generate a Shifted Dataset")
    data_dir = workdir / "data"
    run(["generate", CONFIG_DIR / "generate.json", data_dir])

    shift = json.loads((data_dir / "shift.json").read_text())
    print(f"  Shift kind: {shift['shift']['kind']}")
    print(f"  Condition number: {shift['shift']['condition_number']:.2f}")
    return data_dir


def demo_train(workdir: Path, data_dir: Path) -> Path:
    """Demo 2: alternating minimization"""
    print_section("DEMO 2: Train MMDT")
    model_path = workdir / "model.json"
    run(["train", data_dir / "source.csv", data_dir / "target_train.csv", "--out", model_path])
    return model_path


def demo_eval(workdir: Path, data_dir: Path, model_path: Path):
    """Demo 3: target test accuracy"""
    print_section("DEMO 3: Evaluate on Target Test Points")
    out = workdir / "eval.json"
    run(["eval", model_path, data_dir / "target_test.csv", "--out", out])

    report = json.loads(out.read_text())
    print(f"\n  Target accuracy: {report['accuracy']:.3f} on {report['n']} points")


def demo_experiment(workdir: Path):
    """Demo 4: baselines over a few seeded splits"""
    print_section("DEMO 4: Standard Protocol (3 repeats)")
    run(["experiment", "standard", CONFIG_DIR / "standard.json",
         "--repeats", "3", "--out", workdir / "report.json", "--no-progress"])


def main():
    """Run all demo scenarios"""
    print("\n" + "=" * 70)
    print("  MAX-MARGIN DOMAIN TRANSFORMS - DEMO")
    print("=" * 70)

    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        try:
            data_dir = demo_generate(workdir)
            model_path = demo_train(workdir, data_dir)
            demo_eval(workdir, data_dir, model_path)
            demo_experiment(workdir)
        except KeyboardInterrupt:
            print("\n\nDemo interrupted by user")
            return
        except RuntimeError as e:
            logger.error(f"Demo failed: {e}")
            return

    print_section("DEMO COMPLETE")
    print("Next Steps:")
    print("  1. Run every protocol: python -m src.cli.main experiment heterogeneous configs/heterogeneous.json")
    print("  2. Run the acceptance checks: pytest -m slow")
    print("\n" + "=" * 70 + "\n")


if __name__ == "__main__":
    main()
