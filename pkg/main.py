"""
Main entry point for the wildfire evacuation decision pipeline.

Runs the CLI application using Typer and delegates all commands to the
presentation layer controller. Each pipeline stage is its own command and
reads the artifacts of earlier stages from the run directory.
"""

import logging
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler

from presentation.cli_controller import CLIController
from presentation.formatters import print_error

app = typer.Typer(
    name="flare",
    help="Wildfire evacuation decision prediction - staged command-line pipeline",
    add_completion=False,
)

console = Console()
controller = CLIController()

ConfigOpt = Annotated[Path, typer.Option("--config", "-c", help="Run config (.json or .toml)")]
SeedOpt = Annotated[Optional[int], typer.Option(help="Split and forest seed")]
ThetaOpt = Annotated[Optional[str], typer.Option(help="elbow, all, or a coverage in (0, 1]")]
TrialsOpt = Annotated[Optional[int], typer.Option(help="Trials per reasoning pattern")]
KOpt = Annotated[Optional[int], typer.Option("--k", help="Memory examples per prompt")]
NoCotOpt = Annotated[bool, typer.Option("--no-cot", help="Direct decision prompt")]
NoRlOpt = Annotated[bool, typer.Option("--no-rl", help="Skip memory retrieval")]
NoPerceptionOpt = Annotated[bool, typer.Option("--no-perception", help="Raw answers instead of perceptions")]
StubOpt = Annotated[Optional[Path], typer.Option("--stub-transcript", help="Scripted LLM transcript")]
OutOpt = Annotated[Optional[Path], typer.Option("--out", help="Run output directory")]


def _setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@app.callback()
def main(verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")] = False):
    """Stage-by-stage evacuation prediction over post-wildfire survey data."""
    _setup_logging(verbose)


def _fail(result: dict):
    print_error(result["error"])
    code = 2 if result["error"].get("error") == "ConfigInvalidError" else 1
    raise typer.Exit(code=code)


def _run(command: str, config: Path, seed=None, theta=None, trials=None, k=None,
         no_cot=False, no_rl=False, no_perception=False, stub_transcript=None, out=None):
    loaded = controller.load_config(
        config, seed=seed, theta=theta, trials=trials, k=k,
        no_cot=no_cot, no_rl=no_rl, no_perception=no_perception,
        stub_transcript=stub_transcript, out=out,
    )
    if not loaded["success"]:
        _fail(loaded)
    result = controller.run_stage(command, loaded["config"])
    if not result["success"]:
        _fail(result)


# ---------------------------------------------------------------------
# Data preparation
# ---------------------------------------------------------------------
@app.command()
def ingest(config: ConfigOpt, seed: SeedOpt = None, stub_transcript: StubOpt = None, out: OutOpt = None):
    """Load the survey, check it against published statistics and split it."""
    _run("ingest", config, seed=seed, stub_transcript=stub_transcript, out=out)


@app.command(name="select-vars")
def select_vars(config: ConfigOpt, seed: SeedOpt = None, theta: ThetaOpt = None,
                stub_transcript: StubOpt = None, out: OutOpt = None):
    """Fit indicator weights and select variable subsets."""
    _run("select-vars", config, seed=seed, theta=theta, stub_transcript=stub_transcript, out=out)


# ---------------------------------------------------------------------
# Reasoning patterns and perception
# ---------------------------------------------------------------------
@app.command(name="label-patterns")
def label_patterns(config: ConfigOpt, seed: SeedOpt = None, theta: ThetaOpt = None, trials: TrialsOpt = None,
                   stub_transcript: StubOpt = None, out: OutOpt = None):
    """Estimate pattern success rates and label each training record."""
    _run("label-patterns", config, seed=seed, theta=theta, trials=trials,
         stub_transcript=stub_transcript, out=out)


@app.command(name="train-classifier")
def train_classifier(config: ConfigOpt, seed: SeedOpt = None, theta: ThetaOpt = None, trials: TrialsOpt = None,
                     stub_transcript: StubOpt = None, out: OutOpt = None):
    """Train the reasoning-pattern classifier."""
    _run("train-classifier", config, seed=seed, theta=theta, trials=trials,
         stub_transcript=stub_transcript, out=out)


@app.command(name="build-kb")
def build_kb(config: ConfigOpt, seed: SeedOpt = None, theta: ThetaOpt = None, trials: TrialsOpt = None,
             stub_transcript: StubOpt = None, out: OutOpt = None):
    """Build the perception calibration knowledge base."""
    _run("build-kb", config, seed=seed, theta=theta, trials=trials, stub_transcript=stub_transcript, out=out)


# ---------------------------------------------------------------------
# Memory training, prediction and evaluation
# ---------------------------------------------------------------------
@app.command(name="train-memory")
def train_memory(config: ConfigOpt, seed: SeedOpt = None, theta: ThetaOpt = None, trials: TrialsOpt = None,
                 k: KOpt = None, no_cot: NoCotOpt = False, no_rl: NoRlOpt = False,
                 no_perception: NoPerceptionOpt = False, stub_transcript: StubOpt = None, out: OutOpt = None):
    """Run the training pass and log reflected errors to memory."""
    _run("train-memory", config, seed, theta, trials, k, no_cot, no_rl, no_perception, stub_transcript, out)


@app.command()
def predict(config: ConfigOpt, seed: SeedOpt = None, theta: ThetaOpt = None, trials: TrialsOpt = None,
            k: KOpt = None, no_cot: NoCotOpt = False, no_rl: NoRlOpt = False,
            no_perception: NoPerceptionOpt = False, stub_transcript: StubOpt = None, out: OutOpt = None):
    """Predict evacuation decisions for the test partition."""
    _run("predict", config, seed, theta, trials, k, no_cot, no_rl, no_perception, stub_transcript, out)


@app.command()
def evaluate(config: ConfigOpt, seed: SeedOpt = None, theta: ThetaOpt = None, trials: TrialsOpt = None,
             k: KOpt = None, no_cot: NoCotOpt = False, no_rl: NoRlOpt = False,
             no_perception: NoPerceptionOpt = False, stub_transcript: StubOpt = None, out: OutOpt = None):
    """Score predictions and write the metrics report."""
    _run("evaluate", config, seed, theta, trials, k, no_cot, no_rl, no_perception, stub_transcript, out)


@app.command(name="cross-eval")
def cross_eval(config: ConfigOpt, seed: SeedOpt = None, theta: ThetaOpt = None, trials: TrialsOpt = None,
               k: KOpt = None, stub_transcript: StubOpt = None, out: OutOpt = None):
    """Train on one wildfire, test on another, against every baseline."""
    _run("cross-eval", config, seed=seed, theta=theta, trials=trials, k=k,
         stub_transcript=stub_transcript, out=out)


@app.command()
def ablate(config: ConfigOpt, seed: SeedOpt = None, theta: ThetaOpt = None, trials: TrialsOpt = None,
           k: KOpt = None, stub_transcript: StubOpt = None, out: OutOpt = None):
    """Run the full pipeline and each ablated configuration."""
    _run("ablate", config, seed=seed, theta=theta, trials=trials, k=k, stub_transcript=stub_transcript, out=out)


@app.command(name="compact-memory")
def compact_memory(config: ConfigOpt, out: OutOpt = None):
    """Sort the memory log by entry id and drop duplicate lines."""
    _run("compact-memory", config, out=out)


@app.command(name="audit-published")
def audit_published():
    """Check published F1 values against their precision and recall."""
    controller.audit_published()


# ---------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------
if __name__ == "__main__":
    app()
