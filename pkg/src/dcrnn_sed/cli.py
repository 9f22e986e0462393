"""Command line interface: ``dcrnn-sed synth | features | train | eval | ablate | rf``."""

import functools
import math
from pathlib import Path

import click
import pandas

from dcrnn_sed.common.exceptions import DcrnnError
from dcrnn_sed.common.log import configure_logging
from dcrnn_sed.models.crnn import (
    ModelConfig,
    build_crnn,
    empirical_receptive_field,
    parse_dilation_schedule,
    receptive_field,
)
from dcrnn_sed.parsers.annotations import event_labels, read_annotations, write_annotations
from dcrnn_sed.parsers.config import read_model_config
from dcrnn_sed.tools.corpus import SPLITS, CorpusDirectory, SequenceDataset
from dcrnn_sed.tools.features import FRAME_SECONDS, HOP_SECONDS
from dcrnn_sed.tools.metrics import binarize, events_to_roll, roll_to_events, summed_metrics
from dcrnn_sed.workflows.ablation import Ablation, run_ablation
from dcrnn_sed.workflows.base import Workflow
from dcrnn_sed.workflows.synth import CorpusSynthesis
from dcrnn_sed.workflows.train import TrainConfig, Trainer, evaluate, load_model

REPORT_COLUMNS = ["tp", "fp", "fn", "substitutions", "deletions", "insertions", "n_ref", "f1_percent", "er_percent"]


def with_exit_codes(command):
    """Translate package errors into the workflow exit statuses."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except DcrnnError as exception:
            exit_code = Workflow.exit_code_for(exception)
            click.echo(f"Error: {exception}", err=True)
            raise SystemExit(exit_code.status) from exception

    return wrapper


def _report_row(report) -> dict:
    row = report.as_dict()
    row["f1_percent"] = round(100 * report.f1, 2)
    row["er_percent"] = round(100 * report.er, 2) if report.er is not None else None
    return {column: row[column] for column in REPORT_COLUMNS}


def _echo_report(report) -> None:
    er = f"{100 * report.er:.1f}" if report.er is not None else "undefined"
    click.echo(f"F1 {100 * report.f1:.1f} ER {er}")


@click.group()
@click.option("-v", "--verbosity", count=True, help="Repeat to log more: -v for INFO, -vv for DEBUG.")
def cli(verbosity):
    """Sound event detection with baseline and dilated convolutional recurrent networks."""
    configure_logging(verbosity)


@cli.command()
@click.option("--out", "out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--protocol", type=click.Choice(["desk", "paper", "fast"]), default=None)
@click.option("--classes", type=int, default=None, help="Number of event classes.")
@click.option("--scenes", type=int, default=None, help="Number of scenes.")
@click.option("--duration", type=float, default=None, help="Scene duration in seconds.")
@click.option("--seed", type=int, default=None)
@with_exit_codes
def synth(out, protocol, classes, scenes, duration, seed):
    """Generate a synthetic corpus with fold files."""
    overrides = {
        key: value for key, value in (("n_classes", classes), ("n_scenes", scenes), ("seed", seed)) if value is not None
    }
    if duration is not None:
        overrides["recipe"] = {"duration_seconds": duration}
    corpus = CorpusSynthesis.from_protocol(protocol, overrides).run(out)
    click.echo(f"wrote {len(corpus.names())} scenes to {out}")


@cli.command()
@click.option("--in", "corpus", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--out", "out", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--sample-rate", type=int, default=None, help="Reject recordings at any other rate.")
@click.option("--n-mels", type=int, default=40, show_default=True)
@with_exit_codes
def features(corpus, out, sample_rate, n_mels):
    """Compute and cache the log mel features of a corpus."""
    written = CorpusDirectory(corpus).cache_features(n_mels, sample_rate, out)
    click.echo(f"cached {len(written)} feature files")


@cli.command()
@click.option("--data", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--out", "out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--dilation", default="2-4-8", show_default=True, help="Hyphenated dilation schedule.")
@click.option("--protocol", type=click.Choice(["desk", "paper", "fast"]), default=None)
@click.option("--max-epochs", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@with_exit_codes
def train(data, out, config_path, dilation, protocol, max_epochs, seed):
    """Train one network on the train and validation splits of a corpus."""
    overrides = {"train": {"max_epochs": max_epochs}} if max_epochs is not None else None
    inputs = Trainer.get_protocol_inputs(protocol, overrides)
    corpus = CorpusDirectory(data)
    labels = corpus.labels
    if config_path is not None:
        config = read_model_config(config_path)
    else:
        config = Trainer.model_config_from_inputs(inputs, dilation, len(labels))
    train_config = TrainConfig.from_inputs(inputs["train"], seed=seed)
    datasets = {
        split: SequenceDataset(corpus.load_split(split, config.n_mels), train_config.chunk_frames)
        for split in SPLITS
    }
    trainer = Trainer(build_crnn(config, seed), datasets["train"], datasets["val"], train_config, datasets["test"], out)
    best, records = trainer.run()
    report, _ = evaluate(best, datasets["test"], train_config.threshold)
    click.echo(f"trained {len(records)} epochs, best epoch {trainer.stopper.best_epoch}")
    _echo_report(report)


def _n_frames_covering(events, hop=HOP_SECONDS, frame_len=FRAME_SECONDS) -> int:
    end = max((event.offset for event in events), default=frame_len)
    return max(1, math.ceil((end - frame_len / 2) / hop) + 1)


@cli.command(name="eval")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--data", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@click.option("--split", type=click.Choice(SPLITS), default="test", show_default=True)
@click.option("--reference", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--estimate", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--segment", type=float, default=None, help="Segment length in seconds; frame-based by default.")
@click.option("--write-estimate", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--out", "out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Report CSV.")
@with_exit_codes
def evaluate_command(checkpoint, config_path, data, split, reference, estimate, segment, write_estimate, out):
    """Score a checkpoint on a corpus split, or an estimated annotation file against a reference one."""
    if reference is not None and estimate is not None:
        reference_events, estimate_events = read_annotations(reference), read_annotations(estimate)
        labels = event_labels(reference_events + estimate_events)
        n_frames = _n_frames_covering(reference_events + estimate_events)
        reference_roll = events_to_roll(reference_events, labels, n_frames)
        pairs = [(reference_roll, events_to_roll(estimate_events, labels, n_frames))]
    elif checkpoint is not None and data is not None:
        model = load_model(checkpoint, config_path)
        corpus = CorpusDirectory(data)
        labels = corpus.labels
        recordings = corpus.load_split(split, model.config.n_mels)
        pairs = []
        for recording in recordings:
            probabilities = model.forward(recording.features.values[None], train=False).data[0]
            estimate_roll = binarize(probabilities, frame_hop_seconds=recording.features.frame_hop_seconds)
            pairs.append((recording.roll, estimate_roll))
            if write_estimate is not None:
                write_estimate.mkdir(parents=True, exist_ok=True)
                events = roll_to_events(estimate_roll, labels, recording.features.frame_len_seconds)
                write_annotations(write_estimate / f"{recording.name}.txt", events)
    else:
        raise click.UsageError("give either --reference and --estimate, or --checkpoint and --data")

    report = summed_metrics(pairs, segment)
    if out is not None:
        pandas.DataFrame([_report_row(report)], columns=REPORT_COLUMNS).to_csv(out, index=False, lineterminator="\n")
    _echo_report(report)


@cli.command()
@click.option("--out", "out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--protocol", type=click.Choice(["desk", "paper", "fast"]), default=None)
@click.option("--data", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@click.option("--schedules", default=None, help="Comma-separated schedules, e.g. `1-1-1,2-4-8`.")
@click.option("--jobs", type=int, default=None, help="Parallel worker processes.")
@click.option("--seed", type=int, default=None)
@with_exit_codes
def ablate(out, protocol, data, schedules, jobs, seed):
    """Train and evaluate every schedule of the plan; write results, curves and status CSV files."""
    overrides = {}
    if schedules is not None:
        overrides["schedules"] = [schedule.strip() for schedule in schedules.split(",") if schedule.strip()]
    if seed is not None:
        overrides["seed"] = seed
    plan = Ablation.plan_from_protocol(protocol, overrides, corpus=data)
    jobs = jobs or Ablation.get_protocol_inputs(protocol)["jobs"]
    table = run_ablation(plan, out, jobs)
    click.echo(table.to_string(index=False))


@cli.command()
@click.option("--kernel", type=int, default=3, show_default=True)
@click.option("--dilation", required=True, help="Hyphenated dilation schedule, e.g. `1-2-4`.")
@with_exit_codes
def rf(kernel, dilation):
    """Print the theoretical and measured receptive field of a schedule in frames and seconds."""
    rates = parse_dilation_schedule(dilation)
    theoretical = receptive_field(kernel, rates)
    single_filter = ModelConfig.from_schedule(rates, n_classes=1, filters=1, kernel=kernel, n_mels=8, blstm_hidden=1)
    measured = empirical_receptive_field(single_filter)
    for name, frames in (("theoretical", theoretical), ("empirical", measured)):
        seconds = (frames - 1) * HOP_SECONDS + FRAME_SECONDS
        click.echo(f"{name}: {frames} frames ({seconds:.3f} s)")
