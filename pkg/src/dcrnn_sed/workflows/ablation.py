"""Train and evaluate baseline and dilated networks over a list of dilation schedules."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Union

import pandas

from dcrnn_sed.common.exceptions import DcrnnError, InputValidationError
from dcrnn_sed.models.crnn import (
    ModelConfig,
    build_crnn,
    count_params,
    format_dilation_schedule,
    network_name,
    parse_dilation_schedule,
)
from dcrnn_sed.tools.corpus import SPLITS, CorpusDirectory, SequenceDataset
from dcrnn_sed.workflows.base import ProtocolMixin, Workflow
from dcrnn_sed.workflows.synth import CorpusSynthesis
from dcrnn_sed.workflows.train import EPOCH_COLUMNS, TEST_COLUMNS, TrainConfig, Trainer, evaluate

RESULT_COLUMNS = ["network", "dilation_rate", "params", "f1_percent", "er_percent"]
STATUS_COLUMNS = ["network", "dilation_rate", "status", "message"]

RESULTS_CSV = "results.csv"
CURVES_CSV = "curves.csv"
STATUS_CSV = "status.csv"


class AblationEntry(NamedTuple):
    name: str
    schedule: str


@dataclass
class AblationPlan:
    """Schedules to compare, with the shared model, training and data settings.

    :param model: keyword arguments of ``ModelConfig.from_schedule`` besides the schedule and class count.
    :param corpus: corpus directory with fold files; when ``None`` the corpus described by ``synth`` (inputs of a
        ``synth.yaml`` protocol) is synthesised in memory.
    """

    entries: List[AblationEntry]
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    corpus: Optional[Path] = None
    synth: Optional[dict] = None
    seed: int = 7

    def __post_init__(self):
        if not self.entries:
            raise InputValidationError("an ablation plan needs at least one dilation schedule")
        for entry in self.entries:
            parse_dilation_schedule(entry.schedule)
        if self.corpus is None and self.synth is None:
            raise InputValidationError("an ablation plan needs either a corpus directory or synthesis inputs")

    @classmethod
    def from_schedules(cls, schedules, **kwargs) -> "AblationPlan":
        entries = [
            AblationEntry(network_name(schedule), format_dilation_schedule(parse_dilation_schedule(schedule)))
            for schedule in schedules
        ]
        return cls(entries, **kwargs)

    def pairs(self) -> Dict[int, List[AblationEntry]]:
        """Entries grouped by layer count; a baseline and its dilated counterpart share a group."""
        groups = {}
        for entry in self.entries:
            groups.setdefault(len(parse_dilation_schedule(entry.schedule)), []).append(entry)
        return groups


class RunOutcome(NamedTuple):
    row: dict
    curves: List[dict]
    status: dict


def _status(entry: AblationEntry, status: str, message: str = "") -> dict:
    return {"network": entry.name, "dilation_rate": entry.schedule, "status": status, "message": message}


def _run_entry(entry: AblationEntry, plan: AblationPlan, n_classes: int, datasets: dict, run_dir=None) -> RunOutcome:
    row = dict.fromkeys(RESULT_COLUMNS)
    row.update(network=entry.name, dilation_rate=entry.schedule)
    try:
        config = ModelConfig.from_schedule(entry.schedule, n_classes, **plan.model)
        model = build_crnn(config, seed=plan.seed)
        row["params"] = count_params(model).total
        trainer = Trainer(
            model,
            datasets["train"],
            datasets["val"],
            replace(plan.train, seed=plan.seed),
            test_set=datasets["test"],
            output_dir=run_dir,
            label=f"{entry.name}<{entry.schedule}>",
        )
        best, records = trainer.run()
        report, _ = evaluate(best, datasets["test"], plan.train.threshold, plan.train.batch_size)
    except Exception as exception:  # noqa: BLE001
        message = str(exception) if isinstance(exception, DcrnnError) else f"{type(exception).__name__}: {exception}"
        return RunOutcome(row, [], _status(entry, "failed", message))

    row["f1_percent"] = round(100 * report.f1, 2)
    row["er_percent"] = round(100 * report.er, 2) if report.er is not None else None
    curves = [{"network": entry.name, "dilation_rate": entry.schedule, **asdict(record)} for record in records]
    return RunOutcome(row, curves, _status(entry, "ok"))


class Ablation(ProtocolMixin, Workflow):
    """Run every entry of an ``AblationPlan`` and tabulate F1 and error rate on the test split."""

    @classmethod
    def get_protocol_filepath(cls):
        """Return ``pathlib.Path`` to the ``.yaml`` file that defines the protocols."""
        from importlib_resources import files

        from . import protocols

        return files(protocols) / "ablation.yaml"

    @classmethod
    def plan_from_protocol(
        cls,
        protocol: Optional[str] = None,
        overrides: Optional[dict] = None,
        corpus: Union[str, Path, None] = None,
    ) -> AblationPlan:
        """Assemble a plan from the ablation protocol and the train and synthesis protocols it names.

        ``overrides`` may hold ``train`` and ``model`` namespaces that update those of the train protocol, and a
        ``synth`` namespace for the synthesis protocol.
        """
        overrides = dict(overrides or {})
        train_overrides = {key: overrides.pop(key) for key in ("train", "model") if key in overrides}
        synth_overrides = overrides.pop("synth", None)
        inputs = cls.get_protocol_inputs(protocol, overrides)
        train_inputs = Trainer.get_protocol_inputs(inputs["train_protocol"], train_overrides)
        synth = None
        if corpus is None:
            synth = CorpusSynthesis.get_protocol_inputs(inputs["synth_protocol"], synth_overrides)
        return AblationPlan.from_schedules(
            [str(schedule) for schedule in inputs["schedules"]],
            model=train_inputs["model"],
            train=TrainConfig.from_inputs(train_inputs["train"], seed=inputs["seed"]),
            corpus=Path(corpus) if corpus is not None else None,
            synth=synth,
            seed=inputs["seed"],
        )

    def __init__(self, plan: AblationPlan, output_dir: Union[str, Path, None] = None, jobs: int = 1):
        super().__init__("ablation")
        if jobs < 1:
            raise InputValidationError(f"`jobs` must be a positive integer, got {jobs}")
        self.plan = plan
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.jobs = jobs

    def load_datasets(self) -> tuple:
        """Return the class labels and a ``SequenceDataset`` per split."""
        n_mels = self.plan.model.get("n_mels", 40)
        if self.plan.corpus is not None:
            corpus = CorpusDirectory(self.plan.corpus)
            labels = corpus.labels
            splits = {split: corpus.load_split(split, n_mels) for split in SPLITS}
        else:
            labels, splits = CorpusSynthesis(self.plan.synth).recordings(n_mels)
        for split, recordings in splits.items():
            if not recordings:
                raise InputValidationError(f"the {split} split is empty")
        chunk_frames = self.plan.train.chunk_frames
        return labels, {split: SequenceDataset(recordings, chunk_frames) for split, recordings in splits.items()}

    def run(self) -> pandas.DataFrame:
        labels, datasets = self.load_datasets()
        entries = self.plan.entries
        run_dirs = [
            self.output_dir / "runs" / entry.schedule if self.output_dir is not None else None for entry in entries
        ]
        arguments = [(entry, self.plan, len(labels), datasets, run_dir) for entry, run_dir in zip(entries, run_dirs)]
        self.report(f"running {len(entries)} networks on {len(labels)} classes with {self.jobs} worker(s)")

        if self.jobs > 1:
            with ProcessPoolExecutor(max_workers=self.jobs) as executor:
                outcomes = list(executor.map(_run_entry, *zip(*arguments)))
        else:
            outcomes = [_run_entry(*args) for args in arguments]

        for outcome in outcomes:
            status = outcome.status
            if status["status"] != "ok":
                self.report(f"{status['network']}<{status['dilation_rate']}> failed: {status['message']}")

        table = pandas.DataFrame([outcome.row for outcome in outcomes], columns=RESULT_COLUMNS)
        table["params"] = table["params"].astype("Int64")
        if self.output_dir is not None:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            table.to_csv(self.output_dir / RESULTS_CSV, index=False, lineterminator="\n")
            curve_columns = ["network", "dilation_rate"] + EPOCH_COLUMNS + TEST_COLUMNS
            curves = [row for outcome in outcomes for row in outcome.curves]
            pandas.DataFrame(curves, columns=curve_columns).to_csv(
                self.output_dir / CURVES_CSV, index=False, lineterminator="\n"
            )
            pandas.DataFrame([outcome.status for outcome in outcomes], columns=STATUS_COLUMNS).to_csv(
                self.output_dir / STATUS_CSV, index=False, lineterminator="\n"
            )
        return table


def run_ablation(plan: AblationPlan, output_dir: Union[str, Path, None] = None, jobs: int = 1) -> pandas.DataFrame:
    """Run ``plan``; failed runs keep their row with empty scores and are listed in the status file."""
    return Ablation(plan, output_dir, jobs).run()
