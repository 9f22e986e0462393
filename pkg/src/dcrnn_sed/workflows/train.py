"""Mini-batch training with Adam, plateau learning-rate attenuation, early stopping and checkpointing."""

from dataclasses import asdict, dataclass, fields
import math
from pathlib import Path
import time
from typing import List, Optional, Tuple, Union

import numpy
import pandas

from dcrnn_sed.common.exceptions import DivergenceError, InputValidationError
from dcrnn_sed.models.crnn import CRNN, ModelConfig, build_crnn, network_name
from dcrnn_sed.nn import AdamState, adam_step, bce_loss
from dcrnn_sed.parsers.checkpoint import read_checkpoint, write_checkpoint
from dcrnn_sed.parsers.config import read_model_config, write_model_config
from dcrnn_sed.tools.corpus import SequenceDataset
from dcrnn_sed.tools.metrics import DEFAULT_THRESHOLD, MetricsReport, frame_metrics
from dcrnn_sed.workflows.base import ProtocolMixin, Workflow

EPOCH_COLUMNS = ["epoch", "train_loss", "val_loss", "val_f1", "val_er", "lr", "seconds"]
TEST_COLUMNS = ["test_f1", "test_er"]

BEST_CHECKPOINT = "best.dcrn"
LAST_CHECKPOINT = "last.dcrn"
MODEL_CONFIG = "model.cfg"
EPOCHS_CSV = "epochs.csv"


@dataclass
class TrainConfig:
    """Optimisation settings; the learning rate is multiplied by ``lr_factor`` after ``lr_plateau_epochs``
    epochs without improvement of the validation loss."""

    batch_size: int = 16
    initial_lr: float = 0.01
    patience: int = 30
    lr_factor: float = 0.5
    lr_plateau_epochs: int = 10
    max_epochs: int = 1000
    seed: int = 0
    chunk_frames: int = 256
    threshold: float = DEFAULT_THRESHOLD
    track_test: bool = True

    def __post_init__(self):
        if self.patience < 1:
            raise InputValidationError(f"`patience` must be at least 1, got {self.patience}")
        if not 0 < self.lr_factor < 1:
            raise InputValidationError(f"`lr_factor` must lie in (0, 1), got {self.lr_factor}")
        for name in ("batch_size", "lr_plateau_epochs", "max_epochs", "chunk_frames"):
            if getattr(self, name) < 1:
                raise InputValidationError(f"`{name}` must be a positive integer, got {getattr(self, name)}")
        if self.initial_lr <= 0:
            raise InputValidationError(f"`initial_lr` must be positive, got {self.initial_lr}")

    @classmethod
    def from_inputs(cls, inputs: dict, **kwargs) -> "TrainConfig":
        """Build from a protocol ``train`` namespace, ignoring unknown keys."""
        names = {field.name for field in fields(cls)}
        return cls(**{**{key: value for key, value in inputs.items() if key in names}, **kwargs})


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float
    val_er: Optional[float]
    lr: float
    seconds: float
    test_f1: Optional[float] = None
    test_er: Optional[float] = None


class EarlyStopping:
    """Stop once the validation loss has not strictly decreased for ``patience`` consecutive epochs."""

    def __init__(self, patience: int = 30):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch: Optional[int] = None
        self.counter = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Register the loss of ``epoch``; return whether it is a new best."""
        if val_loss < self.best_loss:
            self.best_loss, self.best_epoch, self.counter = val_loss, epoch, 0
            return True
        self.counter += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.counter >= self.patience


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` whenever the validation loss stagnates for ``plateau_epochs``."""

    def __init__(self, learning_rate: float, factor: float = 0.5, plateau_epochs: int = 10):
        self.learning_rate = learning_rate
        self.factor = factor
        self.plateau_epochs = plateau_epochs
        self.best_loss = math.inf
        self.counter = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best_loss:
            self.best_loss, self.counter = val_loss, 0
        else:
            self.counter += 1
            if self.counter >= self.plateau_epochs:
                self.learning_rate *= self.factor
                self.counter = 0
        return self.learning_rate


def evaluate(
    model: CRNN, dataset: SequenceDataset, threshold: float = DEFAULT_THRESHOLD, batch_size: int = 16
) -> Tuple[MetricsReport, float]:
    """Frame-based metrics and mean loss of ``model`` on the valid frames of ``dataset``, in evaluation mode."""
    if dataset is None or len(dataset) == 0:
        raise InputValidationError("cannot evaluate on an empty dataset")
    probabilities, weighted_loss = [], 0.0
    for batch in dataset.batches(batch_size):
        prediction = model.forward(batch.features, train=False)
        weighted_loss += bce_loss(prediction, batch.targets, batch.masks).item() * batch.masks.sum()
        probabilities.append(prediction.data)
    probabilities = numpy.concatenate(probabilities)
    report = frame_metrics(dataset.targets[dataset.masks] > 0.5, probabilities[dataset.masks] >= threshold)
    return report, weighted_loss / dataset.masks.sum()


def save_model(directory: Union[str, Path], model: CRNN, checkpoint: str = BEST_CHECKPOINT) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_model_config(directory / MODEL_CONFIG, model.config)
    write_checkpoint(directory / checkpoint, model.state_dict())
    return directory / checkpoint


def load_model(checkpoint: Union[str, Path], config: Union[str, Path, ModelConfig, None] = None) -> CRNN:
    """Rebuild a network from a checkpoint and its configuration, by default ``model.cfg`` beside the checkpoint."""
    checkpoint = Path(checkpoint)
    if config is None:
        config = checkpoint.parent / MODEL_CONFIG
    if not isinstance(config, ModelConfig):
        config = read_model_config(config)
    model = build_crnn(config)
    model.load_state_dict(read_checkpoint(checkpoint))
    return model


class Trainer(ProtocolMixin, Workflow):
    """Train one network, keeping the parameters of the epoch with the lowest validation loss."""

    @classmethod
    def get_protocol_filepath(cls):
        """Return ``pathlib.Path`` to the ``.yaml`` file that defines the protocols."""
        from importlib_resources import files

        from . import protocols

        return files(protocols) / "train.yaml"

    @classmethod
    def model_config_from_inputs(cls, inputs: dict, schedule, n_classes: int) -> ModelConfig:
        model = dict(inputs["model"])
        return ModelConfig.from_schedule(schedule, n_classes, **model)

    def __init__(
        self,
        model: CRNN,
        train_set: SequenceDataset,
        val_set: SequenceDataset,
        config: TrainConfig,
        test_set: Optional[SequenceDataset] = None,
        output_dir: Union[str, Path, None] = None,
        label: Optional[str] = None,
    ):
        if train_set is None or len(train_set) == 0:
            raise InputValidationError("the training set is empty")
        if val_set is None or len(val_set) == 0:
            raise InputValidationError("the validation set is empty")
        for name, dataset in (("training", train_set), ("validation", val_set), ("test", test_set)):
            if dataset is not None and dataset.n_mels != model.config.n_mels:
                raise InputValidationError(
                    f"the {name} set has {dataset.n_mels} mel bands, the model expects {model.config.n_mels}"
                )
            if dataset is not None and dataset.n_classes != model.config.n_classes:
                raise InputValidationError(
                    f"the {name} set has {dataset.n_classes} classes, the model predicts {model.config.n_classes}"
                )
        super().__init__(label or f"{network_name(model.config.schedule)}<{model.config.schedule}>")
        self.model = model
        self.train_set = train_set
        self.val_set = val_set
        self.test_set = test_set
        self.config = config
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.optimizer = AdamState(learning_rate=config.initial_lr)
        self.stopper = EarlyStopping(config.patience)
        self.scheduler = PlateauScheduler(config.initial_lr, config.lr_factor, config.lr_plateau_epochs)
        self.records: List[EpochRecord] = []

    @property
    def tracks_test(self) -> bool:
        return self.config.track_test and self.test_set is not None

    def train_epoch(self, epoch: int, rng: numpy.random.Generator) -> float:
        """One pass over the shuffled training chunks with one Adam step per batch; returns the mean batch loss."""
        params = self.model.parameters()
        losses = []
        for batch in self.train_set.batches(self.config.batch_size, rng):
            self.model.zero_grad()
            loss = bce_loss(self.model.forward(batch.features, train=True, rng=rng), batch.targets, batch.masks)
            if not loss.is_finite():
                raise DivergenceError(f"the training loss became {loss.item()} in epoch {epoch}", epoch=epoch)
            loss.backward()
            adam_step(params, None, self.optimizer)
            losses.append(loss.item())
        return float(numpy.mean(losses))

    def validate(self, dataset: SequenceDataset) -> Tuple[float, MetricsReport]:
        report, loss = evaluate(self.model, dataset, self.config.threshold, self.config.batch_size)
        return loss, report

    def _write_record(self, record: EpochRecord) -> None:
        columns = EPOCH_COLUMNS + (TEST_COLUMNS if self.tracks_test else [])
        path = self.output_dir / EPOCHS_CSV
        row = pandas.DataFrame([asdict(record)], columns=columns)
        row.to_csv(path, mode="a", header=not path.exists(), index=False, lineterminator="\n")

    def run(self) -> Tuple[CRNN, List[EpochRecord]]:
        """Train until ``max_epochs`` or early stopping.

        :return: tuple of a copy of the best network and the per-epoch records.
        :raises DivergenceError: if a loss becomes NaN or infinite.
        """
        config = self.config
        rng = numpy.random.default_rng(config.seed)
        self.model.set_standardization(*self.train_set.standardization())
        if self.output_dir is not None:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            (self.output_dir / EPOCHS_CSV).unlink(missing_ok=True)
            write_model_config(self.output_dir / MODEL_CONFIG, self.model.config)

        best_state = self.model.state_dict()
        for epoch in range(1, config.max_epochs + 1):
            start = time.perf_counter()
            learning_rate = self.optimizer.learning_rate
            train_loss = self.train_epoch(epoch, rng)
            val_loss, val_report = self.validate(self.val_set)
            if not math.isfinite(val_loss):
                raise DivergenceError(f"the validation loss became {val_loss} in epoch {epoch}", epoch=epoch)
            record = EpochRecord(
                epoch, train_loss, val_loss, val_report.f1, val_report.er, learning_rate, time.perf_counter() - start
            )
            if self.tracks_test:
                _, test_report = self.validate(self.test_set)
                record.test_f1, record.test_er = test_report.f1, test_report.er
            self.records.append(record)

            if self.stopper.update(epoch, val_loss):
                best_state = self.model.state_dict()
                if self.output_dir is not None:
                    write_checkpoint(self.output_dir / BEST_CHECKPOINT, best_state)
            self.optimizer.learning_rate = self.scheduler.step(val_loss)
            if self.output_dir is not None:
                self._write_record(record)
            self.report(
                f"epoch {epoch}: train loss {train_loss:.4f}, val loss {val_loss:.4f}, val F1 {val_report.f1:.3f}, "
                f"lr {learning_rate:g}"
            )
            if self.stopper.should_stop:
                self.report(f"no improvement for {self.stopper.counter} epochs, stopping after epoch {epoch}")
                break

        if self.output_dir is not None:
            write_checkpoint(self.output_dir / LAST_CHECKPOINT, self.model.state_dict())
        best = self.model.copy()
        best.load_state_dict(best_state)
        self.report(f"best validation loss {self.stopper.best_loss:.4f} in epoch {self.stopper.best_epoch}")
        return best, self.records


def train(
    model: CRNN,
    train_set: SequenceDataset,
    val_set: SequenceDataset,
    config: TrainConfig,
    test_set: Optional[SequenceDataset] = None,
    output_dir: Union[str, Path, None] = None,
) -> Tuple[CRNN, List[EpochRecord]]:
    """Train ``model`` and return the best network with the per-epoch records."""
    return Trainer(model, train_set, val_set, config, test_set, output_dir).run()
