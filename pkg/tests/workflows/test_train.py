"""Tests for the training loop in ``dcrnn_sed.workflows.train``."""

from dataclasses import asdict
import math

import numpy
import pandas
import pytest

from dcrnn_sed.common.exceptions import DivergenceError, InputValidationError
from dcrnn_sed.models.crnn import build_crnn
from dcrnn_sed.tools.corpus import SequenceDataset
from dcrnn_sed.tools.metrics import MetricsReport
from dcrnn_sed.workflows.train import (
    BEST_CHECKPOINT,
    EPOCH_COLUMNS,
    EPOCHS_CSV,
    LAST_CHECKPOINT,
    MODEL_CONFIG,
    TEST_COLUMNS,
    EarlyStopping,
    PlateauScheduler,
    TrainConfig,
    Trainer,
    evaluate,
    load_model,
    train,
)


def expected_stop_epoch(losses, patience, max_epochs):
    """Simulate the stopping rule: stop once ``patience`` epochs in a row fail to lower the best loss."""
    best, stagnant = math.inf, 0
    for epoch, loss in enumerate(losses[:max_epochs], start=1):
        if loss < best:
            best, stagnant = loss, 0
        else:
            stagnant += 1
        if stagnant >= patience:
            return epoch
    return max_epochs


def run_with_losses(model, datasets, losses, patience=30, max_epochs=100):
    """Run a trainer whose epochs are replaced by the injected validation losses."""
    config = TrainConfig(patience=patience, max_epochs=max_epochs, chunk_frames=8, track_test=False)
    trainer = Trainer(model, datasets["train"], datasets["val"], config)
    sequence = iter(losses)
    trainer.train_epoch = lambda epoch, rng: 0.0
    trainer.validate = lambda dataset: (next(sequence), MetricsReport())
    _, records = trainer.run()
    return trainer, records


def loss_scenario(seed):
    generator = numpy.random.default_rng(seed)
    patience = 30 if seed < 12 else int(generator.integers(1, 12))
    steps = generator.normal(-0.01, 0.05, size=150)
    losses = numpy.round(1.0 + numpy.cumsum(steps), 2)
    return patience, losses.tolist()


@pytest.mark.parametrize("seed", range(20))
def test_early_stopping_follows_the_rule(tiny_model, tiny_datasets, seed):
    patience, losses = loss_scenario(seed)
    trainer, records = run_with_losses(tiny_model, tiny_datasets, losses, patience, max_epochs=150)
    stop = expected_stop_epoch(losses, patience, 150)
    assert len(records) == stop
    assert [record.epoch for record in records] == list(range(1, stop + 1))
    assert trainer.stopper.best_epoch == int(numpy.argmin(losses[:stop])) + 1


def test_flat_losses_stop_after_thirty_stagnant_epochs(tiny_model, tiny_datasets):
    _, records = run_with_losses(tiny_model, tiny_datasets, [1.0] * 31)
    assert len(records) == 31


def test_improving_losses_run_to_max_epochs(tiny_model, tiny_datasets):
    _, records = run_with_losses(tiny_model, tiny_datasets, [1.0 / epoch for epoch in range(1, 41)], max_epochs=40)
    assert len(records) == 40


def test_early_stopping_counter():
    stopper = EarlyStopping(patience=2)
    assert stopper.update(1, 1.0)
    assert not stopper.update(2, 1.0)
    assert not stopper.should_stop
    assert not stopper.update(3, 1.5)
    assert stopper.should_stop
    assert stopper.best_epoch == 1


def test_two_plateaus_quarter_the_learning_rate():
    scheduler = PlateauScheduler(0.01, factor=0.5, plateau_epochs=10)
    rates = [scheduler.step(loss) for loss in [1.0] + [1.0] * 20]
    assert rates[10] == pytest.approx(0.005)
    assert rates[-1] == pytest.approx(0.0025)


def test_learning_rate_follows_the_scheduler(tiny_model, tiny_datasets):
    config = TrainConfig(patience=30, max_epochs=4, lr_plateau_epochs=1, chunk_frames=8, track_test=False)
    trainer = Trainer(tiny_model, tiny_datasets["train"], tiny_datasets["val"], config)
    sequence = iter([1.0, 2.0, 2.0, 0.5])
    trainer.train_epoch = lambda epoch, rng: 0.0
    trainer.validate = lambda dataset: (next(sequence), MetricsReport())
    _, records = trainer.run()
    assert [record.lr for record in records] == pytest.approx([0.01, 0.01, 0.005, 0.0025])


def test_one_adam_step_per_batch(tiny_model, make_recordings, rng):
    dataset = SequenceDataset(make_recordings(35, n_frames=8), chunk_frames=8)
    trainer = Trainer(tiny_model, dataset, dataset, TrainConfig(chunk_frames=8))
    trainer.train_epoch(1, rng)
    assert trainer.optimizer.step_count == math.ceil(35 / 16)


def test_training_is_deterministic(tiny_config, tiny_datasets):
    config = TrainConfig(max_epochs=3, chunk_frames=8, seed=5)

    def run():
        return train(build_crnn(tiny_config, seed=1), tiny_datasets["train"], tiny_datasets["val"], config)

    (first, first_records), (second, second_records) = run(), run()
    strip = [{**asdict(record), "seconds": None} for record in first_records]
    assert strip == [{**asdict(record), "seconds": None} for record in second_records]
    for name, value in first.state_dict().items():
        numpy.testing.assert_array_equal(value, second.state_dict()[name])


def test_training_lowers_the_loss(tiny_config, make_recordings):
    recordings = make_recordings(6, n_frames=16)
    dataset = SequenceDataset(recordings, chunk_frames=8)
    config = TrainConfig(max_epochs=15, chunk_frames=8, batch_size=4)
    _, records = train(build_crnn(tiny_config, seed=0), dataset, dataset, config)
    assert records[-1].train_loss < records[0].train_loss


def test_divergence_names_the_epoch(tiny_model, tiny_datasets):
    tiny_model.output_bias.data[:] = numpy.nan
    config = TrainConfig(max_epochs=3, chunk_frames=8)
    with pytest.raises(DivergenceError) as excinfo:
        train(tiny_model, tiny_datasets["train"], tiny_datasets["val"], config)
    assert excinfo.value.epoch == 1


def test_outputs_are_written(tmp_path, tiny_model, tiny_datasets):
    config = TrainConfig(max_epochs=2, chunk_frames=8)
    best, records = train(
        tiny_model, tiny_datasets["train"], tiny_datasets["val"], config, tiny_datasets["test"], tmp_path
    )
    for name in (BEST_CHECKPOINT, LAST_CHECKPOINT, MODEL_CONFIG, EPOCHS_CSV):
        assert (tmp_path / name).exists()
    epochs = pandas.read_csv(tmp_path / EPOCHS_CSV)
    assert list(epochs.columns) == EPOCH_COLUMNS + TEST_COLUMNS
    assert epochs["epoch"].tolist() == [record.epoch for record in records]
    assert all(record.test_f1 is not None for record in records)

    restored = load_model(tmp_path / BEST_CHECKPOINT)
    features = tiny_datasets["test"].features
    numpy.testing.assert_array_equal(restored.forward(features).data, best.forward(features).data)


def test_evaluate_with_zero_output_layer(tiny_model, tiny_datasets):
    tiny_model.output_weights.data[:] = 0.0
    tiny_model.output_bias.data[:] = 0.0
    dataset = tiny_datasets["val"]
    report, loss = evaluate(tiny_model, dataset)
    n_ref = int(dataset.targets[dataset.masks].sum())
    n_fp = int(dataset.masks.sum()) * dataset.n_classes - n_ref
    assert (report.tp, report.fp, report.fn) == (n_ref, n_fp, 0)
    assert report.f1 == pytest.approx(2 * n_ref / (2 * n_ref + n_fp))
    assert loss == pytest.approx(math.log(2))
    assert evaluate(tiny_model, dataset)[0] == report


def test_evaluate_rejects_an_empty_dataset(tiny_model):
    with pytest.raises(InputValidationError):
        evaluate(tiny_model, None)


def test_empty_validation_set(tiny_model, tiny_datasets):
    with pytest.raises(InputValidationError, match="validation"):
        Trainer(tiny_model, tiny_datasets["train"], None, TrainConfig())


def test_mel_mismatch(tiny_model, make_recordings):
    dataset = SequenceDataset(make_recordings(2, n_mels=6), chunk_frames=8)
    with pytest.raises(InputValidationError, match="6 mel bands"):
        Trainer(tiny_model, dataset, dataset, TrainConfig())


@pytest.mark.parametrize("kwargs", [{"patience": 0}, {"lr_factor": 1.0}, {"batch_size": 0}, {"initial_lr": -1.0}])
def test_invalid_train_config(kwargs):
    with pytest.raises(InputValidationError):
        TrainConfig(**kwargs)


def test_train_config_from_protocol_inputs():
    config = TrainConfig.from_inputs({"batch_size": 4, "unknown": 1}, seed=9)
    assert (config.batch_size, config.seed) == (4, 9)
