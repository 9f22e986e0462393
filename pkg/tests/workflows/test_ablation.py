"""Tests for the dilation-rate ablation in ``dcrnn_sed.workflows.ablation``."""

import logging

import pandas
import pytest

from dcrnn_sed.common.exceptions import InputValidationError
from dcrnn_sed.common.log import LOGGER
from dcrnn_sed.models.crnn import build_crnn
from dcrnn_sed.workflows import ablation as ablation_module
from dcrnn_sed.workflows.ablation import (
    CURVES_CSV,
    RESULTS_CSV,
    STATUS_CSV,
    Ablation,
    AblationEntry,
    AblationPlan,
    run_ablation,
)


@pytest.fixture(scope="module")
def fast_plan():
    return Ablation.plan_from_protocol("fast")


@pytest.fixture(scope="module")
def fast_results(fast_plan, tmp_path_factory):
    output_dir = tmp_path_factory.mktemp("ablation")
    return output_dir, run_ablation(fast_plan, output_dir)


def test_default_plan_holds_the_ten_schedules():
    plan = Ablation.plan_from_protocol()
    assert len(plan.entries) == 10
    assert plan.entries[5] == AblationEntry("Dilated CRNN3", "2-4-8")
    assert plan.entries[8] == AblationEntry("Baseline CRNN5", "1-1-1-1-1")
    assert {layers: len(entries) for layers, entries in plan.pairs().items()} == {1: 2, 2: 2, 3: 2, 4: 2, 5: 2}
    assert plan.train.max_epochs == 60
    assert plan.model["filters"] == 16


def test_fast_plan(fast_plan):
    assert [entry.schedule for entry in fast_plan.entries] == ["1", "2"]
    assert fast_plan.synth["n_classes"] == 2
    assert fast_plan.model["n_mels"] == 10
    assert fast_plan.train.seed == fast_plan.seed == 7


def test_results_table(fast_results):
    output_dir, table = fast_results
    header = (output_dir / RESULTS_CSV).read_text().splitlines()[0]
    assert header == "network,dilation_rate,params,f1_percent,er_percent"
    assert table["network"].tolist() == ["Baseline CRNN1", "Dilated CRNN1"]
    assert table["params"].nunique() == 1
    assert table["f1_percent"].between(0, 100).all()
    status = pandas.read_csv(output_dir / STATUS_CSV)
    assert status["status"].tolist() == ["ok", "ok"]


def test_curves_hold_every_epoch(fast_results):
    output_dir, _ = fast_results
    curves = pandas.read_csv(output_dir / CURVES_CSV)
    assert set(curves["dilation_rate"].astype(str)) == {"1", "2"}
    assert {"val_f1", "test_f1", "lr", "seconds"} <= set(curves.columns)
    assert curves.groupby("dilation_rate")["epoch"].max().le(3).all()
    assert (output_dir / "runs" / "2" / "best.dcrn").exists()


def test_identical_seeds_give_identical_results(fast_plan, fast_results, tmp_path):
    output_dir, _ = fast_results
    run_ablation(fast_plan, tmp_path)
    assert (tmp_path / RESULTS_CSV).read_bytes() == (output_dir / RESULTS_CSV).read_bytes()


def test_parallel_workers_give_the_same_results(fast_plan, fast_results, tmp_path):
    output_dir, _ = fast_results
    run_ablation(fast_plan, tmp_path, jobs=2)
    assert (tmp_path / RESULTS_CSV).read_bytes() == (output_dir / RESULTS_CSV).read_bytes()


def test_failed_run_is_recorded(tmp_path):
    overrides = {"schedules": ["1", "1-1"], "model": {"n_mels": 4, "pool_freq": [4]}}
    table = run_ablation(Ablation.plan_from_protocol("fast", overrides), tmp_path)
    assert len(table) == 2
    assert table["f1_percent"].notna().tolist() == [True, False]
    status = pandas.read_csv(tmp_path / STATUS_CSV)
    assert status["status"].tolist() == ["ok", "failed"]
    assert "1 pooling factors given for 2 layers" in status["message"][1]


def test_unexpected_error_does_not_stop_the_remaining_runs(tmp_path, monkeypatch, caplog):
    built = []

    def build_or_fail(config, seed=0):
        built.append(config.schedule)
        if len(built) == 1:
            raise MemoryError("cannot allocate the network")
        return build_crnn(config, seed)

    monkeypatch.setattr(ablation_module, "build_crnn", build_or_fail)
    caplog.set_level(logging.INFO, logger=LOGGER.name)
    LOGGER.addHandler(caplog.handler)
    try:
        table = run_ablation(Ablation.plan_from_protocol("fast"), tmp_path)
    finally:
        LOGGER.removeHandler(caplog.handler)
    assert built == ["1", "2"]
    assert table["f1_percent"].notna().tolist() == [False, True]
    status = pandas.read_csv(tmp_path / STATUS_CSV)
    assert status["status"].tolist() == ["failed", "ok"]
    assert status["message"][0] == "MemoryError: cannot allocate the network"
    assert any("MemoryError" in message for message in caplog.messages)


def test_single_schedule_plan(fast_plan):
    plan = AblationPlan.from_schedules(["1"], synth=fast_plan.synth, model=fast_plan.model, train=fast_plan.train)
    assert plan.entries == [AblationEntry("Baseline CRNN1", "1")]


def test_plan_needs_data():
    with pytest.raises(InputValidationError):
        AblationPlan.from_schedules(["1"])
    with pytest.raises(InputValidationError):
        AblationPlan.from_schedules(["1-x"], synth={})


def test_invalid_worker_count(fast_plan):
    with pytest.raises(InputValidationError):
        Ablation(fast_plan, jobs=0)


@pytest.mark.slow
def test_dilated_crnn3_learns_the_desk_corpus(tmp_path):
    plan = Ablation.plan_from_protocol("desk", {"schedules": ["2-4-8"]})
    table = run_ablation(plan, tmp_path)
    assert table["f1_percent"][0] >= 70.0
