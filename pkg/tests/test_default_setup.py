"""Directional checks on the full default grid; each scenario trains for minutes"""

import time

import numpy as np
import pytest

from src.asr.inference import recognize_corpus
from src.asr.training import evaluate_loss
from src.core.config import ExperimentConfig, Settings
from src.eval.experiments import (
    ACCENTED_ALL,
    ACCENTED_STRONG,
    NATIVE_L2,
    run_accent_adapted,
    run_native_only,
    train_tokenizers,
)
from src.eval.metrics import score_corpus
from src.eval.report import RowKey
from src.synth.datasets import L2_TEST, L2_TRAIN, build_corpora

pytestmark = pytest.mark.slow

SCENARIO_SECONDS = 900.0


@pytest.fixture(scope="module")
def default_run():
    config = ExperimentConfig()
    workers = Settings().threads
    data = build_corpora(config.data)

    started = time.perf_counter()
    runs = train_tokenizers(config, data, workers)
    native = run_native_only(config, data, runs=runs, workers=workers).table
    native_seconds = time.perf_counter() - started

    started = time.perf_counter()
    adapted = run_accent_adapted(config, data, runs=runs, workers=workers)
    adapted_seconds = time.perf_counter() - started
    return {
        "config": config,
        "data": data,
        "runs": runs,
        "native": native,
        "adapted": adapted,
        "seconds": (native_seconds, adapted_seconds),
    }


def _median_over_seeds(runs, row, measure):
    values = [measure(checkpoint) for (key, _), checkpoint in runs.checkpoints.items() if key == row]
    assert values
    return float(np.median(values))


def test_scenarios_finish_in_time(default_run):
    native_seconds, adapted_seconds = default_run["seconds"]
    assert native_seconds <= SCENARIO_SECONDS
    assert adapted_seconds <= SCENARIO_SECONDS


def test_grid_trains_without_failures(default_run):
    assert not default_run["runs"].failures


def test_l1_initialisation_helps_accented_speech(default_run):
    table = default_run["native"]
    from_l1 = table.median(table.find("l1", False), ACCENTED_ALL)
    from_l2 = table.median(table.find("l2", False), ACCENTED_ALL)
    assert from_l1 < from_l2


def test_strong_accents_are_harder(default_run):
    table = default_run["native"]
    row = table.find("l1", False)
    assert table.median(row, ACCENTED_STRONG) >= table.median(row, ACCENTED_ALL)


def test_multitask_loss_helps_accented_speech(default_run):
    table = default_run["native"]
    l2_only = table.median(table.find("l1", True, 0.0), ACCENTED_ALL)
    mixed = min(table.median(table.find("l1", True, alpha), ACCENTED_ALL) for alpha in (0.3, 0.5))
    assert mixed <= l2_only


def test_pure_l2_objective_is_best_on_native_l2(default_run):
    table = default_run["native"]
    l2_only = table.median(table.find("l2", True, 0.0), NATIVE_L2)
    assert l2_only <= 0.20
    for row in table.rows:
        if row.init == "l2":
            assert l2_only <= table.median(row, NATIVE_L2), row.label


def test_adapted_tokens_beat_the_baseline(default_run):
    table = default_run["adapted"]
    baseline = table.median(table.find("l1", False), "n=200")
    mixed = table.median(table.find("l1", True, 0.3), "n=200")
    assert mixed <= 0.95 * baseline


def test_codebook_training_lowers_l2_loss(default_run):
    runs, test = default_run["runs"], default_run["data"][L2_TEST]

    def loss(checkpoint):
        return evaluate_loss(checkpoint, test, "l2")

    stage1 = _median_over_seeds(runs, RowKey("l1", False, 0.0), loss)
    stage2 = _median_over_seeds(runs, RowKey("l1", True, 0.0), loss)
    assert stage2 <= stage1


def test_training_split_is_no_harder_than_test_split(default_run):
    runs, data = default_run["runs"], default_run["data"]

    def rate(corpus):
        return lambda checkpoint: score_corpus(
            [u.labels for u in corpus], recognize_corpus(corpus, "l2", checkpoint)
        ).rate

    row = RowKey("l2", True, 0.0)
    assert _median_over_seeds(runs, row, rate(data[L2_TRAIN])) <= _median_over_seeds(runs, row, rate(data[L2_TEST]))
