"""
Shared fixtures: a tiny synthetic setup that trains in well under a second
"""

import numpy as np
import pytest

from src.asr.training import init_centroids, new_checkpoint
from src.core.config import (
    AccentConfig,
    AdaptConfig,
    DataConfig,
    ExperimentConfig,
    ExperimentGrid,
    LanguageConfig,
    ModelConfig,
    ModelSpec,
    OutputConfig,
    TrainConfig,
)
from src.synth.datasets import L1_TRAIN, build_corpora, model_spec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_config(tmp_path_factory) -> ExperimentConfig:
    root = tmp_path_factory.mktemp("runs")
    return ExperimentConfig(
        data=DataConfig(
            seed=3,
            feat_dim=3,
            l1=LanguageConfig(phones=4, words=5),
            l2=LanguageConfig(phones=5, words=5),
            words_per_utt=(1, 2),
            n_train_l1=12,
            n_train_l2=12,
            n_test=6,
            accent=AccentConfig(n_speakers=3, utts_per_speaker=3, strong_fraction=0.34),
            adapt=AdaptConfig(n_speakers=5, utts_per_speaker=4, split=(3, 1, 1), epochs=2, batch_size=4),
        ),
        model=ModelConfig(context=1, hidden=8, encoder_layers=2, head_context=1, head_hidden=8, codebook_size=6),
        train=TrainConfig(stage1_epochs=2, stage2_epochs=2, batch_size=4, kmeans_max_iter=10),
        experiment=ExperimentGrid(alphas=[0.0, 0.5], inits=["l1", "l2"], seeds=[1, 2], adapt_sizes=[4, 1000]),
        output=OutputConfig(
            data_dir=str(root / "data"), run_dir=str(root / "checkpoints"), report_dir=str(root / "reports")
        ),
    )


@pytest.fixture(scope="session")
def tiny_data(tiny_config):
    return build_corpora(tiny_config.data)


@pytest.fixture(scope="session")
def tiny_spec(tiny_data, tiny_config) -> ModelSpec:
    return model_spec(tiny_data.l1, tiny_data.l2, tiny_config.model)


@pytest.fixture
def init_checkpoint(tiny_spec, tiny_data, tiny_config):
    """Codebook fitted on L1 encoder features, heads untrained"""
    return init_centroids(new_checkpoint(tiny_spec, seed=1), tiny_data[L1_TRAIN], tiny_config.train, "l1")


@pytest.fixture
def micro_spec() -> ModelSpec:
    """T=5, D=3, K=4, V=2 micro-model for end-to-end gradient checks"""
    return ModelSpec(
        feat_dim=3,
        vocab_l1=2,
        vocab_l2=2,
        model=ModelConfig(context=1, hidden=4, encoder_layers=2, head_context=1, head_hidden=4, codebook_size=4),
    )
