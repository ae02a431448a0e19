"""
Configuration management for the ISIB toolkit
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import psutil
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.core.errors import ConfigError
from src.core.logger import get_logger

# Load environment variables from .env file
load_dotenv()

logger = get_logger(__name__)


class StrictModel(BaseModel):
    """Config node that rejects unknown keys"""

    model_config = ConfigDict(extra="forbid", frozen=True)


class Settings(BaseModel):
    """Runtime settings taken from the environment"""

    threads: int = Field(1, ge=1)
    log_level: str = "INFO"
    log_file: Optional[str] = None

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level"""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            logger.warning(f"Invalid log level '{v}'. Defaulting to 'INFO'")
            return "INFO"
        return v.upper()

    def __init__(self, **data):
        default_threads = min(4, psutil.cpu_count(logical=False) or 1)
        env_data = {
            "threads": int(os.getenv("ISIB_THREADS", str(default_threads))),
            "log_level": os.getenv("ISIB_LOG_LEVEL", "INFO"),
            "log_file": os.getenv("ISIB_LOG_FILE"),
        }
        super().__init__(**{**env_data, **data})


class LanguageConfig(StrictModel):
    """Generative parameters of one synthetic language"""

    phones: int = Field(10, ge=2)
    words: int = Field(20, ge=2)
    separation: float = Field(4.0, gt=0)
    spread: float = Field(1.0, gt=0)
    mean_duration: int = Field(3, ge=1)
    duration_jitter: int = Field(1, ge=0)


class AccentConfig(StrictModel):
    """Accented test panel: speakers with strengths around a centre value"""

    strength: float = Field(0.6, ge=0.0, le=1.0)
    spread: float = Field(0.2, ge=0.0, le=1.0)
    n_speakers: int = Field(10, ge=1)
    utts_per_speaker: int = Field(20, ge=1)
    strong_fraction: float = Field(0.3, gt=0.0, le=1.0)


class AdaptConfig(StrictModel):
    """Accented adaptation panel and downstream token-ASR training"""

    n_speakers: int = Field(30, ge=3)
    utts_per_speaker: int = Field(20, ge=1)
    split: Tuple[int, int, int] = (8, 1, 1)
    epochs: int = Field(20, ge=1)
    lr: float = Field(0.1, gt=0)
    batch_size: int = Field(16, ge=1)

    @field_validator("split")
    @classmethod
    def validate_split(cls, v: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(part <= 0 for part in v):
            raise ValueError("split ratios must be positive")
        return v


class DataConfig(StrictModel):
    """Synthetic corpora; utterance counts stand in for hours of speech"""

    seed: int = Field(7, ge=0)
    feat_dim: int = Field(8, ge=1)
    sigma: float = Field(0.25, ge=0.0)
    l1: LanguageConfig = LanguageConfig(phones=10, words=20)
    l2: LanguageConfig = LanguageConfig(phones=12, words=20)
    words_per_utt: Tuple[int, int] = (2, 4)
    n_train_l1: int = Field(400, ge=1)
    n_train_l2: int = Field(400, ge=1)
    n_test: int = Field(100, ge=1)
    accent: AccentConfig = AccentConfig()
    adapt: AdaptConfig = AdaptConfig()

    @field_validator("words_per_utt")
    @classmethod
    def validate_words_per_utt(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        low, high = v
        if low < 1 or high < low:
            raise ValueError("words_per_utt must satisfy 1 <= min <= max")
        return v


class ModelConfig(StrictModel):
    """Architecture of encoder, DiffKM bottleneck and CTC heads"""

    context: int = Field(1, ge=0)
    hidden: int = Field(32, ge=1)
    encoder_layers: int = Field(2, ge=1)
    head_context: int = Field(4, ge=0)
    head_hidden: int = Field(32, ge=1)
    codebook_size: int = Field(64, ge=1)
    tau: float = Field(1.0, gt=0.0)


class TrainConfig(StrictModel):
    """Two-stage training schedule and optimizer settings"""

    alpha: float = Field(0.0, ge=0.0, le=1.0)
    stage1_epochs: int = Field(20, ge=1)
    stage2_epochs: int = Field(10, ge=0)
    stage1_lr: float = Field(0.1, gt=0.0)
    stage2_lr: float = Field(1e-2, ge=0.0)
    batch_size: int = Field(16, ge=1)
    seed: int = Field(1, ge=0)
    clip_norm: float = Field(5.0, gt=0.0)
    kmeans_max_iter: int = Field(50, ge=1)
    kmeans_tol: float = Field(1e-4, ge=0.0)
    kmeans_n_init: int = Field(1, ge=1)
    kmeans_max_points: int = Field(20000, ge=1)


class ExperimentGrid(StrictModel):
    """Rows and seeds of the report tables"""

    alphas: List[float] = [0.0, 0.3, 0.5, 0.7]
    inits: List[str] = ["l1", "l2"]
    seeds: List[int] = [1, 2, 3, 4, 5]
    include_baseline: bool = True
    adapt_sizes: List[int] = [200]

    @field_validator("alphas")
    @classmethod
    def validate_alphas(cls, v: List[float]) -> List[float]:
        if any(a < 0.0 or a > 1.0 for a in v):
            raise ValueError("every alpha must lie in [0, 1]")
        return v

    @field_validator("inits")
    @classmethod
    def validate_inits(cls, v: List[str]) -> List[str]:
        lowered = [item.lower() for item in v]
        if any(item not in ("l1", "l2") for item in lowered):
            raise ValueError("inits must be drawn from {'l1', 'l2'}")
        return lowered

    @field_validator("seeds", "adapt_sizes")
    @classmethod
    def validate_non_empty(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("list must not be empty")
        return v


class OutputConfig(StrictModel):
    """Where generated data, checkpoints and reports go"""

    data_dir: str = "runs/data"
    run_dir: str = "runs/checkpoints"
    report_dir: str = "runs/reports"


class ExperimentConfig(StrictModel):
    """Full configuration tree validated before any compute"""

    data: DataConfig = DataConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    experiment: ExperimentGrid = ExperimentGrid()
    output: OutputConfig = OutputConfig()

    def with_seed(self, seed: Optional[int]) -> "ExperimentConfig":
        """Apply a global --seed override to data generation and training"""
        if seed is None:
            return self
        return self.model_copy(
            update={
                "data": self.data.model_copy(update={"seed": seed}),
                "train": self.train.model_copy(update={"seed": seed}),
            }
        )


class ModelSpec(StrictModel):
    """Architecture-defining fields hashed into every checkpoint"""

    feat_dim: int = Field(ge=1)
    vocab_l1: int = Field(ge=1)
    vocab_l2: int = Field(ge=1)
    model: ModelConfig = ModelConfig()


def config_hash(spec: ModelSpec) -> str:
    """sha256 of the canonical JSON form of a model spec"""
    payload = json.dumps(spec.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_experiment_config(path: Optional[str] = None) -> ExperimentConfig:
    """Load and validate an experiment config from YAML; defaults when path is None"""
    if path is None:
        return ExperimentConfig()

    config_file = Path(path)
    if not config_file.exists():
        raise ConfigError(f"Config file not found: {config_file}")

    try:
        with open(config_file, encoding="utf-8") as f:
            raw: Dict[str, Any] = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed YAML in {config_file}: {e}") from e

    if not isinstance(raw, dict):
        raise ConfigError(f"Config root must be a mapping: {config_file}")

    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {config_file}:\n{e}") from e

    logger.debug(f"Loaded experiment config from {config_file}")
    return config
