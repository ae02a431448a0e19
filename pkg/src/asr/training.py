"""
Two-stage training of the shared tokenizer and the two CTC heads

Stage 1 freezes the encoder and the codebook and trains only the heads;
stage 2 fine-tunes everything jointly. Both stages run plain SGD with
global-norm clipping on the weighted multi-task loss.
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.asr.ctc import ctc_loss
from src.asr.model import (
    CODEBOOK,
    HEADS,
    IsibModel,
    Lang,
    LossReport,
    ParamSet,
    ProgressFn,
    cache_key,
    is_shared,
    multitask_loss,
    parse_lang,
)
from src.core.config import ModelSpec, TrainConfig, config_hash
from src.core.errors import InvalidInputError, NumericError, StateError
from src.core.logger import get_logger
from src.core.rng import derive_rng, derive_seed
from src.quant.kmeans import lloyd_fit
from src.storage.checkpoint import Checkpoint
from src.synth.corpus import Utterance

logger = get_logger(__name__)

STAGE_NEW = "new"
STAGE_INIT = "init"
STAGE1 = "stage1"
STAGE2 = "stage2"


class SGD:
    """Plain SGD with clipping of the global gradient norm"""

    def __init__(self, lr: float, clip_norm: float = 5.0):
        if lr < 0:
            raise InvalidInputError(f"learning rate must be non-negative, got {lr}")
        self.lr = lr
        self.clip_norm = clip_norm

    def step(
        self, params: ParamSet, grads: Mapping[str, np.ndarray], names: Sequence[str], step: Optional[int] = None
    ) -> float:
        """
        Update params[name] in place for every name; returns the pre-clip norm

        Raises:
            NumericError: the gradient norm is not finite; params are left untouched
        """
        norm = math.sqrt(sum(float(np.sum(np.square(grads[n], dtype=np.float64))) for n in names))
        if not math.isfinite(norm):
            raise NumericError("non-finite gradient norm", step=step)
        if self.lr == 0.0 or norm == 0.0:
            return norm
        scale = self.lr * min(1.0, self.clip_norm / norm)
        for name in names:
            params[name] = (params[name] - scale * grads[name]).astype(params[name].dtype, copy=False)
        return norm


@dataclass
class EpochLog:
    """Mean LossReport over the steps of one epoch"""

    epoch: int
    stage: str
    loss: float
    loss_l1: float
    loss_l2: float
    alpha: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "epoch": self.epoch,
            "stage": self.stage,
            "loss": self.loss,
            "loss_l1": self.loss_l1,
            "loss_l2": self.loss_l2,
            "alpha": self.alpha,
        }


def _cycled(n: int, needed: int, rng: np.random.Generator) -> np.ndarray:
    """needed indices from back-to-back permutations of range(n)"""
    rounds = -(-needed // n)
    return np.concatenate([rng.permutation(n) for _ in range(rounds)])[:needed]


def batch_schedule(
    n_l1: int,
    n_l2: int,
    batch_size: int,
    rng: np.random.Generator,
    use_l1: bool = True,
    use_l2: bool = True,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Index pairs (L1 batch, L2 batch) for one epoch

    One epoch is one pass over the larger active corpus; the smaller one
    cycles through fresh permutations. An inactive side gets empty batches.
    """
    sizes = [n for n, used in ((n_l1, use_l1), (n_l2, use_l2)) if used]
    if not sizes or min(sizes) < 1:
        raise InvalidInputError("every weighted corpus must hold at least one utterance")
    steps = -(-max(sizes) // batch_size)
    needed = steps * batch_size
    empty = np.zeros(0, dtype=np.int64)
    order_l1 = _cycled(n_l1, needed, rng) if use_l1 else None
    order_l2 = _cycled(n_l2, needed, rng) if use_l2 else None
    schedule = []
    for step in range(steps):
        window = slice(step * batch_size, (step + 1) * batch_size)
        schedule.append(
            (
                order_l1[window] if order_l1 is not None else empty,
                order_l2[window] if order_l2 is not None else empty,
            )
        )
    return schedule


def trainable(model: IsibModel, alpha: float, frozen: bool) -> List[str]:
    """Parameters updated by a step: shared ones unless frozen, heads with non-zero weight"""
    names = []
    for name in model.param_shapes():
        if frozen and is_shared(name):
            continue
        if alpha == 0.0 and name.startswith(f"{HEADS[Lang.L1]}."):
            continue
        if alpha == 1.0 and name.startswith(f"{HEADS[Lang.L2]}."):
            continue
        names.append(name)
    return names


def new_checkpoint(spec: ModelSpec, seed: int) -> Checkpoint:
    """Freshly initialised encoder and heads; the codebook is still missing"""
    model = IsibModel(spec)
    params = model.ordered(model.init_params(derive_seed(seed, "params")))
    return Checkpoint(spec=spec, params=params, stage=STAGE_NEW, metadata={"seed": seed, "history": []})


def encoder_features(model: IsibModel, params: Mapping[str, np.ndarray], corpus: Iterable[Utterance]) -> np.ndarray:
    """Encoder outputs of every frame of a corpus, stacked in corpus order"""
    return np.concatenate([model.encode(utt.features, params)[0] for utt in corpus], axis=0)


def init_centroids(checkpoint: Checkpoint, corpus: Sequence[Utterance], config: TrainConfig, init: str) -> Checkpoint:
    """
    Fit the codebook with k-means on encoder features of the init-language corpus

    At most config.kmeans_max_points frames are used, drawn with the
    sub-stream (seed, "kmeans-points").
    """
    if not corpus:
        raise InvalidInputError("centroid initialisation needs a non-empty corpus")
    model = IsibModel(checkpoint.spec)
    points = encoder_features(model, checkpoint.params, corpus)
    if points.shape[0] > config.kmeans_max_points:
        rng = derive_rng(config.seed, "kmeans-points")
        keep = np.sort(rng.choice(points.shape[0], size=config.kmeans_max_points, replace=False))
        points = points[keep]

    codebook, history = lloyd_fit(
        points,
        checkpoint.spec.model.codebook_size,
        seed=derive_seed(config.seed, "centroids"),
        max_iter=config.kmeans_max_iter,
        tol=config.kmeans_tol,
        n_init=config.kmeans_n_init,
    )
    result = checkpoint.copy()
    result.params[CODEBOOK] = codebook.centroids
    result.params = model.ordered(result.params)
    result.stage = STAGE_INIT
    result.metadata.update({"init": parse_lang(init).value, "kmeans_inertia": history[-1]})
    return result


def _require_compatible(checkpoint: Checkpoint, model: IsibModel, expected: Optional[ModelSpec]) -> None:
    if expected is not None and config_hash(expected) != checkpoint.config_hash:
        raise StateError("checkpoint and configuration disagree on the model architecture")
    shapes = model.param_shapes()
    if set(shapes) != set(checkpoint.params):
        raise StateError("checkpoint parameters do not match the model layout")
    for name, shape in shapes.items():
        if tuple(checkpoint.params[name].shape) != shape:
            raise StateError(f"parameter {name} has shape {checkpoint.params[name].shape}, expected {shape}")


def _run_stage(
    model: IsibModel,
    params: ParamSet,
    corpus_l1: Sequence[Utterance],
    corpus_l2: Sequence[Utterance],
    config: TrainConfig,
    stage: str,
    epochs: int,
    lr: float,
    frozen: bool,
    workers: int,
    progress: Optional[ProgressFn],
) -> List[EpochLog]:
    alpha = config.alpha
    use_l1, use_l2 = alpha > 0.0, alpha < 1.0
    if use_l1 and not corpus_l1:
        raise InvalidInputError("alpha > 0 needs an L1 training corpus")
    if use_l2 and not corpus_l2:
        raise InvalidInputError("alpha < 1 needs an L2 training corpus")

    cache: Dict[Tuple[str, str], Tuple[np.ndarray, np.ndarray]] = {}
    if frozen:
        for lang, corpus, used in ((Lang.L1, corpus_l1, use_l1), (Lang.L2, corpus_l2, use_l2)):
            if used:
                cache.update({cache_key(lang, utt.uid): model.embed(utt.features, params) for utt in corpus})

    optimizer = SGD(lr, config.clip_norm)
    names = trainable(model, alpha, frozen)
    rng = derive_rng(config.seed, stage)
    logs: List[EpochLog] = []
    step = 0
    for epoch in range(1, epochs + 1):
        reports: List[LossReport] = []
        schedule = batch_schedule(len(corpus_l1), len(corpus_l2), config.batch_size, rng, use_l1, use_l2)
        for idx_l1, idx_l2 in schedule:
            batch_l1 = [corpus_l1[i] for i in idx_l1]
            batch_l2 = [corpus_l2[i] for i in idx_l2]
            report, grads = multitask_loss(
                model, batch_l1, batch_l2, alpha, params,
                frozen=frozen, step=step, workers=workers, cache=cache if frozen else None,
            )
            norm = optimizer.step(params, grads, names, step=step)
            logger.debug(f"{stage} step {step}: loss={report.total:.4f} grad_norm={norm:.3f}")
            if progress is not None:
                progress(report)
            reports.append(report)
            step += 1

        log = EpochLog(
            epoch=epoch,
            stage=stage,
            loss=float(np.mean([r.total for r in reports])),
            loss_l1=float(np.mean([r.loss_l1 for r in reports])),
            loss_l2=float(np.mean([r.loss_l2 for r in reports])),
            alpha=alpha,
        )
        logs.append(log)
        logger.info(
            f"{stage} epoch {epoch}/{epochs}: loss={log.loss:.4f} "
            f"l1={log.loss_l1:.4f} l2={log.loss_l2:.4f} alpha={alpha}"
        )
    return logs


def train_stage1(
    checkpoint: Checkpoint,
    corpus_l1: Sequence[Utterance],
    corpus_l2: Sequence[Utterance],
    config: TrainConfig,
    workers: int = 1,
    progress: Optional[ProgressFn] = None,
) -> Checkpoint:
    """
    Train the heads with encoder and codebook frozen

    Raises:
        StateError: the codebook has not been initialised
    """
    if CODEBOOK not in checkpoint.params:
        raise StateError("codebook is not initialised; run init-centroids first")
    model = IsibModel(checkpoint.spec)
    _require_compatible(checkpoint, model, None)

    result = checkpoint.copy()
    logs = _run_stage(
        model, result.params, corpus_l1, corpus_l2, config, STAGE1,
        config.stage1_epochs, config.stage1_lr, True, workers, progress,
    )
    result.stage = STAGE1
    result.metadata.setdefault("history", []).extend(log.to_dict() for log in logs)
    result.metadata["alpha"] = config.alpha
    return result


def train_stage2(
    checkpoint: Checkpoint,
    corpus_l1: Sequence[Utterance],
    corpus_l2: Sequence[Utterance],
    config: TrainConfig,
    expected: Optional[ModelSpec] = None,
    workers: int = 1,
    progress: Optional[ProgressFn] = None,
) -> Checkpoint:
    """
    Fine-tune encoder, codebook and heads jointly

    Raises:
        StateError: not a stage-1 checkpoint, or it does not fit the expected model
    """
    if checkpoint.stage not in (STAGE1, STAGE2):
        raise StateError(f"stage 2 needs a stage-1 checkpoint, got stage '{checkpoint.stage}'")
    model = IsibModel(checkpoint.spec)
    _require_compatible(checkpoint, model, expected)

    result = checkpoint.copy()
    logs = _run_stage(
        model, result.params, corpus_l1, corpus_l2, config, STAGE2,
        config.stage2_epochs, config.stage2_lr, False, workers, progress,
    )
    result.stage = STAGE2
    result.metadata.setdefault("history", []).extend(log.to_dict() for log in logs)
    result.metadata["alpha"] = config.alpha
    return result


def evaluate_loss(checkpoint: Checkpoint, corpus: Sequence[Utterance], lang: str) -> float:
    """Mean per-utterance CTC nll of one branch over a corpus"""
    if not corpus:
        raise InvalidInputError("cannot evaluate the loss of an empty corpus")
    model = IsibModel(checkpoint.spec)
    branch = parse_lang(lang)
    total = 0.0
    for utt in corpus:
        trace = model.forward_branch(utt.features, branch, checkpoint.params)
        nll, _ = ctc_loss(trace.logits, utt.labels)
        total += nll
    return total / len(corpus)


def history_rows(checkpoint: Checkpoint) -> List[Dict[str, float]]:
    """Per-epoch loss log stored in checkpoint metadata"""
    return list(checkpoint.metadata.get("history", []))


