"""
Experiment drivers for the native-only and accent-adapted scenarios

Native-only: each row trains a tokenizer + two heads from native speech only
and recognises accented L2 speech zero-shot with the L2 head.
Accent-adapted: each row's tokenizer converts a small accented corpus into
token ids on which a fresh downstream token ASR is trained.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.asr.inference import recognize_corpus, tokenize_corpus
from src.asr.model import Lang
from src.asr.token_asr import TokenSample, train_token_asr
from src.asr.training import init_centroids, new_checkpoint, train_stage1, train_stage2
from src.core.config import ExperimentConfig
from src.core.errors import InvalidInputError, IsibError
from src.core.logger import get_logger
from src.eval.metrics import score_corpus
from src.eval.report import ReportTable, RowKey, grid_rows
from src.storage.checkpoint import Checkpoint
from src.synth.corpus import Utterance, split_by_speaker, subsample
from src.synth.datasets import (
    ACCENTED,
    ADAPT,
    L1_TEST,
    L1_TRAIN,
    L2_TEST,
    L2_TRAIN,
    SyntheticData,
    build_corpora,
    model_spec,
)

logger = get_logger(__name__)

NATIVE_L2 = "native-l2"
ACCENTED_ALL = "accented-all"
ACCENTED_STRONG = "accented-strong"
NATIVE_L1 = "native-l1"
NATIVE_COLUMNS = [NATIVE_L2, ACCENTED_ALL, ACCENTED_STRONG, NATIVE_L1]
ALL_SIZES = "all"

TokenizerKey = Tuple[RowKey, int]
RowCallback = Callable[[RowKey, int], None]


@dataclass
class TokenizerRuns:
    """Trained checkpoints per (row, seed) and the failures met on the way"""

    checkpoints: Dict[TokenizerKey, Checkpoint] = field(default_factory=dict)
    failures: Dict[TokenizerKey, str] = field(default_factory=dict)


@dataclass
class NativeOnlyResult:
    table: ReportTable
    runs: TokenizerRuns


def train_tokenizers(
    config: ExperimentConfig,
    data: SyntheticData,
    workers: int = 1,
    on_row: Optional[RowCallback] = None,
) -> TokenizerRuns:
    """
    Train every configured row for every seed

    The baseline is stage 1 at alpha = 0 with the k-means codebook left
    untouched; the alpha = 0 DiffKM row continues from that same stage-1
    checkpoint. A failure only affects the (row, seed) it occurred in.
    """
    grid = config.experiment
    spec = model_spec(data.l1, data.l2, config.model)
    rows = grid_rows(grid.inits, grid.alphas, grid.include_baseline)
    corpora = {Lang.L1.value: data[L1_TRAIN], Lang.L2.value: data[L2_TRAIN]}
    runs = TokenizerRuns()

    for seed in grid.seeds:
        for init in grid.inits:
            stage1: Dict[float, Checkpoint] = {}
            try:
                base_cfg = config.train.model_copy(update={"seed": seed})
                initial = init_centroids(new_checkpoint(spec, seed), corpora[init], base_cfg, init)
            except IsibError as e:
                logger.warning(f"centroid initialisation failed for init-{init}, seed {seed}: {e}")
                for row in rows:
                    if row.init == init:
                        runs.failures[(row, seed)] = str(e)
                continue

            for row in (r for r in rows if r.init == init):
                cfg = config.train.model_copy(update={"seed": seed, "alpha": row.alpha})
                try:
                    if row.alpha not in stage1:
                        stage1[row.alpha] = train_stage1(
                            initial, data[L1_TRAIN], data[L2_TRAIN], cfg, workers=workers
                        )
                    checkpoint = stage1[row.alpha]
                    if row.diffkm:
                        checkpoint = train_stage2(
                            checkpoint, data[L1_TRAIN], data[L2_TRAIN], cfg, expected=spec, workers=workers
                        )
                    else:
                        checkpoint = checkpoint.copy()
                    checkpoint.metadata["row"] = row.label
                    runs.checkpoints[(row, seed)] = checkpoint
                except IsibError as e:
                    logger.warning(f"row {row.label}, seed {seed} failed: {e}")
                    runs.failures[(row, seed)] = str(e)
                if on_row is not None:
                    on_row(row, seed)
    return runs


def run_native_only(
    config: ExperimentConfig,
    data: Optional[SyntheticData] = None,
    runs: Optional[TokenizerRuns] = None,
    workers: int = 1,
    on_row: Optional[RowCallback] = None,
) -> NativeOnlyResult:
    """Zero-shot recognition of native and accented speech per row, aggregated over seeds"""
    data = data if data is not None else build_corpora(config.data)
    grid = config.experiment
    table = ReportTable(
        title="native-only",
        rows=grid_rows(grid.inits, grid.alphas, grid.include_baseline),
        columns=list(NATIVE_COLUMNS),
        seeds=list(grid.seeds),
    )
    conditions: List[Tuple[str, Sequence[Utterance], Lang]] = [
        (NATIVE_L2, data[L2_TEST], Lang.L2),
        (ACCENTED_ALL, data[ACCENTED], Lang.L2),
        (ACCENTED_STRONG, data.accented_strong(config.data.accent.strong_fraction), Lang.L2),
        (NATIVE_L1, data[L1_TEST], Lang.L1),
    ]

    if runs is None:
        runs = train_tokenizers(config, data, workers, on_row)
    for (row, seed), message in runs.failures.items():
        table.record_failure(row, seed, message)
    for (row, seed), checkpoint in runs.checkpoints.items():
        for column, corpus, lang in conditions:
            if lang is Lang.L1 and row.alpha == 0.0:
                # the L1 head never trains at alpha = 0; its cell stays empty
                continue
            hyps = recognize_corpus(corpus, lang.value, checkpoint)
            table.record(row, column, seed, score_corpus([u.labels for u in corpus], hyps))
        scored = {c: table.rates(row, c) for c in NATIVE_COLUMNS}
        logger.info(
            f"{row.label} seed {seed}: "
            + " ".join(f"{c}={rates[seed]:.3f}" for c, rates in scored.items() if seed in rates)
        )
    return NativeOnlyResult(table=table, runs=runs)


def adapt_columns(sizes: Sequence[int], available: int) -> List[Tuple[str, int]]:
    """(column name, utterance count) per adaptation size; sizes beyond the data become 'all'"""
    if any(size < 1 for size in sizes):
        raise InvalidInputError("adaptation sizes must be at least one utterance")
    if available < 1:
        raise InvalidInputError("the adaptation training split is empty")
    columns = [(f"n={size}", size) for size in sorted(set(sizes)) if size < available]
    columns.append((ALL_SIZES, available))
    return columns


def _samples(utts: Sequence[Utterance], tokens: Dict[str, np.ndarray]) -> List[TokenSample]:
    return [TokenSample(uid=u.uid, tokens=tokens[u.uid], labels=u.labels) for u in utts]


def run_accent_adapted(
    config: ExperimentConfig,
    data: Optional[SyntheticData] = None,
    runs: Optional[TokenizerRuns] = None,
    workers: int = 1,
    on_row: Optional[RowCallback] = None,
) -> ReportTable:
    """
    Downstream token ASR trained on tokenized accented speech, per row, size and seed

    The adaptation panel is split 8:1:1 by speaker once (from the data seed);
    each size column subsamples the training part.
    """
    data = data if data is not None else build_corpora(config.data)
    grid = config.experiment
    adapt = config.data.adapt
    train, val, test = split_by_speaker(data[ADAPT], tuple(adapt.split), seed=config.data.seed)
    columns = adapt_columns(grid.adapt_sizes, len(train))
    table = ReportTable(
        title="accent-adapted",
        rows=grid_rows(grid.inits, grid.alphas, grid.include_baseline),
        columns=[name for name, _ in columns],
        seeds=list(grid.seeds),
    )
    if runs is None:
        runs = train_tokenizers(config, data, workers)
    for (row, seed), message in runs.failures.items():
        table.record_failure(row, seed, message)

    for (row, seed), checkpoint in runs.checkpoints.items():
        try:
            tokens = dict(zip((u.uid for u in data[ADAPT]), tokenize_corpus(data[ADAPT], checkpoint)))
            val_samples = _samples(val, tokens)
            for column, size in columns:
                result = train_token_asr(
                    _samples(subsample(train, size, seed), tokens),
                    val_samples,
                    num_tokens=checkpoint.spec.model.codebook_size,
                    vocab=data.l2.vocab_size,
                    config=adapt,
                    dim=checkpoint.spec.feat_dim,
                    hidden=config.model.head_hidden,
                    context=config.model.head_context,
                    seed=seed,
                    clip_norm=config.train.clip_norm,
                )
                hyps = [result.model.decode(tokens[u.uid], result.params) for u in test]
                table.record(row, column, seed, score_corpus([u.labels for u in test], hyps))
            logger.info(
                f"{row.label} seed {seed}: "
                + " ".join(f"{c}={table.rates(row, c)[seed]:.3f}" for c in table.columns)
            )
        except IsibError as e:
            logger.warning(f"adaptation for {row.label}, seed {seed} failed: {e}")
            table.record_failure(row, seed, str(e))
        if on_row is not None:
            on_row(row, seed)
    return table
