"""
The two ways of using a trained checkpoint: as an ASR model or as a tokenizer
"""

from typing import List, Sequence

import numpy as np

from src.asr.ctc import greedy_decode
from src.asr.model import CODEBOOK, IsibModel
from src.core.errors import StateError
from src.storage.checkpoint import Checkpoint
from src.synth.corpus import Utterance


def _model(checkpoint: Checkpoint) -> IsibModel:
    if CODEBOOK not in checkpoint.params:
        raise StateError("checkpoint has no codebook; initialise centroids first")
    return IsibModel(checkpoint.spec)


def recognize(utt: Utterance, lang: str, checkpoint: Checkpoint) -> List[int]:
    """Best-path transcript of one utterance through the head of lang"""
    trace = _model(checkpoint).forward_branch(utt.features, lang, checkpoint.params)
    return greedy_decode(trace.logits)


def recognize_corpus(corpus: Sequence[Utterance], lang: str, checkpoint: Checkpoint) -> List[List[int]]:
    model = _model(checkpoint)
    return [greedy_decode(model.forward_branch(utt.features, lang, checkpoint.params).logits) for utt in corpus]


def tokenize(utt: Utterance, checkpoint: Checkpoint) -> np.ndarray:
    """DiffKM token ids of every frame; only encoder and codebook are read"""
    tokens, _ = _model(checkpoint).embed(utt.features, checkpoint.params)
    return tokens.astype(np.int64)


def tokenize_corpus(corpus: Sequence[Utterance], checkpoint: Checkpoint) -> List[np.ndarray]:
    model = _model(checkpoint)
    return [model.embed(utt.features, checkpoint.params)[0].astype(np.int64) for utt in corpus]
