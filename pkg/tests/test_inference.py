import numpy as np
import pytest

from src.asr.inference import recognize, recognize_corpus, tokenize, tokenize_corpus
from src.asr.training import new_checkpoint
from src.core.errors import StateError
from src.synth.corpus import Utterance
from src.synth.datasets import L1_TEST, L2_TEST


def test_tokens_index_the_codebook(init_checkpoint, tiny_data):
    K = init_checkpoint.spec.model.codebook_size
    for tokens, utt in zip(tokenize_corpus(tiny_data[L2_TEST], init_checkpoint), tiny_data[L2_TEST]):
        assert tokens.dtype == np.int64
        assert tokens.shape == (utt.frames,)
        assert tokens.min() >= 0 and tokens.max() < K


def test_tokens_ignore_heads(init_checkpoint, tiny_data):
    utt = tiny_data[L1_TEST][0]
    other = init_checkpoint.copy()
    for name in other.params:
        if name.startswith("head_"):
            other.params[name] = other.params[name] + 1.0
    assert np.array_equal(tokenize(utt, init_checkpoint), tokenize(utt, other))


def test_recognize_is_deterministic(init_checkpoint, tiny_data):
    corpus = tiny_data[L2_TEST]
    first = recognize_corpus(corpus, "l2", init_checkpoint)
    assert first == recognize_corpus(corpus, "l2", init_checkpoint)
    assert first[0] == recognize(corpus[0], "l2", init_checkpoint)
    vocab = init_checkpoint.spec.vocab_l2
    assert all(1 <= label <= vocab for hyp in first for label in hyp)


def test_silent_input(init_checkpoint):
    utt = Utterance("silence", np.zeros((6, init_checkpoint.spec.feat_dim), dtype=np.float32), (), "l2")
    assert tokenize(utt, init_checkpoint).shape == (6,)
    assert isinstance(recognize(utt, "l1", init_checkpoint), list)


def test_requires_codebook(tiny_spec, tiny_data):
    checkpoint = new_checkpoint(tiny_spec, seed=1)
    with pytest.raises(StateError):
        tokenize(tiny_data[L2_TEST][0], checkpoint)
    with pytest.raises(StateError):
        recognize(tiny_data[L2_TEST][0], "l2", checkpoint)
