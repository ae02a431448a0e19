"""
Downstream discrete-token ASR for the accent-adapted scenario

A learned embedding table over token ids feeds a context window and a small
MLP with a CTC output. Only token ids reach this model, as is the case for
any consumer of a tokenizer.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.asr.ctc import ctc_losses, greedy_decode
from src.asr.training import SGD
from src.core.config import AdaptConfig
from src.core.errors import InvalidInputError
from src.core.logger import get_logger
from src.core.rng import derive_rng
from src.grad.layers import Embedding, Stack, mlp

logger = get_logger(__name__)


@dataclass
class TokenSample:
    """Token ids of one utterance and its transcript"""

    uid: str
    tokens: np.ndarray
    labels: Tuple[int, ...]


class TokenASR:
    """Embedding(K, D) -> context window -> MLP -> CTC logits"""

    def __init__(self, num_tokens: int, dim: int, hidden: int, vocab: int, context: int = 4):
        self.num_tokens = num_tokens
        self.vocab = vocab
        head = mlp(dim, hidden, vocab + 1, depth=2, context=context)
        self.net = Stack([Embedding(num_tokens, dim), *head.layers])

    def init_params(self, seed: int) -> Dict[str, np.ndarray]:
        return self.net.init_params(derive_rng(seed, "token-asr", "init"))

    def logits(self, tokens: np.ndarray, params: Dict[str, np.ndarray]) -> np.ndarray:
        return self.net([np.asarray(tokens, dtype=np.int64)], params)

    def _packed_logits(
        self, batch: Sequence[TokenSample], params: Dict[str, np.ndarray]
    ) -> Tuple[List[np.ndarray], Dict]:
        lengths = np.array([len(sample.tokens) for sample in batch], dtype=np.int64)
        ids = np.concatenate([np.asarray(sample.tokens, dtype=np.int64) for sample in batch])
        out, ctx = self.net.forward([ids, lengths], params)
        return np.split(out, np.cumsum(lengths)[:-1]), ctx

    def loss(
        self, batch: Sequence[TokenSample], params: Dict[str, np.ndarray]
    ) -> Tuple[float, Dict[str, np.ndarray]]:
        """Mean nll over the batch and its parameter gradients; the batch runs packed"""
        pieces, ctx = self._packed_logits(batch, params)
        nlls, grad_pieces = ctc_losses(list(zip(pieces, (sample.labels for sample in batch))))
        scale = 1.0 / len(batch)
        grad_logits = np.concatenate(grad_pieces, axis=0)
        grads = self.net.backward(ctx, grad_logits * np.asarray(scale, dtype=grad_logits.dtype)).params
        return float(np.sum(nlls)) * scale, grads

    def mean_loss(self, samples: Sequence[TokenSample], params: Dict[str, np.ndarray]) -> float:
        pieces, _ = self._packed_logits(samples, params)
        nlls, _ = ctc_losses(list(zip(pieces, (sample.labels for sample in samples))))
        return float(np.mean(nlls))

    def decode(self, tokens: np.ndarray, params: Dict[str, np.ndarray]) -> List[int]:
        return greedy_decode(self.logits(tokens, params))


@dataclass
class TokenASRResult:
    model: TokenASR
    params: Dict[str, np.ndarray]
    best_epoch: int
    history: List[Dict[str, float]]


def train_token_asr(
    train: Sequence[TokenSample],
    val: Sequence[TokenSample],
    num_tokens: int,
    vocab: int,
    config: AdaptConfig,
    dim: int,
    hidden: int,
    context: int,
    seed: int,
    clip_norm: float = 5.0,
) -> TokenASRResult:
    """
    Fit a fresh token ASR; the parameters with the lowest validation loss are kept

    Raises:
        InvalidInputError: the training set is empty
    """
    if not train:
        raise InvalidInputError("token ASR needs a non-empty adaptation training set")
    model = TokenASR(num_tokens, dim, hidden, vocab, context)
    params = model.init_params(seed)
    optimizer = SGD(config.lr, clip_norm)
    names = list(params)
    rng = derive_rng(seed, "token-asr", "batches")
    monitor = val if val else train

    best: Optional[Dict[str, np.ndarray]] = None
    best_loss, best_epoch = np.inf, 0
    history: List[Dict[str, float]] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            loss, grads = model.loss(batch, params)
            optimizer.step(params, grads, names)
            losses.append(loss)
        val_loss = model.mean_loss(monitor, params)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss, best_epoch = val_loss, epoch
            best = {name: value.copy() for name, value in params.items()}
        logger.debug(f"token ASR epoch {epoch}: train={np.mean(losses):.4f} val={val_loss:.4f}")

    logger.info(f"token ASR: best validation loss {best_loss:.4f} at epoch {best_epoch}")
    return TokenASRResult(model=model, params=best if best is not None else params, best_epoch=best_epoch, history=history)
