"""
Encoder, shared DiffKM bottleneck and the two CTC heads

Parameter names are flat and ordered: encoder.*, codebook.centroids,
head_l1.*, head_l2.*. Both branches read the same encoder and codebook and
differ only in their head.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.asr.ctc import ctc_loss, ctc_losses
from src.core.config import ModelSpec
from src.core.errors import InvalidInputError, NumericError
from src.core.logger import get_logger
from src.core.rng import derive_rng
from src.grad.layers import Stack, mlp
from src.quant.diffkm import CENTROIDS, DiffKM, SoftKMeans
from src.synth.corpus import Utterance

logger = get_logger(__name__)

ParamSet = Dict[str, np.ndarray]

ENCODER = "encoder"
CODEBOOK = f"codebook.{CENTROIDS}"


class Lang(str, Enum):
    """Branch of the model: the speaker's L1 or the target language L2"""

    L1 = "l1"
    L2 = "l2"


HEADS = {Lang.L1: "head_l1", Lang.L2: "head_l2"}


def parse_lang(value: Any) -> Lang:
    """Normalise a language tag; anything but l1/l2 is rejected"""
    try:
        return Lang(str(value.value if isinstance(value, Lang) else value).lower())
    except ValueError as e:
        raise InvalidInputError(f"unknown language tag '{value}'; expected 'l1' or 'l2'") from e


def scoped(params: Mapping[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    """Sub-dictionary of params under prefix, with the prefix stripped"""
    head = f"{prefix}."
    return {k[len(head):]: v for k, v in params.items() if k.startswith(head)}


def prefixed(grads: Mapping[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v for k, v in grads.items()}


def is_shared(name: str) -> bool:
    """Encoder and codebook parameters, frozen during stage 1"""
    return name.startswith(f"{ENCODER}.") or name == CODEBOOK


@dataclass
class BranchTrace:
    """Everything backward_branch needs from one forward_branch"""

    lang: Lang
    tokens: np.ndarray
    embeddings: np.ndarray
    logits: np.ndarray
    encoder_ctx: Optional[Dict[str, Any]]
    quant_ctx: Optional[Dict[str, Any]]
    head_ctx: Dict[str, Any]


@dataclass
class LossReport:
    """Weighted multi-task loss of one step"""

    total: float
    loss_l1: float
    loss_l2: float
    alpha: float
    step: int

    def to_dict(self) -> Dict[str, float]:
        return {
            "step": self.step,
            "alpha": self.alpha,
            "loss": self.total,
            "loss_l1": self.loss_l1,
            "loss_l2": self.loss_l2,
        }


def combine_losses(loss_l1: float, loss_l2: float, alpha: float) -> float:
    """(1 - alpha) * L2 + alpha * L1"""
    return (1.0 - alpha) * loss_l2 + alpha * loss_l1


EmbeddingCache = Mapping[Tuple[str, str], Tuple[np.ndarray, np.ndarray]]


def cache_key(lang: Any, uid: str) -> Tuple[str, str]:
    """Frozen-embedding cache entries are per branch; uids may repeat across corpora"""
    return parse_lang(lang).value, uid


def _packed(x: np.ndarray, lengths: Optional[np.ndarray]) -> List[np.ndarray]:
    return [x] if lengths is None else [x, lengths]


class IsibModel:
    """Stand-in SSL encoder -> DiffKM -> per-language CTC head"""

    def __init__(self, spec: ModelSpec):
        cfg = spec.model
        self.spec = spec
        self.encoder: Stack = mlp(
            spec.feat_dim, cfg.hidden, spec.feat_dim, depth=cfg.encoder_layers, context=cfg.context
        )
        self.quantizer = DiffKM(cfg.tau, cfg.codebook_size, spec.feat_dim)
        self.relaxed_quantizer = SoftKMeans(cfg.tau, cfg.codebook_size, spec.feat_dim)
        self.heads: Dict[Lang, Stack] = {
            Lang.L1: mlp(spec.feat_dim, cfg.head_hidden, spec.vocab_l1 + 1, depth=2, context=cfg.head_context),
            Lang.L2: mlp(spec.feat_dim, cfg.head_hidden, spec.vocab_l2 + 1, depth=2, context=cfg.head_context),
        }

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Canonical parameter order and shapes"""
        shapes: Dict[str, Tuple[int, ...]] = {}
        shapes.update(prefixed(self.encoder.param_shapes(), ENCODER))
        shapes[CODEBOOK] = (self.spec.model.codebook_size, self.spec.feat_dim)
        for lang in Lang:
            shapes.update(prefixed(self.heads[lang].param_shapes(), HEADS[lang]))
        return shapes

    def init_params(self, seed: int) -> ParamSet:
        """Encoder and head weights; the codebook is fitted separately"""
        params: ParamSet = {}
        params.update(prefixed(self.encoder.init_params(derive_rng(seed, ENCODER)), ENCODER))
        for lang in Lang:
            params.update(prefixed(self.heads[lang].init_params(derive_rng(seed, HEADS[lang])), HEADS[lang]))
        return params

    def ordered(self, params: Mapping[str, np.ndarray]) -> ParamSet:
        """params rearranged into canonical order (codebook included when present)"""
        return {name: params[name] for name in self.param_shapes() if name in params}

    def _check_features(self, features: np.ndarray) -> None:
        if features.ndim != 2 or features.shape[1] != self.spec.feat_dim:
            raise InvalidInputError(
                f"features must be T x {self.spec.feat_dim}, got shape {features.shape}"
            )

    def encode(
        self, features: np.ndarray, params: Mapping[str, np.ndarray], lengths: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, Dict[str, Any]]:
        """SSL stand-in: frame features -> D-dim representations"""
        self._check_features(features)
        return self.encoder.forward(_packed(features, lengths), scoped(params, ENCODER))

    def quantize(
        self, H: np.ndarray, params: Mapping[str, np.ndarray], relaxed: bool = False
    ) -> Tuple[np.ndarray, Dict[str, Any]]:
        """DiffKM embeddings (hard forward) or the soft-path embeddings when relaxed"""
        layer = self.relaxed_quantizer if relaxed else self.quantizer
        return layer.forward([H], {CENTROIDS: params[CODEBOOK]})

    def embed(self, features: np.ndarray, params: Mapping[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """Hard tokens and emitted embeddings of one utterance"""
        H, _ = self.encode(features, params)
        embeddings, ctx = self.quantize(H, params)
        return ctx["tokens"], embeddings

    def head_forward(
        self,
        embeddings: np.ndarray,
        lang: Lang,
        params: Mapping[str, np.ndarray],
        lengths: Optional[np.ndarray] = None,
    ) -> Tuple[np.ndarray, Dict[str, Any]]:
        return self.heads[lang].forward(_packed(embeddings, lengths), scoped(params, HEADS[lang]))

    def forward_branch(
        self,
        features: Optional[np.ndarray],
        lang: Any,
        params: Mapping[str, np.ndarray],
        relaxed: bool = False,
        cached: Optional[Tuple[np.ndarray, np.ndarray]] = None,
        lengths: Optional[np.ndarray] = None,
    ) -> BranchTrace:
        """
        logits = head_lang(DiffKM(encoder(X)))

        Args:
            features: T x D frames (several utterances back to back when lengths is given)
            lang: 'l1' or 'l2'
            params: full parameter set
            relaxed: feed the soft-path embedding forward (gradient verification)
            cached: precomputed (tokens, embeddings) when encoder and codebook are frozen
            lengths: frame counts of the packed utterances
        """
        lang = parse_lang(lang)
        encoder_ctx = quant_ctx = None
        if cached is not None:
            tokens, embeddings = cached
        else:
            if features is None:
                raise InvalidInputError("forward_branch needs features when nothing is cached")
            H, encoder_ctx = self.encode(features, params, lengths)
            embeddings, quant_ctx = self.quantize(H, params, relaxed=relaxed)
            tokens = quant_ctx["tokens"]
        logits, head_ctx = self.head_forward(embeddings, lang, params, lengths)
        return BranchTrace(lang, tokens, embeddings, logits, encoder_ctx, quant_ctx, head_ctx)

    def backward_branch(self, trace: BranchTrace, grad_logits: np.ndarray, frozen: bool = False) -> ParamSet:
        """Parameter gradients of one branch; shared parameters skipped when frozen"""
        head = self.heads[trace.lang].backward(trace.head_ctx, grad_logits)
        grads = prefixed(head.params, HEADS[trace.lang])
        if frozen or trace.quant_ctx is None:
            return grads
        quant = self.quantizer.backward(trace.quant_ctx, head.inputs[0])
        grads[CODEBOOK] = quant.params[CENTROIDS]
        encoder = self.encoder.backward(trace.encoder_ctx, quant.inputs[0])
        grads.update(prefixed(encoder.params, ENCODER))
        return grads

    def utterance_loss(
        self,
        utt: Utterance,
        lang: Lang,
        params: Mapping[str, np.ndarray],
        frozen: bool = False,
        relaxed: bool = False,
        cached: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    ) -> Tuple[float, ParamSet]:
        """CTC nll of one utterance and its parameter gradients"""
        trace = self.forward_branch(utt.features, lang, params, relaxed=relaxed, cached=cached)
        nll, grad_logits = ctc_loss(trace.logits, utt.labels)
        return nll, self.backward_branch(trace, grad_logits, frozen=frozen)

    def branch_loss(
        self,
        batch: Sequence[Utterance],
        lang: Lang,
        params: Mapping[str, np.ndarray],
        frozen: bool = False,
        workers: int = 1,
        cache: Optional[EmbeddingCache] = None,
    ) -> Tuple[float, ParamSet]:
        """
        Mean nll over a batch and the matching mean gradients

        The batch runs through the network packed into one frame matrix; CTC
        is split into contiguous chunks when workers > 1. The result does not
        depend on the number of workers.
        """
        if not batch:
            return 0.0, {}
        lang = parse_lang(lang)
        lengths = np.array([utt.frames for utt in batch], dtype=np.int64)
        entries = [cache.get(cache_key(lang, utt.uid)) for utt in batch] if cache is not None else []
        cached = None
        features = None
        if entries and all(entry is not None for entry in entries):
            cached = (
                np.concatenate([tokens for tokens, _ in entries]),
                np.concatenate([embeddings for _, embeddings in entries], axis=0),
            )
        else:
            features = np.concatenate([utt.features for utt in batch], axis=0)
        trace = self.forward_branch(features, lang, params, cached=cached, lengths=lengths)

        pairs = list(zip(np.split(trace.logits, np.cumsum(lengths)[:-1]), (utt.labels for utt in batch)))
        chunks = [chunk for chunk in np.array_split(np.arange(len(pairs)), max(1, workers)) if chunk.size]
        if len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                results = list(pool.map(lambda chunk: ctc_losses([pairs[i] for i in chunk]), chunks))
        else:
            results = [ctc_losses(pairs)]
        nlls = np.concatenate([losses for losses, _ in results])
        grad_logits = np.concatenate([grad for _, grads in results for grad in grads], axis=0)

        scale = 1.0 / len(batch)
        grads = self.backward_branch(trace, grad_logits * np.asarray(scale, dtype=grad_logits.dtype), frozen=frozen)
        return float(np.sum(nlls)) * scale, grads


def multitask_loss(
    model: IsibModel,
    batch_l1: Sequence[Utterance],
    batch_l2: Sequence[Utterance],
    alpha: float,
    params: Mapping[str, np.ndarray],
    frozen: bool = False,
    step: int = 0,
    workers: int = 1,
    cache: Optional[EmbeddingCache] = None,
) -> Tuple[LossReport, ParamSet]:
    """
    (1 - alpha) * L_asr-l2 + alpha * L_asr-l1 and its gradient for every parameter

    Each side's loss is the mean per-utterance CTC nll of its batch. Gradients
    of frozen (shared) parameters are zero. A side with weight zero may be
    given an empty batch. Cache entries are looked up by cache_key(lang, uid).

    Raises:
        InvalidInputError: alpha outside [0, 1] or a weighted side has no batch
        NumericError: the combined loss is not finite
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha > 0.0 and not batch_l1:
        raise InvalidInputError("alpha > 0 needs a non-empty L1 batch")
    if alpha < 1.0 and not batch_l2:
        raise InvalidInputError("alpha < 1 needs a non-empty L2 batch")

    loss_l1, grads_l1 = model.branch_loss(batch_l1, Lang.L1, params, frozen, workers, cache)
    loss_l2, grads_l2 = model.branch_loss(batch_l2, Lang.L2, params, frozen, workers, cache)
    total = combine_losses(loss_l1, loss_l2, alpha)
    if not np.isfinite(total):
        raise NumericError(f"non-finite multi-task loss {total}", step=step)

    grads: ParamSet = {name: np.zeros_like(value) for name, value in params.items()}
    for weight, branch in ((alpha, grads_l1), (1.0 - alpha, grads_l2)):
        if weight == 0.0:
            continue
        for name, grad in branch.items():
            grads[name] += (weight * grad).astype(grads[name].dtype, copy=False)
    report = LossReport(total=total, loss_l1=loss_l1, loss_l2=loss_l2, alpha=alpha, step=step)
    return report, grads


ProgressFn = Callable[[LossReport], None]
