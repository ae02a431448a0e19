"""
Differentiable k-means tokenization layer

Soft assignment is a softmax over negative squared distances scaled by a
temperature tau. The emitted embedding of each frame is its hard centroid;
gradients follow the soft-path embedding e_t = sum_j soft[t, j] * m_j
(straight-through), so both the features and the centroids are trained.
"""

from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
from scipy.special import softmax

from src.core.errors import ContractViolation, InvalidInputError
from src.grad.layers import Context, Gradients, Layer
from src.quant.kmeans import Codebook, nearest, squared_distances

CENTROIDS = "centroids"


@dataclass
class SoftAssignment:
    """T x K assignment weights at temperature tau; rows sum to one"""

    weights: np.ndarray
    temperature: float

    @property
    def tokens(self) -> np.ndarray:
        return np.argmax(self.weights, axis=1)


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise InvalidInputError(f"temperature must be positive, got {tau}")


class SoftKMeans(Layer):
    """Emits the soft-path embedding; the relaxed form of DiffKM"""

    def __init__(self, tau: float = 1.0, num_centroids: int = 0, dim: int = 0):
        _check_tau(tau)
        self.tau = tau
        self.num_centroids = num_centroids
        self.dim = dim

    def param_shapes(self):
        return {CENTROIDS: (self.num_centroids, self.dim)}

    def _assign(self, inputs, params) -> Context:
        (H,) = inputs
        M = params[CENTROIDS]
        if H.ndim != 2 or M.ndim != 2 or H.shape[1] != M.shape[1]:
            raise ContractViolation(f"DiffKM shapes do not conform: H {H.shape}, M {M.shape}")
        distances = squared_distances(H, M)
        soft = softmax(-distances / self.tau, axis=1).astype(H.dtype, copy=False)
        return {"H": H, "M": M, "soft": soft, "tokens": nearest(distances)}

    def forward(self, inputs, params):
        ctx = self._assign(inputs, params)
        return ctx["soft"] @ ctx["M"], ctx

    def backward(self, ctx, grad_output):
        H, M, soft = ctx["H"], ctx["M"], ctx["soft"]
        grad_soft = grad_output @ M.T
        grad_logits = soft * (grad_soft - np.sum(soft * grad_soft, axis=1, keepdims=True))
        grad_dist = -grad_logits / self.tau
        grad_H = 2.0 * (H * grad_dist.sum(axis=1, keepdims=True) - grad_dist @ M)
        grad_M = soft.T @ grad_output - 2.0 * (grad_dist.T @ H - grad_dist.sum(axis=0)[:, None] * M)
        return Gradients(inputs=[grad_H], params={CENTROIDS: grad_M})


class DiffKM(SoftKMeans):
    """Straight-through DiffKM: hard centroid forward, soft-path backward"""

    def forward(self, inputs, params):
        ctx = self._assign(inputs, params)
        return ctx["M"][ctx["tokens"]], ctx


@dataclass
class DiffKMOutput:
    """Tokens, emitted embeddings and soft assignment of one forward"""

    tokens: np.ndarray
    embeddings: np.ndarray
    soft: SoftAssignment
    context: Dict[str, Any]


def diffkm_forward(H: np.ndarray, codebook: Codebook, tau: float = 1.0) -> DiffKMOutput:
    """Quantize T x D features against the codebook"""
    _check_tau(tau)
    layer = DiffKM(tau, codebook.K, codebook.D)
    embeddings, ctx = layer.forward([H], {CENTROIDS: codebook.centroids})
    ctx["layer"] = layer
    return DiffKMOutput(
        tokens=ctx["tokens"],
        embeddings=embeddings,
        soft=SoftAssignment(ctx["soft"], tau),
        context=ctx,
    )


def diffkm_backward(context: Dict[str, Any], grad_embeddings: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. features H and centroids M along the soft path"""
    grads = context["layer"].backward(context, grad_embeddings)
    return grads.inputs[0], grads.params[CENTROIDS]
