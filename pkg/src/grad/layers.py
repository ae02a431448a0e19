"""
Layer contract and the differentiable building blocks of the model

A layer maps its inputs and parameters to one output and saves a context;
backward consumes exactly that context together with the gradient of a
scalar objective w.r.t. the output and returns vector-Jacobian products for
every input and parameter. Layers keep no state between calls, so one
instance can serve concurrent forwards.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ContractViolation

Context = Dict[str, Any]
Params = Mapping[str, np.ndarray]

FLOAT = np.float32


@dataclass
class Gradients:
    """Vector-Jacobian products returned by Layer.backward"""

    inputs: List[Optional[np.ndarray]]
    params: Dict[str, np.ndarray] = field(default_factory=dict)


class Layer(ABC):
    """Forward / backward contract shared by every differentiable op"""

    # layers that look across frames receive the segment lengths of a packed batch
    takes_segments: bool = False

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Shapes of the parameters this layer expects"""
        return {}

    def init_params(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        """Fresh parameters drawn from rng"""
        return {}

    @abstractmethod
    def forward(self, inputs: Sequence[np.ndarray], params: Params) -> Tuple[np.ndarray, Context]:
        """Compute the output and the context backward will need"""

    @abstractmethod
    def backward(self, ctx: Context, grad_output: np.ndarray) -> Gradients:
        """Propagate grad_output back to inputs and parameters"""

    def __call__(self, inputs: Sequence[np.ndarray], params: Params) -> np.ndarray:
        output, _ = self.forward(inputs, params)
        return output


def _require_matrix(name: str, array: np.ndarray, width: Optional[int] = None) -> None:
    if array.ndim != 2:
        raise ContractViolation(f"{name} must be 2-D, got shape {array.shape}")
    if width is not None and array.shape[1] != width:
        raise ContractViolation(f"{name} must have {width} columns, got shape {array.shape}")


class Identity(Layer):
    """Passes its input through unchanged"""

    def forward(self, inputs, params):
        (x,) = inputs
        return x.copy(), {}

    def backward(self, ctx, grad_output):
        return Gradients(inputs=[grad_output.copy()])


class Affine(Layer):
    """out = x @ W + b"""

    def __init__(self, in_dim: int, out_dim: int):
        self.in_dim = in_dim
        self.out_dim = out_dim

    def param_shapes(self):
        return {"W": (self.in_dim, self.out_dim), "b": (self.out_dim,)}

    def init_params(self, rng):
        scale = np.sqrt(2.0 / self.in_dim)
        return {
            "W": (rng.standard_normal((self.in_dim, self.out_dim)) * scale).astype(FLOAT),
            "b": np.zeros(self.out_dim, dtype=FLOAT),
        }

    def forward(self, inputs, params):
        (x,) = inputs
        W, b = params["W"], params["b"]
        _require_matrix("affine input", x)
        if W.ndim != 2 or b.ndim != 1:
            raise ContractViolation(f"affine expects W 2-D and b 1-D, got {W.shape} and {b.shape}")
        if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
            raise ContractViolation(
                f"affine shapes do not conform: input {x.shape}, W {W.shape}, b {b.shape}"
            )
        return x @ W + b, {"x": x, "W": W}

    def backward(self, ctx, grad_output):
        x, W = ctx["x"], ctx["W"]
        return Gradients(
            inputs=[grad_output @ W.T],
            params={"W": x.T @ grad_output, "b": grad_output.sum(axis=0)},
        )


class ReLU(Layer):
    """Elementwise max(0, x); the subgradient at 0 is 0"""

    def forward(self, inputs, params):
        (x,) = inputs
        return np.maximum(x, 0), {"mask": x > 0}

    def backward(self, ctx, grad_output):
        return Gradients(inputs=[grad_output * ctx["mask"]])


def log_softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise log softmax with max subtraction"""
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class LogSoftmax(Layer):
    """Row-wise log softmax over an N x C matrix"""

    def forward(self, inputs, params):
        (x,) = inputs
        _require_matrix("log_softmax input", x)
        if x.shape[1] < 1:
            raise ContractViolation("log_softmax needs at least one column")
        out = log_softmax(x)
        return out, {"out": out}

    def backward(self, ctx, grad_output):
        probs = np.exp(ctx["out"])
        return Gradients(
            inputs=[grad_output - probs * grad_output.sum(axis=1, keepdims=True)]
        )


def window_indices(frames: int, radius: int) -> np.ndarray:
    """T x (2c+1) source frame indices with edges replicated"""
    offsets = np.arange(-radius, radius + 1)
    return np.clip(np.arange(frames)[:, None] + offsets[None, :], 0, frames - 1)


def segment_window_indices(lengths: np.ndarray, radius: int) -> np.ndarray:
    """window_indices for back-to-back segments; edges are replicated per segment"""
    lengths = np.asarray(lengths, dtype=np.int64)
    ends = np.cumsum(lengths)
    first = np.repeat(ends - lengths, lengths)
    final = np.repeat(ends - 1, lengths)
    offsets = np.arange(-radius, radius + 1)
    return np.clip(np.arange(ends[-1])[:, None] + offsets[None, :], first[:, None], final[:, None])


class ContextWindow(Layer):
    """
    Stacks frames t-c..t+c into one row per frame

    An optional second input holds the lengths of utterances packed back to
    back; windows then never reach across an utterance boundary.
    """

    takes_segments = True

    def __init__(self, radius: int):
        self.radius = radius

    def forward(self, inputs, params):
        x = inputs[0]
        lengths = inputs[1] if len(inputs) > 1 else None
        _require_matrix("context window input", x)
        frames, dim = x.shape
        if frames == 0:
            raise ContractViolation("context window needs at least one frame")
        if lengths is None:
            idx = window_indices(frames, self.radius)
        else:
            lengths = np.asarray(lengths)
            if lengths.ndim != 1 or lengths.size == 0 or lengths.min() < 1 or lengths.sum() != frames:
                raise ContractViolation(f"segment lengths must be positive and sum to {frames} frames")
            idx = segment_window_indices(lengths, self.radius)
        ctx = {"idx": idx, "shape": x.shape, "segmented": lengths is not None}
        return x[idx].reshape(frames, idx.shape[1] * dim), ctx

    def backward(self, ctx, grad_output):
        idx, (frames, dim) = ctx["idx"], ctx["shape"]
        flat_idx, flat_grad = idx.ravel(), grad_output.reshape(-1, dim)
        grad = np.stack(
            [np.bincount(flat_idx, weights=flat_grad[:, d], minlength=frames) for d in range(dim)], axis=1
        ).astype(grad_output.dtype, copy=False)
        return Gradients(inputs=[grad, None] if ctx["segmented"] else [grad])


class Embedding(Layer):
    """Looks up rows of a K x D table for integer ids"""

    def __init__(self, num_embeddings: int, dim: int):
        self.num_embeddings = num_embeddings
        self.dim = dim

    def param_shapes(self):
        return {"table": (self.num_embeddings, self.dim)}

    def init_params(self, rng):
        return {"table": rng.standard_normal((self.num_embeddings, self.dim)).astype(FLOAT)}

    def forward(self, inputs, params):
        (ids,) = inputs
        table = params["table"]
        ids = np.asarray(ids)
        if ids.ndim != 1 or not np.issubdtype(ids.dtype, np.integer):
            raise ContractViolation(f"embedding ids must be a 1-D integer array, got {ids.dtype} {ids.shape}")
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise ContractViolation(f"embedding ids must lie in [0, {table.shape[0]})")
        return table[ids], {"ids": ids, "rows": table.shape[0]}

    def backward(self, ctx, grad_output):
        grad = np.zeros((ctx["rows"], grad_output.shape[1]), dtype=grad_output.dtype)
        np.add.at(grad, ctx["ids"], grad_output)
        return Gradients(inputs=[None], params={"table": grad})


class Stack(Layer):
    """
    Sequential composition; parameters are namespaced '<index>.<name>'

    A second input (segment lengths of a packed batch) is handed to every
    layer that takes segments.
    """

    takes_segments = True

    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)

    @staticmethod
    def _scoped(index: int, params: Params) -> Dict[str, np.ndarray]:
        prefix = f"{index}."
        return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}

    def param_shapes(self):
        shapes = {}
        for i, layer in enumerate(self.layers):
            for name, shape in layer.param_shapes().items():
                shapes[f"{i}.{name}"] = shape
        return shapes

    def init_params(self, rng):
        params = {}
        for i, layer in enumerate(self.layers):
            for name, value in layer.init_params(rng).items():
                params[f"{i}.{name}"] = value
        return params

    def forward(self, inputs, params):
        contexts = []
        x = inputs[0]
        lengths = inputs[1] if len(inputs) > 1 else None
        for i, layer in enumerate(self.layers):
            layer_inputs = [x, lengths] if lengths is not None and layer.takes_segments else [x]
            x, ctx = layer.forward(layer_inputs, self._scoped(i, params))
            contexts.append(ctx)
        return x, {"contexts": contexts, "segmented": lengths is not None}

    def backward(self, ctx, grad_output):
        grad = grad_output
        param_grads: Dict[str, np.ndarray] = {}
        for i in reversed(range(len(self.layers))):
            result = self.layers[i].backward(ctx["contexts"][i], grad)
            for name, value in result.params.items():
                param_grads[f"{i}.{name}"] = value
            grad = result.inputs[0]
            if grad is None:
                break
        return Gradients(inputs=[grad, None] if ctx.get("segmented") else [grad], params=param_grads)


def mlp(in_dim: int, hidden: int, out_dim: int, depth: int = 2, context: int = 0) -> Stack:
    """Context window followed by affine+relu blocks and a final affine"""
    layers: List[Layer] = []
    width = in_dim
    if context > 0:
        layers.append(ContextWindow(context))
        width = in_dim * (2 * context + 1)
    for _ in range(depth - 1):
        layers.extend([Affine(width, hidden), ReLU()])
        width = hidden
    layers.append(Affine(width, out_dim))
    return Stack(layers)
