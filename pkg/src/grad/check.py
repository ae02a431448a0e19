"""
Finite-difference verification of layer gradients
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from src.core.errors import InvalidInputError, NumericError
from src.core.logger import get_logger
from src.core.rng import make_rng
from src.grad.layers import Layer

logger = get_logger(__name__)

PROBE_BOUND = 3.0


@dataclass
class GradientProbe:
    """Inputs and parameters at which a layer's gradients are checked"""

    inputs: List[np.ndarray]
    params: Dict[str, np.ndarray] = field(default_factory=dict)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """|a - b| / max(|a|, |b|, 1e-8) over vector norms"""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / denom)


def numeric_gradient(objective: Callable[[], float], array: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of objective w.r.t. every entry of array (perturbed in place)"""
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        upper = objective()
        flat[i] = original - eps
        lower = objective()
        flat[i] = original
        grad.reshape(-1)[i] = (upper - lower) / (2.0 * eps)
    return grad


def _is_float(array: np.ndarray) -> bool:
    return np.issubdtype(np.asarray(array).dtype, np.floating)


def check_gradients(layer: Layer, probe: GradientProbe, eps: float = 1e-3, seed: int = 0) -> float:
    """
    Compare a layer's backward against central finite differences

    The scalar objective is a random projection sum(r * forward(...)). Every
    floating-point input and parameter is checked in float64; integer inputs
    (token ids) are skipped.

    Returns:
        Worst relative error over all checked inputs and parameters

    Raises:
        InvalidInputError: eps outside [1e-4, 1e-2] or probe values outside [-3, 3]
        NumericError: forward produced non-finite values
    """
    if not 1e-4 <= eps <= 1e-2:
        raise InvalidInputError(f"eps must lie in [1e-4, 1e-2], got {eps}")

    inputs = [np.array(x, dtype=np.float64) if _is_float(x) else np.array(x) for x in probe.inputs]
    params = {k: np.array(v, dtype=np.float64) for k, v in probe.params.items()}
    for array in [x for x in inputs if _is_float(x)] + list(params.values()):
        if array.size and np.abs(array).max() > PROBE_BOUND:
            raise InvalidInputError(f"probe values must lie in [-{PROBE_BOUND}, {PROBE_BOUND}]")

    output, ctx = layer.forward(inputs, params)
    if not np.all(np.isfinite(output)):
        raise NumericError(f"{type(layer).__name__}.forward produced non-finite output at the probe")

    projection = make_rng(seed).standard_normal(output.shape)
    grads = layer.backward(ctx, projection.copy())

    def objective() -> float:
        return float(np.sum(projection * layer(inputs, params)))

    worst = 0.0
    for i, x in enumerate(inputs):
        if not _is_float(x):
            continue
        err = relative_error(grads.inputs[i], numeric_gradient(objective, x, eps))
        logger.debug(f"{type(layer).__name__} input[{i}] relative error {err:.3e}")
        worst = max(worst, err)
    for name, value in params.items():
        err = relative_error(grads.params[name], numeric_gradient(objective, value, eps))
        logger.debug(f"{type(layer).__name__} param {name} relative error {err:.3e}")
        worst = max(worst, err)
    return worst
