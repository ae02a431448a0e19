"""
CTC loss with forward-backward in log space, and best-path decoding

Blank is id 0 everywhere; labels of an alphabet of size V are 1..V and the
logits matrix has V + 1 columns. batch_ctc_loss runs the recursions for a
whole padded batch at once; every utterance's result is independent of the
others in its batch.
"""

from typing import List, Sequence, Tuple

import numpy as np

from src.core.errors import ContractViolation, InfeasibleTargetError, InvalidInputError, NumericError
from src.grad.layers import log_softmax

BLANK = 0


def as_labels(target: Sequence[int]) -> np.ndarray:
    """Validate a label sequence (no blanks) and return it as an int array"""
    labels = np.asarray(target, dtype=np.int64).reshape(-1)
    if labels.size and labels.min() <= BLANK:
        raise InvalidInputError("labels must be >= 1; 0 is reserved for blank")
    return labels


def min_frames(target: Sequence[int]) -> int:
    """Fewest frames that can emit target: L plus one blank per adjacent repeat"""
    labels = as_labels(target)
    repeats = int(np.sum(labels[1:] == labels[:-1])) if labels.size > 1 else 0
    return int(labels.size) + repeats


def _extend(labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Blank-interleaved label sequence and its skip-transition mask"""
    ext = np.full(2 * labels.size + 1, BLANK, dtype=np.int64)
    ext[1::2] = labels
    skip = np.zeros(ext.size, dtype=bool)
    if ext.size > 2:
        skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return ext, skip


def _shift(row: np.ndarray, by: int) -> np.ndarray:
    """row[..., s - by] at position s; -inf where that falls off the front"""
    out = np.full_like(row, -np.inf)
    out[..., by:] = row[..., :-by]
    return out


def _shift_back(row: np.ndarray, by: int) -> np.ndarray:
    """row[..., s + by] at position s; -inf where that falls off the end"""
    out = np.full_like(row, -np.inf)
    out[..., :-by] = row[..., by:]
    return out


def _validate(logits: np.ndarray, target: Sequence[int]) -> np.ndarray:
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ContractViolation(f"logits must be T x (V+1) with V >= 1, got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise NumericError("CTC logits contain non-finite values")
    labels = as_labels(target)
    if labels.size and labels.max() >= logits.shape[1]:
        raise InvalidInputError(f"label {labels.max()} outside alphabet of size {logits.shape[1] - 1}")
    required = max(min_frames(labels), 1)
    if logits.shape[0] < required:
        raise InfeasibleTargetError(labels.size, required, logits.shape[0])
    return labels


def ctc_loss(logits: np.ndarray, target: Sequence[int]) -> Tuple[float, np.ndarray]:
    """
    Negative log-likelihood of target under per-frame softmax of logits

    Returns:
        (nll, gradient of nll w.r.t. logits) with the gradient in logits' dtype

    Raises:
        InfeasibleTargetError: target needs more frames than logits has
        NumericError: logits contain non-finite values
    """
    labels = _validate(logits, target)
    frames = logits.shape[0]
    logp = log_softmax(logits.astype(np.float64))
    ext, skip = _extend(labels)
    states = ext.size
    emit = logp[:, ext]

    alpha = np.full((frames, states), -np.inf)
    alpha[0, 0] = emit[0, 0]
    if states > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, frames):
        prev = alpha[t - 1]
        acc = np.logaddexp(prev, _shift(prev, 1))
        if states > 2:
            acc = np.where(skip, np.logaddexp(acc, _shift(prev, 2)), acc)
        alpha[t] = acc + emit[t]

    # beta[t, s]: log mass of completing from state s at t, excluding frame t's emission
    beta = np.full((frames, states), -np.inf)
    beta[frames - 1, states - 1] = 0.0
    if states > 1:
        beta[frames - 1, states - 2] = 0.0
    skip_from = np.zeros(states, dtype=bool)
    skip_from[:-2] = skip[2:]
    for t in range(frames - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        acc = np.logaddexp(nxt, _shift_back(nxt, 1))
        if states > 2:
            acc = np.where(skip_from, np.logaddexp(acc, _shift_back(nxt, 2)), acc)
        beta[t] = acc

    log_likelihood = float(np.logaddexp(alpha[-1, -1], alpha[-1, -2]) if states > 1 else alpha[-1, -1])
    if not np.isfinite(log_likelihood):
        raise NumericError("CTC likelihood underflowed to zero")

    occupancy = np.exp(alpha + beta - log_likelihood)
    posterior = np.zeros_like(logp)
    for s in range(states):
        posterior[:, ext[s]] += occupancy[:, s]
    grad = np.exp(logp) - posterior
    return max(-log_likelihood, 0.0), grad.astype(logits.dtype, copy=False)


def ctc_losses(pairs: Sequence[Tuple[np.ndarray, Sequence[int]]]) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Per-utterance nll and unscaled logit gradients for a batch, computed jointly

    Utterances are padded to the longest one; padded frames and states are
    masked out of every result. All logits must share their column count.
    """
    if not pairs:
        return np.zeros(0), []
    labels = [_validate(logits, target) for logits, target in pairs]
    classes = {logits.shape[1] for logits, _ in pairs}
    if len(classes) != 1:
        raise ContractViolation(f"batched logits must share their column count, got {sorted(classes)}")

    batch = len(pairs)
    rows = np.arange(batch)
    frames = np.array([logits.shape[0] for logits, _ in pairs])
    states = 2 * np.array([lab.size for lab in labels]) + 1
    T, S, C = int(frames.max()), int(states.max()), classes.pop()

    logp = np.zeros((batch, T, C))
    ext = np.full((batch, S), BLANK, dtype=np.int64)
    skip = np.zeros((batch, S), dtype=bool)
    for b, ((logits, _), lab) in enumerate(zip(pairs, labels)):
        logp[b, : frames[b]] = log_softmax(logits.astype(np.float64))
        ext[b, : states[b]], skip[b, : states[b]] = _extend(lab)

    valid_state = np.arange(S)[None, :] < states[:, None]
    emit = np.where(valid_state[:, None, :], np.take_along_axis(logp, ext[:, None, :], axis=2), -np.inf)

    alpha = np.full((batch, T, S), -np.inf)
    alpha[:, 0, 0] = emit[:, 0, 0]
    if S > 1:
        alpha[:, 0, 1] = emit[:, 0, 1]
    for t in range(1, T):
        prev = alpha[:, t - 1]
        acc = np.logaddexp(prev, _shift(prev, 1))
        if S > 2:
            acc = np.where(skip, np.logaddexp(acc, _shift(prev, 2)), acc)
        alpha[:, t] = acc + emit[:, t]

    # each utterance's beta starts at its own last frame; later frames are padding
    last = frames - 1
    start = np.full((batch, S), -np.inf)
    start[rows, states - 1] = 0.0
    two = states > 1
    start[rows[two], states[two] - 2] = 0.0
    skip_from = np.zeros((batch, S), dtype=bool)
    skip_from[:, :-2] = skip[:, 2:]
    beta = np.full((batch, T, S), -np.inf)
    for t in range(T - 1, -1, -1):
        if t < T - 1:
            nxt = beta[:, t + 1] + emit[:, t + 1]
            acc = np.logaddexp(nxt, _shift_back(nxt, 1))
            if S > 2:
                acc = np.where(skip_from, np.logaddexp(acc, _shift_back(nxt, 2)), acc)
        else:
            acc = np.full((batch, S), -np.inf)
        beta[:, t] = np.where((last == t)[:, None], start, acc)

    final = alpha[rows, last]
    log_likelihood = final[rows, states - 1]
    log_likelihood[two] = np.logaddexp(log_likelihood[two], final[rows[two], states[two] - 2])
    if not np.all(np.isfinite(log_likelihood)):
        raise NumericError("CTC likelihood underflowed to zero")

    live = (np.arange(T)[None, :] < frames[:, None])[:, :, None] & valid_state[:, None, :]
    occupancy = np.exp(np.where(live, alpha + beta - log_likelihood[:, None, None], -np.inf))
    posterior = np.zeros_like(logp)
    for s in range(S):
        posterior[rows, :, ext[:, s]] += occupancy[:, :, s]
    grads = [
        (np.exp(logp[b, : frames[b]]) - posterior[b, : frames[b]]).astype(pairs[b][0].dtype, copy=False)
        for b in range(batch)
    ]
    return np.maximum(-log_likelihood, 0.0), grads


def batch_ctc_loss(pairs: Sequence[Tuple[np.ndarray, Sequence[int]]]) -> Tuple[float, List[np.ndarray]]:
    """Mean per-utterance nll over a batch; gradients are scaled to match the mean"""
    if not pairs:
        return 0.0, []
    losses, grads = ctc_losses(pairs)
    scale = 1.0 / len(pairs)
    return float(np.mean(losses)), [g * scale for g in grads]


def collapse(path: Sequence[int]) -> List[int]:
    """Merge adjacent repeats, then drop blanks"""
    out: List[int] = []
    previous = None
    for symbol in path:
        symbol = int(symbol)
        if symbol != previous and symbol != BLANK:
            out.append(symbol)
        previous = symbol
    return out


def greedy_decode(logits: np.ndarray) -> List[int]:
    """Best-path decoding: per-frame argmax, collapse repeats, remove blanks"""
    if logits.ndim != 2:
        raise ContractViolation(f"logits must be 2-D, got shape {logits.shape}")
    return collapse(np.argmax(logits, axis=1))
