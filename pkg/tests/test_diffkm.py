import numpy as np
import pytest

from src.core.errors import InvalidInputError
from src.grad.check import GradientProbe, check_gradients
from src.quant.diffkm import CENTROIDS, DiffKM, SoftKMeans, diffkm_backward, diffkm_forward
from src.quant.kmeans import Codebook, assign_hard


def test_single_centroid_is_exact(rng):
    codebook = Codebook(rng.standard_normal((1, 3)))
    out = diffkm_forward(rng.standard_normal((4, 3)).astype(np.float32), codebook)
    assert np.all(out.soft.weights == 1.0)
    assert np.array_equal(out.embeddings, np.repeat(codebook.centroids, 4, axis=0))
    assert not out.tokens.any()


def test_equidistant_frame_splits_evenly():
    codebook = Codebook(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    out = diffkm_forward(np.array([[0.0, 2.0]], dtype=np.float32), codebook)
    assert np.allclose(out.soft.weights, [[0.5, 0.5]])
    assert out.tokens.tolist() == [0]


def test_small_temperature_hardens(rng):
    codebook = Codebook(rng.standard_normal((5, 3)))
    H = rng.standard_normal((40, 3))
    gaps = np.diff(np.sort(((H[:, None, :] - codebook.centroids[None]) ** 2).sum(-1), axis=1)[:, :2], axis=1)[:, 0]
    H = H[gaps > 0.01]
    out = diffkm_forward(H, codebook, tau=1e-4)
    assert out.soft.weights.max(axis=1).min() >= 1 - 1e-6


def test_rows_sum_to_one_and_tokens_agree(rng):
    codebook = Codebook(rng.standard_normal((7, 4)))
    H = rng.standard_normal((30, 4)).astype(np.float32) * 3
    out = diffkm_forward(H, codebook, tau=0.5)
    assert np.all(np.abs(out.soft.weights.sum(axis=1, dtype=np.float64) - 1.0) <= 1e-6)
    assert np.all(out.soft.weights >= 0)
    assert out.tokens.tolist() == [assign_hard(h, codebook) for h in H]
    assert np.array_equal(out.tokens, out.soft.tokens)


def test_mean_max_weight_grows_as_temperature_drops(rng):
    codebook = Codebook(rng.standard_normal((6, 3)))
    H = rng.standard_normal((50, 3))
    sharpness = [diffkm_forward(H, codebook, tau).soft.weights.max(axis=1).mean() for tau in (1.0, 0.1, 0.01)]
    assert sharpness[0] <= sharpness[1] <= sharpness[2]


def test_non_positive_temperature():
    with pytest.raises(InvalidInputError):
        diffkm_forward(np.zeros((1, 2)), Codebook(np.zeros((1, 2))), tau=0.0)


def test_zero_output_gradient(rng):
    out = diffkm_forward(rng.standard_normal((4, 3)), Codebook(rng.standard_normal((3, 3))))
    grad_H, grad_M = diffkm_backward(out.context, np.zeros((4, 3)))
    assert not grad_H.any() and not grad_M.any()


def test_straight_through_contract(rng):
    H = rng.standard_normal((6, 3)).astype(np.float32)
    M = rng.standard_normal((4, 3)).astype(np.float32)
    G = rng.standard_normal((6, 3)).astype(np.float32)
    hard, hard_ctx = DiffKM(1.0, 4, 3).forward([H], {CENTROIDS: M})
    _, soft_ctx = SoftKMeans(1.0, 4, 3).forward([H], {CENTROIDS: M})

    assert hard.tobytes() == M[hard_ctx["tokens"]].tobytes()
    st = DiffKM(1.0, 4, 3).backward(hard_ctx, G)
    soft = SoftKMeans(1.0, 4, 3).backward(soft_ctx, G)
    assert st.inputs[0].tobytes() == soft.inputs[0].tobytes()
    assert st.params[CENTROIDS].tobytes() == soft.params[CENTROIDS].tobytes()


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("tau", [1.0, 0.5])
def test_soft_path_gradients(seed, tau):
    rng = np.random.default_rng(seed)
    probe = GradientProbe([rng.uniform(-2, 2, (5, 3))], {CENTROIDS: rng.uniform(-2, 2, (4, 3))})
    assert check_gradients(SoftKMeans(tau, 4, 3), probe, seed=seed) <= 1e-3
