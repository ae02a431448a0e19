import numpy as np
import pytest

from src.core.errors import ContractViolation, InvalidInputError, NumericError
from src.grad.check import GradientProbe, check_gradients, relative_error
from src.grad.layers import (
    Affine,
    ContextWindow,
    Embedding,
    Gradients,
    Identity,
    LogSoftmax,
    ReLU,
    Stack,
    log_softmax,
    mlp,
    segment_window_indices,
    window_indices,
)

TOL = 1e-3
SEEDS = range(10)


def _uniform(rng, shape, bound=2.0):
    return rng.uniform(-bound, bound, size=shape)


class TestAffine:
    def test_identity_weights(self):
        x = np.arange(6, dtype=np.float32).reshape(2, 3)
        out = Affine(3, 3)([x], {"W": np.eye(3, dtype=np.float32), "b": np.zeros(3, dtype=np.float32)})
        assert np.array_equal(out, x)

    def test_scalar_case(self):
        out = Affine(1, 1)([np.array([[2.0]])], {"W": np.array([[3.0]]), "b": np.array([1.0])})
        assert out.tolist() == [[7.0]]

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            Affine(3, 2)([np.zeros((4, 2))], {"W": np.zeros((3, 2)), "b": np.zeros(2)})

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        probe = GradientProbe([_uniform(rng, (4, 3))], {"W": _uniform(rng, (3, 2)), "b": _uniform(rng, 2)})
        assert check_gradients(Affine(3, 2), probe, eps=1e-3, seed=seed) <= TOL


class TestReLU:
    def test_values(self):
        assert ReLU()([np.array([[-1.0, 0.0, 2.0]])], {}).tolist() == [[0.0, 0.0, 2.0]]
        assert not ReLU()([-np.ones((2, 3))], {}).any()

    def test_subgradient_at_zero(self):
        _, ctx = ReLU().forward([np.zeros((1, 2))], {})
        assert not ReLU().backward(ctx, np.ones((1, 2))).inputs[0].any()

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_away_from_zero(self, seed):
        rng = np.random.default_rng(seed)
        x = _uniform(rng, (4, 5))
        x[np.abs(x) < 0.05] = 0.5
        assert check_gradients(ReLU(), GradientProbe([x]), seed=seed) <= TOL


class TestLogSoftmax:
    def test_uniform_row(self):
        out = log_softmax(np.zeros((1, 3)))
        assert np.allclose(out, -np.log(3.0))

    def test_no_overflow(self):
        out = log_softmax(np.array([[1000.0, 0.0]]))
        assert np.all(np.isfinite(out))
        assert out[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_rows_normalised(self, rng):
        x = rng.standard_normal((50, 7)) * 30
        assert np.all(np.abs(np.exp(log_softmax(x)).sum(axis=1) - 1.0) <= 1e-6)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        assert check_gradients(LogSoftmax(), GradientProbe([_uniform(rng, (2, 4))]), seed=seed) <= TOL


class TestContextWindow:
    def test_edge_replication(self):
        assert window_indices(3, 1).tolist() == [[0, 0, 1], [0, 1, 2], [1, 2, 2]]
        x = np.arange(3, dtype=np.float32).reshape(3, 1)
        assert ContextWindow(1)([x], {}).tolist() == [[0, 0, 1], [0, 1, 2], [1, 2, 2]]

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        assert check_gradients(ContextWindow(2), GradientProbe([_uniform(rng, (5, 3))]), seed=seed) <= TOL

    def test_packed_segments_match_separate_windows(self, rng):
        a, b = rng.standard_normal((4, 2)), rng.standard_normal((3, 2))
        layer = ContextWindow(2)
        packed = layer([np.concatenate([a, b]), np.array([4, 3])], {})
        assert np.array_equal(packed, np.concatenate([layer([a], {}), layer([b], {})]))
        assert segment_window_indices(np.array([2, 1]), 1).tolist() == [[0, 0, 1], [0, 1, 1], [2, 2, 2]]

    def test_segment_lengths_must_cover_input(self):
        with pytest.raises(ContractViolation):
            ContextWindow(1)([np.zeros((5, 2)), np.array([2, 2])], {})
        with pytest.raises(ContractViolation):
            ContextWindow(1)([np.zeros((2, 2)), np.array([2, 0])], {})

    @pytest.mark.parametrize("seed", SEEDS)
    def test_packed_gradients(self, seed):
        rng = np.random.default_rng(seed)
        probe = GradientProbe([_uniform(rng, (6, 3)), np.array([2, 1, 3])])
        assert check_gradients(ContextWindow(2), probe, seed=seed) <= TOL


class TestEmbedding:
    def test_lookup_and_range(self):
        table = np.arange(8, dtype=np.float32).reshape(4, 2)
        assert Embedding(4, 2)([np.array([3, 0])], {"table": table}).tolist() == [[6, 7], [0, 1]]
        with pytest.raises(ContractViolation):
            Embedding(4, 2)([np.array([4])], {"table": table})

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        probe = GradientProbe([rng.integers(0, 5, size=7)], {"table": _uniform(rng, (5, 3))})
        assert check_gradients(Embedding(5, 3), probe, seed=seed) <= TOL


class TestStack:
    def test_parameter_namespacing(self):
        net = mlp(3, 4, 2, depth=2, context=1)
        assert list(net.param_shapes()) == ["1.W", "1.b", "3.W", "3.b"]
        assert net.param_shapes()["1.W"] == (9, 4)

    def test_segments_reach_nested_context_windows(self, rng):
        net = mlp(3, 4, 2, depth=2, context=1)
        params = net.init_params(rng)
        a, b = rng.standard_normal((3, 3)), rng.standard_normal((4, 3))
        packed = net([np.concatenate([a, b]), np.array([3, 4])], params)
        assert np.allclose(packed, np.concatenate([net([a], params), net([b], params)]))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        net = Stack([Affine(3, 4), LogSoftmax()])
        probe = GradientProbe([_uniform(rng, (5, 3))], {"0.W": _uniform(rng, (3, 4)), "0.b": _uniform(rng, 4)})
        assert check_gradients(net, probe, seed=seed) <= TOL


class _Corrupted(Affine):
    def backward(self, ctx, grad_output):
        grads = super().backward(ctx, grad_output)
        return Gradients(
            inputs=[g * 1.01 for g in grads.inputs],
            params={k: v * 1.01 for k, v in grads.params.items()},
        )


class _Exploding(Identity):
    def forward(self, inputs, params):
        return np.full_like(inputs[0], np.inf), {}


class TestCheckGradients:
    def test_identity_is_exact(self, rng):
        assert check_gradients(Identity(), GradientProbe([_uniform(rng, (3, 4))])) <= 1e-10

    def test_detects_scaled_backward(self, rng):
        probe = GradientProbe([_uniform(rng, (4, 3))], {"W": _uniform(rng, (3, 2)), "b": _uniform(rng, 2)})
        assert check_gradients(_Corrupted(3, 2), probe) >= 5e-3

    def test_eps_and_probe_bounds(self, rng):
        probe = GradientProbe([_uniform(rng, (2, 2))])
        with pytest.raises(InvalidInputError):
            check_gradients(Identity(), probe, eps=1e-1)
        with pytest.raises(InvalidInputError):
            check_gradients(Identity(), GradientProbe([np.full((2, 2), 4.0)]))

    def test_non_finite_forward(self):
        with pytest.raises(NumericError):
            check_gradients(_Exploding(), GradientProbe([np.ones((2, 2))]))

    def test_relative_error_near_zero(self):
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
        assert relative_error(np.array([1.0]), np.array([1.0])) == 0.0


def test_forward_is_deterministic(rng):
    net = mlp(3, 8, 4, depth=3, context=2)
    params = net.init_params(np.random.default_rng(0))
    x = rng.standard_normal((6, 3)).astype(np.float32)
    assert net([x], params).tobytes() == net([x.copy()], params).tobytes()
