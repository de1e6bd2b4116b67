"""Unit tests for the tensor engine: primitives, tape and gradient checks."""

import math

import numpy as np
import pytest

from pemi.errors import DegenerateRowError, DimensionError, NumericalError, TapeError
from pemi.numcore import (
    Tape,
    Tensor,
    add,
    backward,
    check_gradients,
    cross_entropy,
    gather_rows,
    gelu,
    l1_normalize_rows,
    layer_norm,
    matmul,
    mul,
    precision,
    relative_error,
    reshape,
    row_softmax,
    scatter_matrix,
    scatter_rows,
    sum_all,
    transpose,
)

GRAD_TOLERANCE = 1e-4


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar readout with non-uniform weights so sum-invariant ops still have gradients."""
    return sum_all(mul(x, Tensor(weights)))


class TestTensor:
    """Test cases for tensor values."""

    def test_data_is_read_only(self):
        """Test that tensor values cannot be modified in place."""
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 5.0

    def test_input_is_copied(self):
        """Test that later changes to the source array do not leak into the tensor."""
        source = np.array([1.0, 2.0])
        t = Tensor(source)
        source[0] = 9.0
        assert t.data[0] == 1.0

    def test_non_finite_rejected(self):
        """Test that NaN and infinity are rejected at construction."""
        with pytest.raises(NumericalError):
            Tensor([1.0, np.nan])
        with pytest.raises(NumericalError):
            Tensor([np.inf])

    def test_default_dtype_is_float32(self):
        """Test that tensors store 32-bit floats by default."""
        assert Tensor([1.0]).dtype == np.float32

    def test_precision_context_restores_dtype(self):
        """Test that precision() switches the dtype only inside its block."""
        with precision(np.float64):
            assert Tensor([1.0]).dtype == np.float64
        assert Tensor([1.0]).dtype == np.float32

    def test_item_requires_single_element(self):
        """Test that item() rejects multi-element tensors."""
        assert Tensor([[3.0]]).item() == 3.0
        with pytest.raises(DimensionError):
            Tensor([1.0, 2.0]).item()

    def test_ops_outside_tape_do_not_track(self):
        """Test that results computed without an active tape need no gradient."""
        w = Tensor([1.0, 2.0], requires_grad=True, name="w")
        assert not add(w, w).requires_grad


class TestPrimitives:
    """Test cases for primitive values."""

    def test_matmul_identity(self):
        """Test that the identity matrix leaves its partner unchanged."""
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), b).data, b.data)

    def test_matmul_selector_row(self):
        """Test that [[1, 0]] selects the first entry of a column."""
        out = matmul(Tensor([[1.0, 0.0]]), Tensor([[7.0], [11.0]]))
        assert out.shape == (1, 1)
        assert out.item() == 7.0

    def test_matmul_mismatch_names_shapes(self):
        """Test that a dimension mismatch reports both shapes."""
        with pytest.raises(DimensionError, match=r"\(2, 3\) x \(2, 3\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_row_softmax_uniform(self):
        """Test that a constant row gives a uniform distribution."""
        np.testing.assert_allclose(row_softmax(Tensor([[0.0, 0.0, 0.0]])).data, [[1 / 3] * 3], atol=1e-7)

    def test_row_softmax_closed_form(self):
        """Test that logits (ln 2, 0) give (2/3, 1/3)."""
        out = row_softmax(Tensor([[math.log(2.0), 0.0]]), mask=np.array([[True, True]]))
        np.testing.assert_allclose(out.data, [[2 / 3, 1 / 3]], atol=1e-7)

    def test_row_softmax_mask_oracle(self):
        """Test that masked entries are exactly zero and the rest renormalize."""
        out = row_softmax(Tensor([[5.0, 9.0, 7.0]]), mask=np.array([[True, False, True]]))
        expected = np.exp([5.0, 7.0]) / np.exp([5.0, 7.0]).sum()
        assert out.data[0, 1] == 0.0
        np.testing.assert_allclose(out.data[0, [0, 2]], expected, atol=1e-6)
        assert abs(out.data.sum() - 1.0) < 1e-6

    def test_row_softmax_large_logits_stable(self):
        """Test that huge logits do not overflow."""
        out = row_softmax(Tensor([[1000.0, 999.0]]))
        assert np.all(np.isfinite(out.data))
        assert abs(out.data.sum() - 1.0) < 1e-6

    def test_row_softmax_fully_masked_row(self):
        """Test that a row with no admissible entry is rejected."""
        with pytest.raises(DegenerateRowError):
            row_softmax(Tensor([[1.0, 2.0], [3.0, 4.0]]), mask=np.array([[True, False], [False, False]]))

    def test_l1_normalize_rows(self):
        """Test L1 normalization restricted to the mask."""
        out = l1_normalize_rows(Tensor([[1.0, 3.0, 5.0]]), np.array([[True, True, False]]))
        np.testing.assert_allclose(out.data, [[0.25, 0.75, 0.0]], atol=1e-7)

    def test_l1_normalize_rejects_zero_row(self):
        """Test that a zero-mass row is degenerate."""
        with pytest.raises(DegenerateRowError):
            l1_normalize_rows(Tensor([[0.0, 0.0]]), np.array([[True, True]]))

    def test_l1_normalize_rejects_negative(self):
        """Test that negative units are rejected."""
        with pytest.raises(DegenerateRowError):
            l1_normalize_rows(Tensor([[-1.0, 2.0]]), np.array([[True, True]]))

    def test_layer_norm_constant_vector(self):
        """Test that a constant vector normalizes to zero."""
        out = layer_norm(Tensor([[3.0, 3.0, 3.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)), 1e-5)
        np.testing.assert_allclose(out.data, np.zeros((1, 3)), atol=1e-6)

    def test_layer_norm_unit_variance_pair(self):
        """Test that [1, -1] is already normalized."""
        out = layer_norm(Tensor([[1.0, -1.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), 1e-12)
        np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-5)

    def test_layer_norm_affine(self):
        """Test that gain and bias are applied after normalization."""
        out = layer_norm(Tensor([[1.0, -1.0]]), Tensor([2.0, 2.0]), Tensor([0.5, 0.5]), 1e-12)
        np.testing.assert_allclose(out.data, [[2.5, -1.5]], atol=1e-5)

    def test_gelu_values(self):
        """Test that gelu(0) = 0 and gelu(x) approaches x for large x."""
        out = gelu(Tensor([0.0, 10.0]))
        assert out.data[0] == 0.0
        assert abs(out.data[1] - 10.0) < 1e-4

    def test_cross_entropy_uniform(self):
        """Test that uniform logits over 4 classes give ln 4."""
        assert abs(cross_entropy(Tensor(np.zeros(4)), 2).item() - math.log(4.0)) < 1e-6

    def test_cross_entropy_extreme_logits(self):
        """Test stability and a near-zero loss for a confident correct prediction."""
        loss = cross_entropy(Tensor([1000.0, 0.0, -1000.0]), 0)
        assert 0.0 <= loss.item() < 1e-3

    def test_cross_entropy_rejects_bad_target(self):
        """Test that an out-of-range class index is rejected."""
        with pytest.raises(DimensionError):
            cross_entropy(Tensor(np.zeros(3)), 3)

    def test_scatter_matrix_structural_zeros(self):
        """Test that only the listed coordinates are filled."""
        out = scatter_matrix(Tensor([1.0, 2.0]), [0, 1], [1, 0], (2, 2))
        np.testing.assert_array_equal(out.data, [[0.0, 1.0], [2.0, 0.0]])

    def test_scatter_rows_requires_distinct_positions(self):
        """Test that duplicate scatter positions are rejected."""
        with pytest.raises(DimensionError):
            scatter_rows(Tensor(np.zeros((3, 2))), [1, 1], Tensor(np.ones((2, 2))))

    def test_reshape_mismatch(self):
        """Test that reshaping to an incompatible size fails."""
        with pytest.raises(DimensionError):
            reshape(Tensor(np.ones(6)), (4, 2))


class TestBackward:
    """Test cases for tape replay."""

    def test_sum_gives_ones(self):
        """Test that the gradient of sum(w) is all ones."""
        w = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True, name="w")
        with Tape() as tape:
            loss = sum_all(w)
        grads = backward(loss, tape)
        np.testing.assert_array_equal(grads["w"], np.ones((2, 3)))

    def test_frozen_leaves_excluded(self):
        """Test that only trainable leaves appear and frozen ones stay unchanged."""
        w = Tensor([1.0, 2.0, 3.0], requires_grad=True, name="w")
        v = Tensor([4.0, 5.0, 6.0], requires_grad=False, name="v")
        before = v.numpy()
        with Tape() as tape:
            loss = sum_all(mul(w, v))
        grads = backward(loss, tape)
        assert set(grads) == {"w"}
        np.testing.assert_array_equal(grads["w"], before)
        np.testing.assert_array_equal(v.data, before)

    def test_fan_out_accumulates(self):
        """Test that a leaf used twice gets the sum of both paths: d(w² + w) = 2w + 1."""
        w = Tensor([1.0, -2.0], requires_grad=True, name="w")
        with Tape() as tape:
            loss = sum_all(add(mul(w, w), w))
        np.testing.assert_allclose(backward(loss, tape)["w"], [3.0, -3.0])

    def test_unused_leaf_gets_zeros(self):
        """Test that a recorded leaf that does not reach the loss has a zero gradient."""
        a = Tensor([1.0, 2.0], requires_grad=True, name="a")
        b = Tensor([3.0], requires_grad=True, name="b")
        with Tape() as tape:
            mul(a, 2.0)
            loss = sum_all(b)
        grads = backward(loss, tape)
        np.testing.assert_array_equal(grads["a"], [0.0, 0.0])
        np.testing.assert_array_equal(grads["b"], [1.0])

    def test_non_scalar_loss_rejected(self):
        """Test that backward needs a scalar."""
        w = Tensor([1.0, 2.0], requires_grad=True, name="w")
        with Tape() as tape:
            out = mul(w, 2.0)
        with pytest.raises(DimensionError):
            backward(out, tape)

    def test_tensor_not_on_tape(self):
        """Test that backward on a foreign tensor raises a tape error."""
        w = Tensor([1.0], requires_grad=True, name="w")
        with Tape() as tape:
            sum_all(w)
        with pytest.raises(TapeError):
            backward(Tensor(1.0), tape)

    def test_tape_records_in_execution_order(self):
        """Test that nodes are appended in evaluation order."""
        w = Tensor([1.0, 2.0], requires_grad=True, name="w")
        with Tape() as tape:
            sum_all(gelu(mul(w, w)))
        assert [node.op for node in tape.nodes] == ["mul", "gelu", "sum"]


class TestGradientChecks:
    """Analytic gradients against central finite differences."""

    def test_relative_error_zero_when_both_vanish(self):
        """Test the degenerate case of the error measure."""
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0

    def test_matmul(self):
        """Test matmul gradients for both operands."""
        rng = np.random.default_rng(0)
        errors = check_gradients(
            lambda p: sum_all(matmul(p["a"], p["b"])),
            {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2))},
        )
        assert max(errors.values()) < GRAD_TOLERANCE

    def test_matmul_float32_storage(self):
        """Test matmul gradients on float32 leaves with loss differences taken in float64."""
        rng = np.random.default_rng(0)
        errors = check_gradients(
            lambda p: sum_all(matmul(p["a"], p["b"])),
            {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2))},
            h=1e-2,
            dtype=np.float32,
        )
        assert max(errors.values()) < 1e-3

    def test_batched_matmul_and_transpose(self):
        """Test rank-3 matmul together with an axis permutation."""
        rng = np.random.default_rng(1)
        weights = rng.normal(size=(2, 3, 3))
        errors = check_gradients(
            lambda p: weighted_sum(matmul(p["a"], transpose(p["a"], (0, 2, 1))), weights),
            {"a": rng.normal(size=(2, 3, 4))},
        )
        assert errors["a"] < GRAD_TOLERANCE

    def test_layer_norm(self):
        """Test layer-norm gradients for input, gain and bias."""
        rng = np.random.default_rng(2)
        weights = rng.normal(size=(3, 5))
        errors = check_gradients(
            lambda p: weighted_sum(layer_norm(p["x"], p["gain"], p["bias"], 1e-5), weights),
            {"x": rng.normal(size=(3, 5)), "gain": rng.normal(size=5), "bias": rng.normal(size=5)},
        )
        assert max(errors.values()) < GRAD_TOLERANCE

    def test_gelu(self):
        """Test gelu gradients across negative and positive inputs."""
        errors = check_gradients(lambda p: sum_all(gelu(p["x"])), {"x": np.linspace(-3.0, 3.0, 7)})
        assert errors["x"] < GRAD_TOLERANCE

    def test_masked_softmax(self):
        """Test masked softmax gradients."""
        rng = np.random.default_rng(3)
        mask = np.array([[True, False, True, True], [False, True, True, False]])
        weights = rng.normal(size=(2, 4))
        errors = check_gradients(
            lambda p: weighted_sum(row_softmax(p["x"], mask), weights), {"x": rng.normal(size=(2, 4))}
        )
        assert errors["x"] < GRAD_TOLERANCE

    def test_l1_normalize(self):
        """Test L1-normalization gradients on positive units."""
        rng = np.random.default_rng(4)
        mask = np.array([[True, True, False], [True, True, True]])
        weights = rng.normal(size=(2, 3))
        errors = check_gradients(
            lambda p: weighted_sum(l1_normalize_rows(p["x"], mask), weights),
            {"x": rng.uniform(0.5, 1.5, size=(2, 3))},
        )
        assert errors["x"] < GRAD_TOLERANCE

    def test_cross_entropy_matches_analytic(self):
        """Test that the logit gradient is softmax minus one-hot."""
        logits = np.array([0.5, -1.0, 2.0, 0.0])
        with precision(np.float64):
            z = Tensor(logits, requires_grad=True, name="z")
            with Tape() as tape:
                loss = cross_entropy(z, 1)
            grad = backward(loss, tape)["z"]
        expected = np.exp(logits) / np.exp(logits).sum()
        expected[1] -= 1.0
        np.testing.assert_allclose(grad, expected, atol=1e-12)

    def test_gather_and_scatter(self):
        """Test embedding lookup with repeated ids followed by row substitution."""
        rng = np.random.default_rng(5)
        weights = rng.normal(size=(4, 3))
        errors = check_gradients(
            lambda p: weighted_sum(scatter_rows(gather_rows(p["table"], [0, 2, 2, 1]), [1, 3], p["rows"]), weights),
            {"table": rng.normal(size=(3, 3)), "rows": rng.normal(size=(2, 3))},
        )
        assert max(errors.values()) < GRAD_TOLERANCE

    def test_two_layer_network(self):
        """Test a small two-layer network end to end."""
        rng = np.random.default_rng(6)
        x = rng.normal(size=(5, 3))
        weights = rng.normal(size=(5, 2))

        def loss_fn(p):
            hidden = gelu(add(matmul(Tensor(x), p["w1"]), p["b1"]))
            return weighted_sum(matmul(hidden, p["w2"]), weights)

        errors = check_gradients(
            loss_fn,
            {"w1": rng.normal(size=(3, 4)), "b1": rng.normal(size=4), "w2": rng.normal(size=(4, 2))},
        )
        assert max(errors.values()) < GRAD_TOLERANCE

    def test_determinism(self):
        """Test that identical inputs give bit-identical forward values."""
        rng = np.random.default_rng(7)
        a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
        first = row_softmax(matmul(Tensor(a), Tensor(b))).data
        second = row_softmax(matmul(Tensor(a), Tensor(b))).data
        np.testing.assert_array_equal(first, second)
