"""Unit tests for the Adam optimizer over immutable tensors."""

import numpy as np
import pytest

from pemi.errors import ConfigError, NumericalError
from pemi.numcore import Tensor
from pemi.training.optimizer import Adam


def reference_adam(values, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Plain float64 Adam over a list of gradients."""
    x = np.asarray(values, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return x


class TestAdam:
    """Test cases for Adam updates."""

    def test_first_step_moves_by_lr(self):
        """Test that the first bias-corrected step moves each entry by about lr against its gradient."""
        adam = Adam(lr=0.01)
        w = Tensor([1.0, 1.0, 1.0], requires_grad=True, name="w")
        new = adam.step({"w": w}, {"w": np.array([0.5, -2.0, 1e-3])})
        np.testing.assert_allclose(new["w"].data, [0.99, 1.01, 0.99], atol=1e-6)

    def test_matches_reference(self):
        """Test three steps against a float64 reference."""
        rng = np.random.default_rng(0)
        start = rng.normal(size=(2, 3))
        grads = [rng.normal(size=(2, 3)) for _ in range(3)]
        adam = Adam(lr=0.05)
        params = {"w": Tensor(start, requires_grad=True, name="w", dtype=np.float64)}
        for g in grads:
            params = adam.step(params, {"w": g})
        np.testing.assert_allclose(params["w"].data, reference_adam(start, grads, lr=0.05), atol=1e-12)
        assert adam.t == 3

    def test_inputs_untouched(self):
        """Test that step() builds new tensors and keeps dtype and name."""
        w = Tensor([1.0, 2.0], requires_grad=True, name="w")
        before = w.numpy()
        new = Adam().step({"w": w}, {"w": np.ones(2)})
        np.testing.assert_array_equal(w.data, before)
        assert new["w"] is not w
        assert new["w"].dtype == np.float32
        assert new["w"].name == "w" and new["w"].requires_grad

    def test_missing_gradient_is_zero(self):
        """Test that a parameter without a gradient stays put."""
        w = Tensor([1.0, 2.0], requires_grad=True, name="w")
        new = Adam().step({"w": w}, {})
        np.testing.assert_array_equal(new["w"].data, w.data)

    def test_moments_mirror_shapes(self):
        """Test that moment arrays have the parameter shapes."""
        adam = Adam()
        adam.step({"w": Tensor(np.zeros((3, 2)), requires_grad=True, name="w")}, {"w": np.ones((3, 2))})
        assert adam.m["w"].shape == adam.v["w"].shape == (3, 2)

    def test_failed_step_leaves_state(self):
        """Test that a step that cannot build its tensors commits nothing."""
        adam = Adam()
        w = Tensor([1.0], requires_grad=True, name="w")
        with pytest.raises(NumericalError):
            adam.step({"w": w}, {"w": np.array([np.nan])})
        assert adam.t == 0
        assert adam.m == {}

    @pytest.mark.parametrize(
        "kwargs,field",
        [({"lr": 0.0}, "learning rate"), ({"betas": (0.9, 1.0)}, "betas"), ({"eps": 0.0}, "eps")],
    )
    def test_validation(self, kwargs, field):
        """Test that invalid hyperparameters are rejected."""
        with pytest.raises(ConfigError, match=field):
            Adam(**kwargs)
