"""Unit tests for the frozen transformer encoder."""

import numpy as np
import pytest

from pemi.errors import CheckpointError, ConfigError, LengthError, TemplateError
from pemi.models.encoder import (
    EncoderConfig,
    EncoderModel,
    count_parameters,
    init_encoder,
    load_weights,
    parameter_shapes,
    save_weights,
)
from pemi.models.template import MASK_ID, PROMPT_ID
from pemi.numcore import Tensor, check_gradients, mul, sum_all

MICRO = EncoderConfig(vocab_size=20, d_model=16, n_layers=2, n_heads=2, d_ff=32, max_seq_len=24, seed=3)


def micro_ids(length: int = 12, mask_at: int = 5) -> list[int]:
    ids = [5 + (i % 15) for i in range(length)]
    ids[mask_at] = MASK_ID
    return ids


class TestEncoderConfig:
    """Test cases for encoder hyperparameter validation."""

    def test_heads_must_divide_width(self):
        """Test that d_model must be divisible by n_heads."""
        with pytest.raises(ConfigError, match="divisible"):
            EncoderConfig(vocab_size=10, d_model=10, n_heads=3)

    def test_positive_sizes(self):
        """Test that sizes must be positive integers."""
        with pytest.raises(ConfigError, match="n_layers"):
            EncoderConfig(vocab_size=10, d_model=8, n_heads=2, n_layers=0)

    def test_prompt_positions_choice(self):
        """Test that only known prompt-position modes are accepted."""
        with pytest.raises(ConfigError, match="prompt_positions"):
            EncoderConfig(vocab_size=10, d_model=8, n_heads=2, prompt_positions="drop")


class TestInitEncoder:
    """Test cases for deterministic initialization."""

    def test_same_seed_identical(self):
        """Test that the same seed gives bit-identical parameters."""
        first, second = init_encoder(MICRO).arrays(), init_encoder(MICRO).arrays()
        assert first.keys() == second.keys()
        for name in first:
            np.testing.assert_array_equal(first[name], second[name])

    def test_different_seed_differs(self):
        """Test that another seed draws other weights."""
        other = EncoderConfig(**{**MICRO.to_dict(), "seed": 4})
        a = init_encoder(MICRO).arrays()["embeddings.token"]
        b = init_encoder(other).arrays()["embeddings.token"]
        assert not np.array_equal(a, b)

    def test_all_parameters_frozen(self):
        """Test that every encoder parameter is frozen."""
        assert not any(t.requires_grad for t in init_encoder(MICRO).parameters.values())

    def test_parameter_count_closed_form(self):
        """Test the closed-form count against a hand count on a tiny config."""
        tiny = EncoderConfig(vocab_size=10, d_model=4, n_layers=1, n_heads=2, d_ff=8, max_seq_len=6)
        # embeddings 72, layer 172, head 28
        assert count_parameters(tiny) == 272
        assert init_encoder(tiny).parameter_count() == 272

    def test_parameter_count_matches_registry(self):
        """Test that the formula agrees with the registered shapes."""
        total = sum(int(np.prod(shape)) for shape in parameter_shapes(MICRO).values())
        assert count_parameters(MICRO) == total == init_encoder(MICRO).parameter_count()

    def test_scaled_scheme_std(self):
        """Test that projections are fan-in scaled while embeddings keep init_std."""
        arrays = init_encoder(EncoderConfig(vocab_size=50)).arrays()
        assert arrays["embeddings.token"].std() == pytest.approx(0.02, rel=0.1)
        assert arrays["layers.0.attention.query.weight"].std() == pytest.approx(1 / 8, rel=0.1)
        assert arrays["layers.0.ffn.out.weight"].std() == pytest.approx(1 / 16, rel=0.1)

    def test_normal_scheme_std(self):
        """Test that the normal scheme draws every matrix with init_std."""
        arrays = init_encoder(EncoderConfig(vocab_size=50, init_scheme="normal")).arrays()
        for name in ("embeddings.token", "layers.0.attention.query.weight", "layers.0.ffn.out.weight"):
            assert arrays[name].std() == pytest.approx(0.02, rel=0.1), name

    def test_unknown_scheme(self):
        """Test that only known init schemes are accepted."""
        with pytest.raises(ConfigError, match="init_scheme"):
            EncoderConfig(vocab_size=10, d_model=8, n_heads=2, init_scheme="xavier")


class TestForward:
    """Test cases for the encoder forward pass."""

    def test_micro_forward(self):
        """Test that the micro encoder forwards a length-12 input."""
        trace = init_encoder(MICRO).forward(micro_ids())
        assert trace.h_mask.shape == (16,)
        assert trace.h_prime.shape == (16,)
        assert np.all(np.isfinite(trace.h_prime.data))

    def test_h_prime_is_head_transform(self):
        """Test that h' equals the head transform of h_mask."""
        encoder = init_encoder(MICRO)
        trace = encoder.forward(micro_ids())
        np.testing.assert_array_equal(encoder.head_transform(trace.h_mask).data, trace.h_prime.data)

    def test_head_output_layer_norm(self):
        """Test that the head output has zero mean under the initial unit gain and zero bias."""
        trace = init_encoder(MICRO).forward(micro_ids())
        assert abs(float(trace.h_prime.data.mean())) < 1e-5

    def test_requires_single_mask(self):
        """Test that zero or two masks are rejected."""
        encoder = init_encoder(MICRO)
        with pytest.raises(TemplateError):
            encoder.forward([5, 6, 7])
        with pytest.raises(TemplateError):
            encoder.forward([5, MASK_ID, 6, MASK_ID])

    def test_overlong_input(self):
        """Test that inputs longer than max_seq_len are rejected."""
        with pytest.raises(LengthError):
            init_encoder(MICRO).forward(micro_ids(length=25))

    def test_prompt_slot_count_must_match(self):
        """Test that slots and prompt rows must agree."""
        prompts = Tensor(np.zeros((2, 16)))
        with pytest.raises(TemplateError):
            init_encoder(MICRO).forward(micro_ids(), prompts, [0])

    def test_prompt_slot_cannot_be_mask(self):
        """Test that a prompt cannot overwrite the mask position."""
        prompts = Tensor(np.zeros((1, 16)))
        with pytest.raises(TemplateError):
            init_encoder(MICRO).forward(micro_ids(mask_at=5), prompts, [5])

    def test_prompt_row_changes_mask_state(self):
        """Test that perturbing one prompt row reaches h_mask through attention."""
        encoder = init_encoder(MICRO)
        ids = micro_ids()
        ids[0] = ids[1] = PROMPT_ID
        rng = np.random.default_rng(0)
        base = rng.normal(0.0, 0.02, size=(2, 16))
        moved = base.copy()
        moved[1] += 0.5
        a = encoder.forward(ids, Tensor(base), [0, 1]).h_mask.data
        b = encoder.forward(ids, Tensor(moved), [0, 1]).h_mask.data
        assert not np.allclose(a, b)

    def test_prompt_positions_zero_differs(self):
        """Test that zeroing positional embeddings at prompt slots changes the output."""
        zeroed = init_encoder(EncoderConfig(**{**MICRO.to_dict(), "prompt_positions": "zero"}))
        kept = init_encoder(MICRO)
        ids = micro_ids()
        ids[0] = PROMPT_ID
        prompts = Tensor(np.full((1, 16), 0.1))
        a = kept.forward(ids, prompts, [0]).h_mask.data
        b = zeroed.forward(ids, prompts, [0]).h_mask.data
        assert not np.allclose(a, b)

    def test_prompt_gradient_matches_finite_differences(self):
        """Test gradients of a readout of h' with respect to the prompt rows."""
        encoder = init_encoder(MICRO)
        ids = micro_ids()
        ids[0] = ids[8] = PROMPT_ID
        rng = np.random.default_rng(1)
        weights = rng.normal(size=16)

        def loss_fn(p):
            h_prime = encoder.forward(ids, p["prompts"], [0, 8]).h_prime
            return sum_all(mul(h_prime, Tensor(weights)))

        errors = check_gradients(loss_fn, {"prompts": rng.normal(0.0, 0.5, size=(2, 16))})
        assert errors["prompts"] < 1e-4


class TestWeightsFile:
    """Test cases for encoder checkpoints."""

    def test_round_trip_bytes(self, tmp_path):
        """Test that save, load, save produces identical bytes."""
        first, second = tmp_path / "a.bin", tmp_path / "b.bin"
        save_weights(init_encoder(MICRO), first)
        save_weights(load_weights(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_loaded_forward_equal(self, tmp_path):
        """Test that a loaded encoder computes the same values."""
        encoder = init_encoder(MICRO)
        path = tmp_path / "encoder.bin"
        save_weights(encoder, path)
        loaded = load_weights(path)
        assert loaded.config == MICRO
        np.testing.assert_array_equal(
            loaded.forward(micro_ids()).h_prime.data, encoder.forward(micro_ids()).h_prime.data
        )

    def test_wrong_width_names_array(self, tmp_path):
        """Test that loading against another d_model names the offending array."""
        path = tmp_path / "encoder.bin"
        save_weights(init_encoder(MICRO), path)
        wider = EncoderConfig(**{**MICRO.to_dict(), "d_model": 32})
        with pytest.raises(CheckpointError, match="embeddings.token"):
            load_weights(path, wider)

    def test_wrong_magic(self, tmp_path):
        """Test that a foreign file is rejected."""
        path = tmp_path / "encoder.bin"
        path.write_bytes(b"NOT-PEMI" + bytes(16))
        with pytest.raises(CheckpointError, match="magic"):
            load_weights(path)

    def test_truncated(self, tmp_path):
        """Test that a truncated file is rejected."""
        path = tmp_path / "encoder.bin"
        save_weights(init_encoder(MICRO), path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CheckpointError, match="truncated"):
            load_weights(path)


def h_prime_spread(encoder: EncoderModel, n_inputs: int = 50) -> float:
    """Mean distance of h' from its average over inputs that differ in eight argument slots."""
    rng = np.random.default_rng(7)
    varying = [4, 5, 6, 7, 20, 21, 22, 23]
    outputs = []
    for _ in range(n_inputs):
        ids = [5 + (i % 10) for i in range(30)]
        ids[14] = MASK_ID
        for position in varying:
            ids[position] = int(rng.integers(15, 50))
        outputs.append(encoder.forward(ids).h_prime.data.astype(np.float64))
    outputs = np.stack(outputs)
    center = outputs.mean(axis=0)
    return float(np.linalg.norm(outputs - center, axis=1).mean() / np.linalg.norm(center))


class TestContext:
    """Test cases for how much of the input reaches the mask position."""

    def test_scaled_init_carries_arguments(self):
        """Test that the toy default encoder's h' moves with the argument tokens."""
        scaled = h_prime_spread(init_encoder(EncoderConfig(vocab_size=50)))
        normal = h_prime_spread(init_encoder(EncoderConfig(vocab_size=50, init_scheme="normal")))
        assert scaled > 0.02
        assert scaled > 5 * normal
