"""Integration tests for checkpoint directories."""

import numpy as np
import pytest

from pemi.data.fixtures import load_fixture
from pemi.data.synthetic import generate_synthetic, planted_hierarchy
from pemi.errors import CheckpointError, CompatibilityError
from pemi.models.encoder import EncoderConfig, init_encoder
from pemi.models.model import (
    ENCODER_FILE,
    HIERARCHY_FILE,
    LAYOUT_FILE,
    TRAINABLE_FILE,
    VOCAB_FILE,
    check_compatible,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from pemi.models.template import build_vocab, parse_layout
from pemi.training.trainer import TrainConfig, TrainState, train_step

CHECKPOINT_FILES = (ENCODER_FILE, TRAINABLE_FILE, HIERARCHY_FILE, VOCAB_FILE, LAYOUT_FILE)


@pytest.fixture(scope="module")
def bundle():
    return generate_synthetic(planted_hierarchy(), n_per_label=5, seed=2)


@pytest.fixture
def model(bundle):
    """A model moved off its initialization by a few updates."""
    vocab = build_vocab(text for instance in bundle.train for text in (instance.arg1, instance.arg2))
    config = EncoderConfig(vocab_size=len(vocab), d_model=8, n_layers=1, n_heads=2, d_ff=16, max_seq_len=32)
    model = init_model(init_encoder(config), vocab, parse_layout("P:2 A1 MASK SEP A2 P:1"), planted_hierarchy())
    train_config = TrainConfig(learning_rate=1e-2, batch_size=4)
    state = TrainState.create(train_config)
    for _ in range(3):
        model = train_step(model, list(bundle.train[:4]), train_config, state).model
    return model


class TestCheckpointRoundTrip:
    """Test cases for save/load."""

    def test_files_written(self, model, tmp_path):
        """Test that a checkpoint has every part."""
        root = save_checkpoint(model, tmp_path / "ckpt")
        assert sorted(p.name for p in root.iterdir()) == sorted(CHECKPOINT_FILES)

    def test_byte_identical_resave(self, model, tmp_path):
        """Test that save, load, save reproduces every file byte for byte."""
        first = save_checkpoint(model, tmp_path / "a")
        second = save_checkpoint(load_checkpoint(first), tmp_path / "b")
        for name in CHECKPOINT_FILES:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_loaded_predictions_match(self, model, bundle, tmp_path):
        """Test that a loaded model predicts the same probabilities."""
        loaded = load_checkpoint(save_checkpoint(model, tmp_path / "ckpt"))
        instance = bundle.test[0]
        for original, restored in zip(model.predict(instance.arg1, instance.arg2), loaded.predict(instance.arg1, instance.arg2)):
            np.testing.assert_array_equal(original.probs.data, restored.probs.data)
        assert loaded.template.layout == model.template.layout
        assert loaded.hierarchy == model.hierarchy


class TestCheckpointErrors:
    """Test cases for damaged or mismatched checkpoints."""

    def test_missing_directory(self, tmp_path):
        """Test that an absent directory is a checkpoint error."""
        with pytest.raises(CheckpointError, match="does not exist"):
            load_checkpoint(tmp_path / "absent")

    @pytest.mark.parametrize("name", CHECKPOINT_FILES)
    def test_missing_file(self, model, tmp_path, name):
        """Test that every part is required."""
        root = save_checkpoint(model, tmp_path / "ckpt")
        (root / name).unlink()
        with pytest.raises(CheckpointError, match=f"missing {name}"):
            load_checkpoint(root)

    def test_truncated_trainable(self, model, tmp_path):
        """Test that a cut-off trainable file is rejected."""
        root = save_checkpoint(model, tmp_path / "ckpt")
        data = (root / TRAINABLE_FILE).read_bytes()
        (root / TRAINABLE_FILE).write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(root)

    def test_swapped_hierarchy(self, model, tmp_path):
        """Test that trainable state written for one hierarchy will not load under another."""
        root = save_checkpoint(model, tmp_path / "ckpt")
        load_fixture("pdtb3").save(root / HIERARCHY_FILE)
        with pytest.raises(CheckpointError, match="different hierarchy"):
            load_checkpoint(root)

    def test_edited_layout(self, model, tmp_path):
        """Test that the layout must match the one the prompts were trained with."""
        root = save_checkpoint(model, tmp_path / "ckpt")
        (root / LAYOUT_FILE).write_text("P:3 A1 MASK SEP A2\n", encoding="utf-8")
        with pytest.raises(CheckpointError, match="layout"):
            load_checkpoint(root)

    def test_vocab_size_mismatch(self, model, tmp_path):
        """Test that vocab.tsv must match the encoder's table."""
        root = save_checkpoint(model, tmp_path / "ckpt")
        lines = (root / VOCAB_FILE).read_text(encoding="utf-8").splitlines()
        (root / VOCAB_FILE).write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        with pytest.raises(CheckpointError, match="vocab_size"):
            load_checkpoint(root)

    def test_incompatible_hierarchy(self, model):
        """Test that a different supplied hierarchy is a compatibility error."""
        check_compatible(model, planted_hierarchy())
        check_compatible(model, None)
        with pytest.raises(CompatibilityError):
            check_compatible(model, load_fixture("pdtb3"))
