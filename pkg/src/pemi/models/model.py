"""The PEMI model: frozen encoder, prompt template, soft prompts and verbalizer."""

import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from config import DEFAULT_INIT_STD, DEFAULT_NORMALIZATION, DEFAULT_VERBALIZER_MODE
from pemi.errors import CheckpointError, CompatibilityError, ConfigError, DataError, DimensionError, LengthError
from pemi.models.checkpoint import TRAINABLE_MAGIC, read_container, write_container
from pemi.models.encoder import EncoderModel, ForwardTrace, load_weights, save_weights
from pemi.models.hierarchy import LabelHierarchy, load_hierarchy
from pemi.models.template import ModifiedInput, PromptTemplate, Vocab, apply_template, parse_layout
from pemi.models.verbalizer import (
    LevelPrediction,
    VerbalizerState,
    init_verbalizer,
    load_verbalizer,
    predict_level,
    refine,
)
from pemi.numcore import Tensor

logger = logging.getLogger(__name__)

PROMPT_NAME = "prompt.embeddings"

ENCODER_FILE = "encoder.bin"
TRAINABLE_FILE = "trainable.bin"
HIERARCHY_FILE = "hierarchy.json"
VOCAB_FILE = "vocab.tsv"
LAYOUT_FILE = "layout.txt"


class PemiModel:
    """
    Immutable bundle of everything needed to score an argument pair.

    Updating trainable tensors yields a new model via replace(); the
    encoder object is shared and never modified.
    """

    def __init__(
        self,
        encoder: EncoderModel,
        vocab: Vocab,
        template: PromptTemplate,
        verbalizer: VerbalizerState,
        prompts: Tensor,
    ) -> None:
        """
        Raises:
            DimensionError: If prompt or verbalizer widths disagree with the encoder
            LengthError: If the template leaves no room for arguments
        """
        d_model = encoder.config.d_model
        if prompts.shape != (template.n_prompts, d_model):
            raise DimensionError(
                f"prompts have shape {prompts.shape}, expected {(template.n_prompts, d_model)}"
            )
        if verbalizer.d_model != d_model:
            raise DimensionError(f"verbalizer width {verbalizer.d_model} differs from d_model {d_model}")
        if len(vocab) != encoder.config.vocab_size:
            raise DimensionError(
                f"vocabulary has {len(vocab)} tokens but the encoder expects {encoder.config.vocab_size}"
            )
        if template.n_prompts + 4 > encoder.config.max_seq_len:
            raise LengthError(
                f"template with {template.n_prompts} prompts does not fit max_seq_len {encoder.config.max_seq_len}"
            )
        self._encoder = encoder
        self._vocab = vocab
        self._template = template
        self._verbalizer = verbalizer
        self._prompts = prompts

    @property
    def encoder(self) -> EncoderModel:
        return self._encoder

    @property
    def vocab(self) -> Vocab:
        return self._vocab

    @property
    def template(self) -> PromptTemplate:
        return self._template

    @property
    def verbalizer(self) -> VerbalizerState:
        return self._verbalizer

    @property
    def hierarchy(self) -> LabelHierarchy:
        return self._verbalizer.hierarchy

    @property
    def prompts(self) -> Tensor:
        return self._prompts

    def trainable_parameters(self) -> dict[str, Tensor]:
        """Get δ: the soft prompts and every verbalizer tensor, by name."""
        return {PROMPT_NAME: self._prompts, **self._verbalizer.parameters}

    def replace(self, updated: Mapping[str, Tensor]) -> "PemiModel":
        """Get a model with some trainable tensors swapped."""
        updated = dict(updated)
        prompts = updated.pop(PROMPT_NAME, self._prompts)
        verbalizer = self._verbalizer.replace(updated) if updated else self._verbalizer
        return PemiModel(self._encoder, self._vocab, self._template, verbalizer, prompts)

    def project(self) -> "PemiModel":
        """Apply the verbalizer's post-update projection (L1 units stay nonnegative)."""
        verbalizer = self._verbalizer.project()
        if verbalizer is self._verbalizer:
            return self
        return PemiModel(self._encoder, self._vocab, self._template, verbalizer, self._prompts)

    def encode(self, arg1: str, arg2: str) -> ModifiedInput:
        return apply_template(self._template, arg1, arg2, self._vocab, self._encoder.config.max_seq_len)

    def trace(self, modified: ModifiedInput) -> ForwardTrace:
        """Run the frozen encoder with the soft prompts in place."""
        if self._template.n_prompts == 0:
            return self._encoder.forward(modified.token_ids)
        return self._encoder.forward(modified.token_ids, self._prompts, modified.prompt_slots)

    def forward(self, inputs: Sequence[ModifiedInput]) -> list[list[LevelPrediction]]:
        """
        Score a batch at every level.

        The verbalizer matrices are refined once for the whole batch.

        Returns:
            One list of Z level predictions per input
        """
        matrices = refine(self._verbalizer)
        results = []
        for modified in inputs:
            h_prime = self.trace(modified).h_prime
            results.append([predict_level(h_prime, matrix) for matrix in matrices])
        return results

    def predict(self, arg1: str, arg2: str) -> list[LevelPrediction]:
        return self.forward([self.encode(arg1, arg2)])[0]


def init_model(
    encoder: EncoderModel,
    vocab: Vocab,
    template: PromptTemplate,
    hierarchy: LabelHierarchy,
    seed: int = 0,
    mode: str = DEFAULT_VERBALIZER_MODE,
    normalization: str = DEFAULT_NORMALIZATION,
    init_std: float = DEFAULT_INIT_STD,
) -> PemiModel:
    """
    Build a fresh model around a frozen encoder.

    Soft prompts are drawn from Normal(0, init_std) with ``seed``; the
    verbalizer is initialized by init_verbalizer() from the same seed.
    """
    d_model = encoder.config.d_model
    rng = np.random.default_rng(seed)
    prompts = Tensor(
        rng.normal(0.0, init_std, size=(template.n_prompts, d_model)),
        requires_grad=True,
        name=PROMPT_NAME,
    )
    verbalizer = init_verbalizer(
        hierarchy,
        d_model,
        seed=seed,
        mode=mode,
        normalization=normalization,
        token_table=encoder.parameters["embeddings.token"].data,
        vocab=vocab,
        init_std=init_std,
    )
    return PemiModel(encoder, vocab, template, verbalizer, prompts)


def save_checkpoint(model: PemiModel, directory: Union[str, Path]) -> Path:
    """
    Write a full checkpoint directory.

    Files: encoder.bin, trainable.bin, hierarchy.json, vocab.tsv and
    layout.txt. Writing the same model twice gives identical bytes.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    save_weights(model.encoder, root / ENCODER_FILE)
    header = {
        "layout": model.template.layout,
        "verbalizer": {
            "mode": model.verbalizer.mode,
            "normalization": model.verbalizer.normalization,
        },
        "hierarchy_sizes": list(model.hierarchy.sizes),
    }
    arrays = {name: tensor.numpy() for name, tensor in model.trainable_parameters().items()}
    write_container(root / TRAINABLE_FILE, TRAINABLE_MAGIC, header, arrays)
    model.hierarchy.save(root / HIERARCHY_FILE)
    model.vocab.save(root / VOCAB_FILE)
    (root / LAYOUT_FILE).write_text(model.template.layout + "\n", encoding="utf-8")
    logger.info("saved checkpoint to %s", root)
    return root


def load_checkpoint(directory: Union[str, Path]) -> PemiModel:
    """
    Load a checkpoint directory written by save_checkpoint().

    Raises:
        CheckpointError: If a file is missing, corrupt or the parts disagree
    """
    root = Path(directory)
    if not root.is_dir():
        raise CheckpointError(f"checkpoint directory {root} does not exist")
    for name in (ENCODER_FILE, TRAINABLE_FILE, HIERARCHY_FILE, VOCAB_FILE, LAYOUT_FILE):
        if not (root / name).is_file():
            raise CheckpointError(f"checkpoint {root} is missing {name}")

    try:
        hierarchy = load_hierarchy(root / HIERARCHY_FILE)
        vocab = Vocab.load(root / VOCAB_FILE)
        template = parse_layout((root / LAYOUT_FILE).read_text(encoding="utf-8").strip())
    except (DataError, ConfigError) as e:
        raise CheckpointError(f"checkpoint {root}: {e}") from e
    encoder = load_weights(root / ENCODER_FILE)
    if encoder.config.vocab_size != len(vocab):
        raise CheckpointError(
            f"encoder vocab_size {encoder.config.vocab_size} differs from vocab.tsv ({len(vocab)} tokens)"
        )

    header, arrays = read_container(root / TRAINABLE_FILE, TRAINABLE_MAGIC)
    if header.get("layout") != template.layout:
        raise CheckpointError(f"trainable state was written for layout {header.get('layout')!r}")
    if header.get("hierarchy_sizes") != list(hierarchy.sizes):
        raise CheckpointError("trainable state was written for a different hierarchy")
    if PROMPT_NAME not in arrays:
        raise CheckpointError(f"trainable state lacks {PROMPT_NAME!r}")
    settings = header.get("verbalizer", {})
    prompt_array = arrays.pop(PROMPT_NAME)
    verbalizer = load_verbalizer(
        hierarchy,
        arrays,
        settings.get("mode", DEFAULT_VERBALIZER_MODE),
        settings.get("normalization", DEFAULT_NORMALIZATION),
    )
    prompts = Tensor(prompt_array, requires_grad=True, name=PROMPT_NAME, dtype=np.float32)
    try:
        return PemiModel(encoder, vocab, template, verbalizer, prompts)
    except (DimensionError, LengthError) as e:
        raise CheckpointError(f"checkpoint {root} is inconsistent: {e}") from e


def check_compatible(model: PemiModel, hierarchy: Optional[LabelHierarchy]) -> None:
    """
    Raises:
        CompatibilityError: If ``hierarchy`` is given and differs from the model's
    """
    if hierarchy is not None and hierarchy != model.hierarchy:
        raise CompatibilityError(
            f"checkpoint hierarchy {model.hierarchy.sizes} does not match the supplied hierarchy {hierarchy.sizes}"
        )
