"""Frozen transformer MLM encoder and head transform."""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from config import (
    DEFAULT_D_FF,
    DEFAULT_D_MODEL,
    DEFAULT_ENCODER_SEED,
    DEFAULT_INIT_SCHEME,
    DEFAULT_INIT_STD,
    DEFAULT_LAYER_NORM_EPS,
    DEFAULT_MAX_SEQ_LEN,
    DEFAULT_N_HEADS,
    DEFAULT_N_LAYERS,
    DEFAULT_PROMPT_POSITIONS,
)
from pemi.errors import CheckpointError, ConfigError, LengthError, TemplateError
from pemi.models.checkpoint import ENCODER_MAGIC, expect_shape, read_container, write_container
from pemi.models.template import MASK_ID
from pemi.numcore import (
    Tensor,
    add,
    gather_rows,
    gelu,
    layer_norm,
    matmul,
    mul,
    reshape,
    row_softmax,
    scale,
    scatter_rows,
    transpose,
)

logger = logging.getLogger(__name__)

PROMPT_POSITION_MODES = ("keep", "zero")
INIT_SCHEMES = ("scaled", "normal")


@dataclass(frozen=True)
class EncoderConfig:
    """Immutable encoder hyperparameters (a scaled-down RoBERTa layout)."""

    vocab_size: int
    d_model: int = DEFAULT_D_MODEL
    n_layers: int = DEFAULT_N_LAYERS
    n_heads: int = DEFAULT_N_HEADS
    d_ff: int = DEFAULT_D_FF
    max_seq_len: int = DEFAULT_MAX_SEQ_LEN
    seed: int = DEFAULT_ENCODER_SEED
    init_std: float = DEFAULT_INIT_STD
    layer_norm_eps: float = DEFAULT_LAYER_NORM_EPS
    prompt_positions: str = DEFAULT_PROMPT_POSITIONS
    init_scheme: str = DEFAULT_INIT_SCHEME

    def __post_init__(self) -> None:
        """Validate hyperparameters after initialization."""
        for field_name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_seq_len"):
            value = getattr(self, field_name)
            if not (isinstance(value, int) and value > 0):
                raise ConfigError(f"{field_name} must be a positive integer, got {value!r}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if not self.init_std > 0:
            raise ConfigError(f"init_std must be > 0, got {self.init_std}")
        if not self.layer_norm_eps > 0:
            raise ConfigError(f"layer_norm_eps must be > 0, got {self.layer_norm_eps}")
        if self.prompt_positions not in PROMPT_POSITION_MODES:
            raise ConfigError(
                f"prompt_positions must be one of {PROMPT_POSITION_MODES}, got {self.prompt_positions!r}"
            )
        if self.init_scheme not in INIT_SCHEMES:
            raise ConfigError(f"init_scheme must be one of {INIT_SCHEMES}, got {self.init_scheme!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "EncoderConfig":
        try:
            return cls(**values)
        except (TypeError, ConfigError) as e:
            raise CheckpointError(f"encoder config header is invalid: {e}") from e


@dataclass(frozen=True)
class ForwardTrace:
    """Hidden state at the mask position before and after the head transform."""

    h_mask: Tensor
    h_prime: Tensor


def parameter_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Get every encoder parameter name and shape in registration order."""
    d, ff = config.d_model, config.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "embeddings.token": (config.vocab_size, d),
        "embeddings.position": (config.max_seq_len, d),
        "embeddings.norm.gain": (d,),
        "embeddings.norm.bias": (d,),
    }
    for i in range(config.n_layers):
        prefix = f"layers.{i}"
        for proj in ("query", "key", "value", "output"):
            shapes[f"{prefix}.attention.{proj}.weight"] = (d, d)
            shapes[f"{prefix}.attention.{proj}.bias"] = (d,)
        shapes[f"{prefix}.attention.norm.gain"] = (d,)
        shapes[f"{prefix}.attention.norm.bias"] = (d,)
        shapes[f"{prefix}.ffn.in.weight"] = (d, ff)
        shapes[f"{prefix}.ffn.in.bias"] = (ff,)
        shapes[f"{prefix}.ffn.out.weight"] = (ff, d)
        shapes[f"{prefix}.ffn.out.bias"] = (d,)
        shapes[f"{prefix}.ffn.norm.gain"] = (d,)
        shapes[f"{prefix}.ffn.norm.bias"] = (d,)
    shapes["head.dense.weight"] = (d, d)
    shapes["head.dense.bias"] = (d,)
    shapes["head.norm.gain"] = (d,)
    shapes["head.norm.bias"] = (d,)
    return shapes


def count_parameters(config: EncoderConfig) -> int:
    """Closed-form parameter count of the encoder plus head transform."""
    d, ff = config.d_model, config.d_ff
    embeddings = (config.vocab_size + config.max_seq_len) * d + 2 * d
    per_layer = 4 * (d * d + d) + 2 * d + (d * ff + ff) + (ff * d + d) + 2 * d
    head = d * d + d + 2 * d
    return embeddings + config.n_layers * per_layer + head


class EncoderModel:
    """Frozen transformer encoder ℰ plus the MLM head transform (projection removed)."""

    def __init__(self, config: EncoderConfig, arrays: dict[str, np.ndarray]) -> None:
        """
        Wrap parameter arrays as frozen tensors.

        Args:
            config: Encoder hyperparameters
            arrays: One array per name in parameter_shapes(config)

        Raises:
            CheckpointError: If an array is missing, unexpected or mis-shaped
        """
        shapes = parameter_shapes(config)
        unexpected = sorted(set(arrays) - set(shapes))
        if unexpected:
            raise CheckpointError(f"unexpected encoder array {unexpected[0]!r}")
        self._config = config
        self._parameters: dict[str, Tensor] = {}
        for name, shape in shapes.items():
            if name not in arrays:
                raise CheckpointError(f"missing encoder array {name!r}")
            array = expect_shape(name, np.asarray(arrays[name]), shape)
            self._parameters[name] = Tensor(array, requires_grad=False, name=name, dtype=np.float32)

    @property
    def config(self) -> EncoderConfig:
        return self._config

    @property
    def parameters(self) -> dict[str, Tensor]:
        """Get all (frozen) parameters by name, in registration order."""
        return dict(self._parameters)

    def parameter_count(self) -> int:
        return sum(t.size for t in self._parameters.values())

    def arrays(self) -> dict[str, np.ndarray]:
        """Get copies of all parameter values."""
        return {name: t.numpy() for name, t in self._parameters.items()}

    def _linear(self, prefix: str, x: Tensor) -> Tensor:
        return add(matmul(x, self._parameters[f"{prefix}.weight"]), self._parameters[f"{prefix}.bias"])

    def _norm(self, prefix: str, x: Tensor) -> Tensor:
        return layer_norm(
            x,
            self._parameters[f"{prefix}.gain"],
            self._parameters[f"{prefix}.bias"],
            self._config.layer_norm_eps,
        )

    def _attention(self, prefix: str, x: Tensor) -> Tensor:
        length, width = x.shape
        heads = self._config.n_heads
        head_dim = width // heads

        def split(t: Tensor) -> Tensor:
            return transpose(reshape(t, (length, heads, head_dim)), (1, 0, 2))

        query = split(self._linear(f"{prefix}.query", x))
        key = split(self._linear(f"{prefix}.key", x))
        value = split(self._linear(f"{prefix}.value", x))

        scores = scale(matmul(query, transpose(key, (0, 2, 1))), 1.0 / math.sqrt(head_dim))
        context = matmul(row_softmax(scores), value)
        merged = reshape(transpose(context, (1, 0, 2)), (length, width))
        return self._linear(f"{prefix}.output", merged)

    def _layer(self, index: int, x: Tensor) -> Tensor:
        prefix = f"layers.{index}"
        x = self._norm(f"{prefix}.attention.norm", add(x, self._attention(f"{prefix}.attention", x)))
        hidden = gelu(self._linear(f"{prefix}.ffn.in", x))
        return self._norm(f"{prefix}.ffn.norm", add(x, self._linear(f"{prefix}.ffn.out", hidden)))

    def forward(
        self,
        token_ids: Sequence[int],
        prompt_embeddings: Optional[Tensor] = None,
        prompt_slots: Sequence[int] = (),
    ) -> ForwardTrace:
        """
        Encode a templated input and read out the mask position.

        Args:
            token_ids: Token ids of the modified input (placeholders at prompt slots)
            prompt_embeddings: K×d soft prompt rows (None or K=0 for no prompts)
            prompt_slots: The K positions whose embeddings are replaced by prompt rows

        Returns:
            ForwardTrace with h_mask and h_prime

        Raises:
            TemplateError: If the input does not hold exactly one mask or slots mismatch K
            LengthError: If the input exceeds max_seq_len
        """
        ids = [int(t) for t in token_ids]
        length = len(ids)
        if length > self._config.max_seq_len:
            raise LengthError(f"input of length {length} exceeds max_seq_len {self._config.max_seq_len}")
        mask_positions = [i for i, t in enumerate(ids) if t == MASK_ID]
        if len(mask_positions) != 1:
            raise TemplateError(f"input must contain exactly one mask, found {len(mask_positions)}")

        slots = [int(p) for p in prompt_slots]
        n_prompts = 0 if prompt_embeddings is None else prompt_embeddings.shape[0]
        if len(slots) != n_prompts:
            raise TemplateError(f"{len(slots)} prompt slots given for {n_prompts} prompt embeddings")
        if any(not 0 <= p < length for p in slots) or mask_positions[0] in slots:
            raise TemplateError("prompt slots must be distinct non-mask positions inside the input")

        x = gather_rows(self._parameters["embeddings.token"], ids)
        if n_prompts:
            x = scatter_rows(x, slots, prompt_embeddings)
        positions = gather_rows(self._parameters["embeddings.position"], range(length))
        if n_prompts and self._config.prompt_positions == "zero":
            keep = np.ones((length, 1), dtype=np.float32)
            keep[slots] = 0.0
            positions = mul(positions, Tensor(keep, dtype=np.float32))
        x = self._norm("embeddings.norm", add(x, positions))

        for index in range(self._config.n_layers):
            x = self._layer(index, x)

        h_mask = reshape(gather_rows(x, mask_positions), (self._config.d_model,))
        return ForwardTrace(h_mask=h_mask, h_prime=self.head_transform(h_mask))

    def head_transform(self, h_mask: Tensor) -> Tensor:
        """Dense(d→d) → GELU → layer norm on the mask hidden state."""
        width = self._config.d_model
        x = reshape(h_mask, (1, width))
        x = self._norm("head.norm", gelu(self._linear("head.dense", x)))
        return reshape(x, (width,))


def _init_std(config: EncoderConfig, name: str, shape: tuple[int, ...]) -> float:
    if config.init_scheme == "scaled" and name.endswith(".weight"):
        return 1.0 / math.sqrt(shape[0])
    return config.init_std


def init_encoder(config: EncoderConfig) -> EncoderModel:
    """
    Build a frozen encoder with deterministic random weights.

    Tensors are drawn in registration order from ``config.seed``. Embedding
    tables use Normal(0, init_std). Projection matrices use Normal(0, init_std)
    under the ``normal`` scheme and Normal(0, 1/sqrt(fan_in)) under ``scaled``,
    where attention and FFN branches are as large as the residual they join.
    Biases start at 0 and layer-norm gains at 1.
    """
    rng = np.random.default_rng(config.seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".gain"):
            arrays[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith(".bias"):
            arrays[name] = np.zeros(shape, dtype=np.float32)
        else:
            arrays[name] = rng.normal(0.0, _init_std(config, name, shape), size=shape).astype(np.float32)
    model = EncoderModel(config, arrays)
    logger.debug("initialized encoder with %d frozen parameters", model.parameter_count())
    return model


def save_weights(model: EncoderModel, path: Union[str, Path]) -> None:
    """Write the encoder checkpoint (config header + named float32 arrays)."""
    write_container(path, ENCODER_MAGIC, {"config": model.config.to_dict()}, model.arrays())


def load_weights(path: Union[str, Path], config: Optional[EncoderConfig] = None) -> EncoderModel:
    """
    Load an encoder checkpoint.

    Args:
        path: Checkpoint file
        config: Expected configuration; when given, arrays are checked
            against it instead of the stored header

    Raises:
        CheckpointError: On format problems or any array whose shape disagrees
    """
    header, arrays = read_container(path, ENCODER_MAGIC)
    if "config" not in header:
        raise CheckpointError(f"checkpoint {path} has no encoder config header")
    stored = EncoderConfig.from_dict(header["config"])
    return EncoderModel(config or stored, arrays)
