"""Flat ``key = value`` run-configuration files."""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Union

from config import (
    DEFAULT_D_FF,
    DEFAULT_D_MODEL,
    DEFAULT_ENCODER_SEED,
    DEFAULT_INIT_SCHEME,
    DEFAULT_LAYOUT,
    DEFAULT_MAX_SEQ_LEN,
    DEFAULT_MIN_COUNT,
    DEFAULT_N_HEADS,
    DEFAULT_N_LAYERS,
    DEFAULT_NORMALIZATION,
    DEFAULT_OUT_DIR,
    DEFAULT_PROMPT_POSITIONS,
    DEFAULT_SYNTH_PER_LABEL,
    DEFAULT_SYNTH_SEED,
    DEFAULT_SYNTH_SIGNATURE_SIZE,
    DEFAULT_SYNTH_VOCAB_SIZE,
    DEFAULT_VERBALIZER_MODE,
)
from pemi.errors import ConfigError
from pemi.models.encoder import EncoderConfig
from pemi.models.template import PromptTemplate, parse_layout
from pemi.models.verbalizer import NORMALIZATIONS, VERBALIZER_MODES
from pemi.training.trainer import TrainConfig


@dataclass(frozen=True)
class EncoderSettings:
    """Encoder hyperparameters known before the vocabulary is built."""

    d_model: int = DEFAULT_D_MODEL
    n_layers: int = DEFAULT_N_LAYERS
    n_heads: int = DEFAULT_N_HEADS
    d_ff: int = DEFAULT_D_FF
    max_seq_len: int = DEFAULT_MAX_SEQ_LEN
    seed: int = DEFAULT_ENCODER_SEED
    prompt_positions: str = DEFAULT_PROMPT_POSITIONS
    init_scheme: str = DEFAULT_INIT_SCHEME

    def __post_init__(self) -> None:
        """Validate through EncoderConfig so errors surface at parse time."""
        self.to_config(vocab_size=1)

    def to_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=vocab_size,
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            d_ff=self.d_ff,
            max_seq_len=self.max_seq_len,
            seed=self.seed,
            prompt_positions=self.prompt_positions,
            init_scheme=self.init_scheme,
        )


@dataclass(frozen=True)
class PathSettings:
    hierarchy: Optional[str] = None
    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None
    out: str = DEFAULT_OUT_DIR
    encoder: Optional[str] = None


@dataclass(frozen=True)
class SynthSettings:
    """Synthetic-data generator settings."""

    n_per_label: int = DEFAULT_SYNTH_PER_LABEL
    vocab_size: int = DEFAULT_SYNTH_VOCAB_SIZE
    signature_size: int = DEFAULT_SYNTH_SIGNATURE_SIZE
    seed: int = DEFAULT_SYNTH_SEED

    def __post_init__(self) -> None:
        """Validate settings after initialization."""
        if self.n_per_label < 1:
            raise ConfigError(f"synth.n_per_label must be >= 1, got {self.n_per_label}")
        if self.vocab_size < 1:
            raise ConfigError(f"synth.vocab_size must be >= 1, got {self.vocab_size}")
        if self.signature_size < 2:
            raise ConfigError(f"synth.signature_size must be >= 2, got {self.signature_size}")
        if self.seed < 0:
            raise ConfigError(f"synth.seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, with a documented default for every key."""

    layout: str = DEFAULT_LAYOUT
    min_count: int = DEFAULT_MIN_COUNT
    verbalizer_mode: str = DEFAULT_VERBALIZER_MODE
    normalization: str = DEFAULT_NORMALIZATION
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathSettings = field(default_factory=PathSettings)
    synth: SynthSettings = field(default_factory=SynthSettings)

    def __post_init__(self) -> None:
        """Validate cross-field settings after initialization."""
        self.template()
        if self.min_count < 1:
            raise ConfigError(f"data.min_count must be >= 1, got {self.min_count}")
        if self.verbalizer_mode not in VERBALIZER_MODES:
            raise ConfigError(f"verbalizer.mode must be one of {VERBALIZER_MODES}, got {self.verbalizer_mode!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(
                f"verbalizer.normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}"
            )

    def template(self) -> PromptTemplate:
        return parse_layout(self.layout)

    def require(self, key: str) -> str:
        """
        Get a ``paths.*`` value that a command cannot run without.

        Raises:
            ConfigError: Naming the key when it is unset
        """
        value = getattr(self.paths, key.removeprefix("paths."), None)
        if not value:
            raise ConfigError(f"{key} is required but not set")
        return value

    def with_seed(self, seed: int) -> "RunConfig":
        """Override the training and synthetic-data seeds."""
        return replace(self, train=replace(self.train, seed=seed), synth=replace(self.synth, seed=seed))


def _integer(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}") from None


def _number(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}") from None


def _numbers(raw: str) -> tuple[float, ...]:
    return tuple(_number(part.strip()) for part in raw.split(",") if part.strip())


def _text(raw: str) -> str:
    return raw


def _is_relative_file(value: str) -> bool:
    return bool(value) and not value.startswith("fixture:") and not Path(value).is_absolute()


# key -> (section, field, converter); section "" is RunConfig itself
_KEYS: dict[str, tuple[str, str, Callable[[str], Any]]] = {
    "layout": ("", "layout", _text),
    "data.min_count": ("", "min_count", _integer),
    "verbalizer.mode": ("", "verbalizer_mode", _text),
    "verbalizer.normalization": ("", "normalization", _text),
    "encoder.d_model": ("encoder", "d_model", _integer),
    "encoder.n_layers": ("encoder", "n_layers", _integer),
    "encoder.n_heads": ("encoder", "n_heads", _integer),
    "encoder.d_ff": ("encoder", "d_ff", _integer),
    "encoder.max_seq_len": ("encoder", "max_seq_len", _integer),
    "encoder.seed": ("encoder", "seed", _integer),
    "encoder.prompt_positions": ("encoder", "prompt_positions", _text),
    "encoder.init_scheme": ("encoder", "init_scheme", _text),
    "train.lr": ("train", "learning_rate", _number),
    "train.batch": ("train", "batch_size", _integer),
    "train.max_epochs": ("train", "max_epochs", _integer),
    "train.eval_step": ("train", "eval_step", _integer),
    "train.lambdas": ("train", "lambdas", _numbers),
    "train.seed": ("train", "seed", _integer),
    "train.patience": ("train", "patience", _integer),
    "paths.hierarchy": ("paths", "hierarchy", _text),
    "paths.train": ("paths", "train", _text),
    "paths.dev": ("paths", "dev", _text),
    "paths.test": ("paths", "test", _text),
    "paths.out": ("paths", "out", _text),
    "paths.encoder": ("paths", "encoder", _text),
    "synth.n_per_label": ("synth", "n_per_label", _integer),
    "synth.vocab_size": ("synth", "vocab_size", _integer),
    "synth.signature_size": ("synth", "signature_size", _integer),
    "synth.seed": ("synth", "seed", _integer),
}
_SECTIONS = {"encoder": EncoderSettings, "train": TrainConfig, "paths": PathSettings, "synth": SynthSettings}


def parse_run_config(text: str, source: str = "<config>", base: Optional[Path] = None) -> RunConfig:
    """
    Parse ``key = value`` lines (``#`` starts a comment, blank lines ignored).

    Relative input paths (every ``paths.*`` key but ``paths.out``) are
    resolved against ``base`` when given.

    Raises:
        ConfigError: On unknown or repeated keys, malformed lines or invalid values
    """
    sections: dict[str, dict[str, Any]] = {name: {} for name in ("", *_SECTIONS)}
    seen: set[str] = set()
    for line_number, line in enumerate(text.splitlines(), 1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, raw = content.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"{source} line {line_number}: expected 'key = value', got {line.strip()!r}")
        if key not in _KEYS:
            raise ConfigError(f"{source} line {line_number}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source} line {line_number}: {key} is set twice")
        seen.add(key)
        section, name, convert = _KEYS[key]
        try:
            value = convert(raw)
        except ConfigError as e:
            raise ConfigError(f"{source} line {line_number}: {key}: {e}") from None
        if section == "paths" and name != "out" and base is not None and _is_relative_file(value):
            value = str(base / value)
        sections[section][name] = value

    try:
        built = {name: cls(**sections[name]) for name, cls in _SECTIONS.items()}
        return RunConfig(**sections[""], **built)
    except ConfigError as e:
        raise type(e)(f"{source}: {e}") from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    Read a run-config file; relative paths inside it resolve against its directory.

    Raises:
        ConfigError: If the file cannot be read or fails to parse
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_run_config(text, source=str(path), base=path.parent)
