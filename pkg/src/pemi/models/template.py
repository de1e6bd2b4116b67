"""Tokenization and prompt-template projection of argument pairs."""

import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Union

from config import DEFAULT_LAYOUT
from pemi.errors import DataError, LayoutError, LengthError

PAD_TOKEN, UNK_TOKEN, MASK_TOKEN, SEP_TOKEN, PROMPT_TOKEN = "<pad>", "<unk>", "<mask>", "<sep>", "<prompt>"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN, SEP_TOKEN, PROMPT_TOKEN)
PAD_ID, UNK_ID, MASK_ID, SEP_ID, PROMPT_ID = range(len(SPECIAL_TOKENS))

_TOKEN_PATTERN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word and punctuation tokens."""
    return _TOKEN_PATTERN.findall(text.lower())


class Vocab:
    """Dense token↔id map; ids 0-4 are the special tokens."""

    def __init__(self, tokens: Iterable[str]) -> None:
        """
        Build from tokens in id order (specials are prepended when absent).

        Raises:
            DataError: If a token repeats
        """
        ordered = list(tokens)
        if tuple(ordered[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            ordered = list(SPECIAL_TOKENS) + ordered
        self._tokens = tuple(ordered)
        self._ids = {token: i for i, token in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise DataError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self._tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._tokens == other._tokens

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def lookup(self, token: str) -> Optional[int]:
        """Get the id of a known (non-special) token, or None."""
        found = self._ids.get(token)
        return None if found is None or found < len(SPECIAL_TOKENS) else found

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        return self._tokens[token_id]

    def encode(self, text: str) -> list[int]:
        return [self.id_of(token) for token in tokenize(text)]

    def save(self, path: Union[str, Path]) -> None:
        """Write UTF-8 lines ``token<TAB>id``."""
        lines = [f"{token}\t{i}\n" for i, token in enumerate(self._tokens)]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocab":
        """
        Read a vocabulary written by save().

        Raises:
            DataError: If ids are not dense in [0, size)
        """
        entries = []
        for line_number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line:
                continue
            token, sep, raw_id = line.rpartition("\t")
            if not sep or not raw_id.isdigit():
                raise DataError(f"vocabulary line {line_number} is malformed: {line!r}")
            entries.append((int(raw_id), token))
        entries.sort()
        if [i for i, _ in entries] != list(range(len(entries))):
            raise DataError(f"vocabulary ids in {path} are not dense")
        return cls(token for _, token in entries)


def build_vocab(corpus: Iterable[str], min_count: int = 1) -> Vocab:
    """
    Build a vocabulary from a text stream.

    Tokens with count >= min_count are kept, ordered by descending frequency
    then lexicographically, after the special tokens.

    Raises:
        DataError: If the corpus has no tokens
    """
    if min_count < 1:
        raise DataError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    for text in corpus:
        counts.update(tokenize(text))
    if not counts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in SPECIAL_TOKENS),
                  key=lambda t: (-counts[t], t))
    return Vocab(kept)


class SlotKind(Enum):
    PROMPT = "P"
    ARG1 = "A1"
    ARG2 = "A2"
    MASK = "MASK"
    SEP = "SEP"


@dataclass(frozen=True)
class Slot:
    kind: SlotKind
    count: int = 1

    def __str__(self) -> str:
        return f"P:{self.count}" if self.kind is SlotKind.PROMPT else self.kind.value


@dataclass(frozen=True)
class PromptTemplate:
    """Ordered slot layout: prompt runs, both arguments, one mask and one separator."""

    slots: tuple[Slot, ...]

    def __post_init__(self) -> None:
        """Validate that each non-prompt slot occurs exactly once."""
        for kind in (SlotKind.ARG1, SlotKind.ARG2, SlotKind.MASK, SlotKind.SEP):
            found = sum(1 for slot in self.slots if slot.kind is kind)
            if found != 1:
                raise LayoutError(f"layout must contain exactly one {kind.value}, found {found}")

    @property
    def n_prompts(self) -> int:
        """K, the total number of soft prompt tokens."""
        return sum(slot.count for slot in self.slots if slot.kind is SlotKind.PROMPT)

    @property
    def layout(self) -> str:
        return " ".join(str(slot) for slot in self.slots)


def parse_layout(spec: str) -> PromptTemplate:
    """
    Parse a layout string such as ``"P:4 A1 P:4 MASK P:4 SEP P:4 A2 P:4"``.

    Raises:
        LayoutError: On malformed atoms, duplicates (with atom position) or missing slots
    """
    slots: list[Slot] = []
    seen: set[SlotKind] = set()
    for position, atom in enumerate(spec.split(), 1):
        if atom.startswith("P:"):
            raw = atom[2:]
            if not raw.isdigit():
                raise LayoutError(f"malformed prompt atom {atom!r} at position {position}")
            slots.append(Slot(SlotKind.PROMPT, int(raw)))
            continue
        try:
            kind = SlotKind(atom)
        except ValueError:
            raise LayoutError(f"unknown layout atom {atom!r} at position {position}") from None
        if kind is SlotKind.PROMPT:
            raise LayoutError(f"prompt atom needs a count (P:<n>) at position {position}")
        if kind in seen:
            raise LayoutError(f"duplicate {atom} at position {position}")
        seen.add(kind)
        slots.append(Slot(kind))
    return PromptTemplate(tuple(slots))


def default_template() -> PromptTemplate:
    return parse_layout(DEFAULT_LAYOUT)


@dataclass(frozen=True)
class ModifiedInput:
    """Templated token ids with the positions of prompts, mask and arguments."""

    token_ids: tuple[int, ...]
    prompt_slots: tuple[int, ...]
    mask_position: int
    arg1_span: tuple[int, int]
    arg2_span: tuple[int, int]

    def __len__(self) -> int:
        return len(self.token_ids)


def _truncate(first: list[int], second: list[int], budget: int) -> tuple[list[int], list[int]]:
    keep_first, keep_second = len(first), len(second)
    while keep_first + keep_second > budget:
        if keep_first >= keep_second:
            keep_first -= 1
        else:
            keep_second -= 1
    return first[:keep_first], second[:keep_second]


def apply_template(
    template: PromptTemplate, arg1: str, arg2: str, vocab: Vocab, max_len: int
) -> ModifiedInput:
    """
    Project an argument pair through the template.

    Arguments are truncated from their ends, one token at a time from the
    longer argument (arg1 on ties), until the input fits ``max_len``;
    prompts, mask and separator are never truncated.

    Raises:
        DataError: If an argument is empty after tokenization
        LengthError: If the template leaves no room for one token per argument
    """
    first, second = vocab.encode(arg1), vocab.encode(arg2)
    if not first:
        raise DataError("arg1 is empty after tokenization")
    if not second:
        raise DataError("arg2 is empty after tokenization")
    fixed = template.n_prompts + 2
    if fixed + 2 > max_len:
        raise LengthError(f"template needs {fixed} positions plus arguments, max_len is {max_len}")
    first, second = _truncate(first, second, max_len - fixed)

    ids: list[int] = []
    prompt_slots: list[int] = []
    spans: dict[SlotKind, tuple[int, int]] = {}
    mask_position = -1
    for slot in template.slots:
        start = len(ids)
        if slot.kind is SlotKind.PROMPT:
            prompt_slots.extend(range(start, start + slot.count))
            ids.extend([PROMPT_ID] * slot.count)
        elif slot.kind is SlotKind.MASK:
            mask_position = start
            ids.append(MASK_ID)
        elif slot.kind is SlotKind.SEP:
            ids.append(SEP_ID)
        else:
            ids.extend(first if slot.kind is SlotKind.ARG1 else second)
            spans[slot.kind] = (start, len(ids))

    return ModifiedInput(
        token_ids=tuple(ids),
        prompt_slots=tuple(prompt_slots),
        mask_position=mask_position,
        arg1_span=spans[SlotKind.ARG1],
        arg2_span=spans[SlotKind.ARG2],
    )
