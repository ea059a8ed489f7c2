"""Stroke-level label codec.

Characters are rewritten as sequences of basic-stroke ids; per-word
sequences are concatenated and terminated with an eos id (0). The
character-to-stroke tables are shipped as data files so alternative
decompositions can be plugged in without code changes.
"""

from __future__ import annotations

import hashlib
import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

EOS_ID = 0

# required coverage per declared script
_REQUIRED_CHARS = {
    "latin_digits": set("abcdefghijklmnopqrstuvwxyz0123456789"),
}

_REQUIRED_STROKE_COUNT = {
    "latin_digits": 9,
    "chinese": 5,
}


class StrokeTableError(ValueError):
    """Raised when a stroke table file is missing, malformed, or inconsistent."""


class UnknownCharacterError(KeyError):
    """Raised when a character has no stroke decomposition in the table."""


@dataclass(frozen=True)
class StrokeTable:
    """Mapping from characters to basic-stroke id sequences."""

    script_name: str
    basic_strokes: tuple[str, ...]  # index i holds the name of stroke id i+1
    char_to_strokes: dict[str, tuple[int, ...]]
    eos_id: int = EOS_ID

    @property
    def basic_stroke_count(self) -> int:
        return len(self.basic_strokes)

    @property
    def start_id(self) -> int:
        # reserved id just past the stroke range
        return self.basic_stroke_count + 1

    @property
    def vocab_size(self) -> int:
        """Number of ids a stroke-sequence model must handle (strokes + eos + start)."""
        return self.basic_stroke_count + 2

    def stroke_id(self, name: str) -> int:
        try:
            return self.basic_strokes.index(name) + 1
        except ValueError:
            raise StrokeTableError(f"unknown stroke name: {name!r}") from None

    def table_hash(self) -> str:
        """Stable content hash, used to tie checkpoints to the table they trained with."""
        h = hashlib.sha256()
        h.update(self.script_name.encode())
        for name in self.basic_strokes:
            h.update(b"\0" + name.encode())
        for ch in sorted(self.char_to_strokes):
            ids = ",".join(map(str, self.char_to_strokes[ch]))
            h.update(b"\0" + ch.encode() + b"=" + ids.encode())
        return h.hexdigest()


@dataclass(frozen=True)
class StrokeLabel:
    """Stroke-id sequence for a word, terminated by the eos id."""

    ids: tuple[int, ...]
    source_text: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.ids or self.ids[-1] != EOS_ID:
            raise ValueError("stroke label must end with eos id 0")
        if EOS_ID in self.ids[:-1]:
            raise ValueError("eos id may only appear at the final position")

    def __len__(self) -> int:
        return len(self.ids)


def _parse_char_field(token: str) -> str:
    if token.upper().startswith("U+"):
        return chr(int(token[2:], 16))
    if len(token) != 1:
        raise StrokeTableError(f"char field must be one glyph or U+XXXX, got {token!r}")
    return token


def load_stroke_table(path: str | Path) -> StrokeTable:
    """Parse a `.strokes` table file and validate its invariants."""
    path = Path(path)
    if not path.is_file():
        raise StrokeTableError(f"stroke table file not found: {path}")

    script_name = None
    declared_count = None
    stroke_names: dict[int, str] = {}
    char_to_strokes: dict[str, tuple[int, ...]] = {}

    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "script":
                if len(parts) != 4 or parts[2] != "strokes":
                    raise StrokeTableError("header must be `script <name> strokes <k>`")
                script_name = parts[1]
                declared_count = int(parts[3])
            elif kind == "stroke":
                sid = int(parts[1])
                if sid in stroke_names:
                    raise StrokeTableError(f"duplicate stroke id {sid}")
                stroke_names[sid] = parts[2]
            elif kind == "char":
                ch = _parse_char_field(parts[1]).lower()
                if ch in char_to_strokes:
                    raise StrokeTableError(f"duplicate character entry {ch!r}")
                ids = tuple(int(t) for t in parts[2].split(","))
                if not ids:
                    raise StrokeTableError(f"empty stroke sequence for {ch!r}")
                char_to_strokes[ch] = ids
            else:
                raise StrokeTableError(f"unknown directive {kind!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, StrokeTableError):
                raise StrokeTableError(f"{path}:{lineno}: {exc}") from None
            raise StrokeTableError(f"{path}:{lineno}: malformed line {raw!r}") from None

    if script_name is None or declared_count is None:
        raise StrokeTableError(f"{path}: missing `script <name> strokes <k>` header")
    if sorted(stroke_names) != list(range(1, declared_count + 1)):
        raise StrokeTableError(
            f"{path}: stroke ids must be exactly 1..{declared_count}, got {sorted(stroke_names)}"
        )
    required_count = _REQUIRED_STROKE_COUNT.get(script_name)
    if required_count is not None and declared_count != required_count:
        raise StrokeTableError(
            f"{path}: script {script_name!r} requires {required_count} basic strokes"
        )
    for ch, ids in char_to_strokes.items():
        for sid in ids:
            if not 1 <= sid <= declared_count:
                raise StrokeTableError(
                    f"{path}: stroke id out of range for char {ch!r}: {sid}"
                )
    required = _REQUIRED_CHARS.get(script_name)
    if required is not None:
        missing = required - set(char_to_strokes)
        extra = set(char_to_strokes) - required
        if missing:
            raise StrokeTableError(f"{path}: missing required characters: {sorted(missing)}")
        if extra:
            raise StrokeTableError(f"{path}: unexpected characters for script: {sorted(extra)}")

    return StrokeTable(
        script_name=script_name,
        basic_strokes=tuple(stroke_names[i] for i in range(1, declared_count + 1)),
        char_to_strokes=char_to_strokes,
    )


def builtin_table_path(name: str) -> Path:
    """Path of a stroke table shipped with the package (`latin_digits` or `chinese`)."""
    res = importlib.resources.files("strokegestalt") / "data" / f"{name}.strokes"
    return Path(str(res))


def load_builtin_table(name: str = "latin_digits") -> StrokeTable:
    return load_stroke_table(builtin_table_path(name))


def decompose_char(table: StrokeTable, c: str) -> tuple[int, ...]:
    """Stroke-id sequence for one character; uppercase folds to lowercase."""
    if len(c) != 1:
        raise UnknownCharacterError(f"expected a single character, got {c!r}")
    key = c.lower()
    try:
        return table.char_to_strokes[key]
    except KeyError:
        raise UnknownCharacterError(f"character {c!r} not in stroke table") from None


def encode_label(table: StrokeTable, text: str) -> StrokeLabel:
    """Concatenate per-character decompositions and append the eos id."""
    if not text:
        raise ValueError("cannot encode empty text")
    ids: list[int] = []
    for c in text:
        ids.extend(decompose_char(table, c))
    ids.append(EOS_ID)
    return StrokeLabel(ids=tuple(ids), source_text=text)


def shift_right(label: StrokeLabel, start_id: int) -> tuple[int, ...]:
    """Decoder input for teacher forcing: drop the last id, prepend the start id."""
    return (start_id,) + label.ids[:-1]
