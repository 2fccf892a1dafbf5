"""Native corpus format.

One utterance per blank-line separated block::

    # intent: AddToPlaylist
    # id: snips-00017            (optional)
    Please<TAB>O
    add<TAB>O
    Pete<TAB>AddToPlaylist:artist

Blocks without an ``# id:`` line get their 0-based block ordinal as id.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

OUTSIDE = "O"
PREFIX_SEP = ":"


class CorpusFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    tokens: tuple[str, ...]
    slots: tuple[str, ...]
    intent: str

    def __post_init__(self):
        if len(self.tokens) != len(self.slots):
            raise ValueError(f"record {self.id}: {len(self.tokens)} tokens but {len(self.slots)} slots")
        if not self.tokens:
            raise ValueError(f"record {self.id}: empty utterance")

    def __len__(self) -> int:
        return len(self.tokens)


def parse_corpus(text: str, source: str | Path = "<string>") -> list[UtteranceRecord]:
    records: list[UtteranceRecord] = []
    block: list[tuple[int, str]] = []

    def flush():
        if block:
            records.append(_parse_block(block, len(records), source))
            block.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
        else:
            block.append((lineno, line))
    flush()
    return records


def _parse_block(block: list[tuple[int, str]], ordinal: int, source) -> UtteranceRecord:
    first_line, header = block[0]
    if not header.startswith("# intent:"):
        raise CorpusFormatError(source, first_line, "block must start with '# intent: <name>'")
    intent = header[len("# intent:"):].strip()
    if not intent:
        raise CorpusFormatError(source, first_line, "empty intent name")
    rest = block[1:]
    uid = str(ordinal)
    if rest and rest[0][1].startswith("# id:"):
        uid = rest[0][1][len("# id:"):].strip()
        rest = rest[1:]
    if not rest:
        raise CorpusFormatError(source, first_line, "block has no tokens")
    tokens, slots = [], []
    for lineno, line in rest:
        cols = line.split("\t")
        if len(cols) != 2 or not cols[0] or not cols[1]:
            raise CorpusFormatError(source, lineno, f"expected 'token<TAB>slot', got {line!r}")
        tokens.append(cols[0])
        slots.append(cols[1])
    return UtteranceRecord(uid, tuple(tokens), tuple(slots), intent)


def parse_dataset_file(path: str | Path) -> list[UtteranceRecord]:
    path = Path(path)
    return parse_corpus(path.read_text(encoding="utf-8"), path)


def format_corpus(records: Iterable[UtteranceRecord]) -> str:
    blocks = []
    for r in records:
        lines = [f"# intent: {r.intent}", f"# id: {r.id}"]
        lines.extend(f"{tok}\t{slot}" for tok, slot in zip(r.tokens, r.slots))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def write_dataset_file(path: str | Path, records: Iterable[UtteranceRecord]) -> None:
    Path(path).write_text(format_corpus(records), encoding="utf-8")


def prefix_slot(intent: str, slot: str) -> str:
    if slot == OUTSIDE:
        return slot
    tag = ""
    if slot[:2] in ("B-", "I-"):
        tag, slot = slot[:2], slot[2:]
    if not slot.startswith(intent + PREFIX_SEP):
        slot = f"{intent}{PREFIX_SEP}{slot}"
    return tag + slot


def apply_slot_prefixing(records: Iterable[UtteranceRecord]) -> list[UtteranceRecord]:
    """Qualify every non-outside slot label with its utterance's intent.

    Idempotent: labels already carrying the ``<intent>:`` prefix are kept.
    """
    return [
        UtteranceRecord(r.id, r.tokens, tuple(prefix_slot(r.intent, s) for s in r.slots), r.intent)
        for r in records
    ]
