from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..metrics import extract_spans
from ..sampling import FewShotSplit
from .corpus import OUTSIDE, UtteranceRecord

SPLIT_NAMES = ("train", "dev", "test")


class SplitConfigError(ValueError):
    pass


@dataclass
class SplitConfig:
    """Intent assignment of one dataset; ``dev`` may be empty."""

    dataset: str
    train: list[str]
    test: list[str]
    dev: list[str] = field(default_factory=list)

    def __post_init__(self):
        groups = {"train": self.train, "dev": self.dev, "test": self.test}
        for name, intents in groups.items():
            if len(set(intents)) != len(intents):
                raise SplitConfigError(f"{self.dataset}: duplicate intent in {name} list")
        for a, b in (("train", "dev"), ("train", "test"), ("dev", "test")):
            shared = set(groups[a]) & set(groups[b])
            if shared:
                raise SplitConfigError(f"{self.dataset}: intents {sorted(shared)} appear in both {a} and {b}")

    def assignment(self, name: str) -> list[str]:
        return {"train": self.train, "dev": self.dev, "test": self.test}[name]


def read_split_config(path: str | Path) -> dict[str, SplitConfig]:
    """JSON object ``{dataset: {"train": [...], "dev": [...], "test": [...]}}``."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise SplitConfigError(f"{path}: expected an object keyed by dataset name")
    out = {}
    for dataset, groups in raw.items():
        unknown = set(groups) - set(SPLIT_NAMES)
        if unknown:
            raise SplitConfigError(f"{path}: dataset {dataset!r} has unknown keys {sorted(unknown)}")
        if "train" not in groups or "test" not in groups:
            raise SplitConfigError(f"{path}: dataset {dataset!r} needs 'train' and 'test' lists")
        out[dataset] = SplitConfig(dataset, list(groups["train"]), list(groups["test"]),
                                   list(groups.get("dev", [])))
    return out


@dataclass
class SplitStats:
    utterances: int
    intents: int
    slot_labels: int
    slot_values: int

    def as_row(self) -> list[int]:
        return [self.utterances, self.intents, self.slot_labels, self.slot_values]


def _strip_tag(label: str) -> str:
    return label[2:] if label[:2] in ("B-", "I-") else label


def split_stats(records: Sequence[UtteranceRecord], outside: str = OUTSIDE) -> SplitStats:
    """Counts in the layout of a dataset statistics table.

    Slot values are distinct surface strings per slot label.
    """
    labels = {_strip_tag(s) for r in records for s in r.slots if s != outside}
    values = set()
    for r in records:
        for span in extract_spans(r.slots, outside):
            values.add((span.label, " ".join(r.tokens[span.start:span.end])))
    return SplitStats(len(records), len({r.intent for r in records}), len(labels), len(values))


def generate_splits(records: Sequence[UtteranceRecord], config: SplitConfig
                    ) -> tuple[dict[str, FewShotSplit], dict[str, SplitStats]]:
    """Partition ``records`` by intent; an empty dev list yields no dev split.

    Records whose intent is not assigned anywhere are dropped. The returned
    statistics include a ``total`` row over all assigned records.
    """
    present = {r.intent for r in records}
    for name in SPLIT_NAMES:
        missing = [i for i in config.assignment(name) if i not in present]
        if missing:
            raise SplitConfigError(f"{config.dataset}: {name} intents {missing} not found in data")
    splits: dict[str, FewShotSplit] = {}
    stats: dict[str, SplitStats] = {}
    assigned: list[UtteranceRecord] = []
    for name in SPLIT_NAMES:
        wanted = set(config.assignment(name))
        if not wanted:
            continue
        members = [r for r in records if r.intent in wanted]
        splits[name] = FewShotSplit.from_records(name, members, config.dataset)
        stats[name] = split_stats(members)
        assigned.extend(members)
    stats["total"] = split_stats(assigned)
    return splits, stats


def render_stats_table(stats: Mapping[str, Mapping[str, SplitStats]]) -> str:
    """Plain-text table: one block of #Utt/#IC/#SL/#SV columns per dataset."""
    datasets = list(stats)
    header = ["Split"] + [f"{d} {col}" for d in datasets for col in ("#Utt", "#IC", "#SL", "#SV")]
    rows = [header]
    for split in (*SPLIT_NAMES, "total"):
        row = [split.capitalize()]
        for d in datasets:
            s = stats[d].get(split)
            row.extend([f"{v:,}" for v in s.as_row()] if s else ["-"] * 4)
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in rows) + "\n"
