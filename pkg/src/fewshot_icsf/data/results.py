"""Result records: CSV for machines, a grouped text table for people."""
from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from ..metrics import AggregateReport

ALGORITHM_ORDER = {"finetune": 0, "fomaml": 1, "proto": 2}
ALGORITHM_NAMES = {"finetune": "Fine-tune", "fomaml": "foMAML", "proto": "Proto"}


@dataclass(frozen=True)
class ResultRecord:
    """One dataset x algorithm x K_max cell, metrics in percent."""

    dataset: str
    algorithm: str
    k_max: int
    joint: bool
    embedding: str
    ic_mean: float
    ic_std: float
    f1_mean: float
    f1_std: float
    episodes: int
    seeds: tuple[int, ...] = field(default=())

    @classmethod
    def from_report(cls, report: AggregateReport, dataset: str, algorithm: str, k_max: int,
                    joint: bool = False, embedding: str = "GloVe") -> ResultRecord:
        return cls(dataset, algorithm, k_max, joint, embedding,
                   100.0 * report.ic_mean, 100.0 * report.ic_std,
                   100.0 * report.f1_mean, 100.0 * report.f1_std,
                   report.episodes, tuple(report.seeds))

    @property
    def column(self) -> str:
        return f"{self.dataset} (joint)" if self.joint else self.dataset


COLUMNS = [f.name for f in fields(ResultRecord)]


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.2f} +/- {std:.2f}"


def records_to_csv(records: Iterable[ResultRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in sorted(records, key=_sort_key):
        row = list(astuple(r))
        row[COLUMNS.index("joint")] = "true" if r.joint else "false"
        row[COLUMNS.index("seeds")] = ";".join(str(s) for s in r.seeds)
        for name in ("ic_mean", "ic_std", "f1_mean", "f1_std"):
            row[COLUMNS.index(name)] = repr(float(getattr(r, name)))
        writer.writerow(row)
    return buf.getvalue()


def records_from_csv(text: str) -> list[ResultRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is not None and list(reader.fieldnames) != COLUMNS:
        raise ValueError(f"unexpected result columns {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(ResultRecord(
            dataset=row["dataset"], algorithm=row["algorithm"], k_max=int(row["k_max"]),
            joint=row["joint"] == "true", embedding=row["embedding"],
            ic_mean=float(row["ic_mean"]), ic_std=float(row["ic_std"]),
            f1_mean=float(row["f1_mean"]), f1_std=float(row["f1_std"]),
            episodes=int(row["episodes"]),
            seeds=tuple(int(s) for s in row["seeds"].split(";") if s),
        ))
    return out


def _sort_key(r: ResultRecord):
    return (r.k_max, r.embedding, ALGORITHM_ORDER.get(r.algorithm, 99), r.algorithm, r.dataset, r.joint)


def render_tables(records: Sequence[ResultRecord]) -> str:
    """One IC-accuracy and one slot-F1 table per K_max value."""
    out = []
    for k_max in sorted({r.k_max for r in records}):
        group = [r for r in records if r.k_max == k_max]
        columns = sorted({(r.dataset, r.joint) for r in group})
        rows = sorted({(r.embedding, r.algorithm) for r in group},
                      key=lambda er: (er[0], ALGORITHM_ORDER.get(er[1], 99), er[1]))
        index = {(r.embedding, r.algorithm, r.dataset, r.joint): r for r in group}
        for title, attr in (("IC Accuracy", "ic"), ("Slot F1", "f1")):
            header = ["Embed.", "Algorithm"] + [f"{d} (joint)" if j else d for d, j in columns]
            table = [header]
            for emb, alg in rows:
                line = [emb, ALGORITHM_NAMES.get(alg, alg)]
                for d, j in columns:
                    r = index.get((emb, alg, d, j))
                    line.append(format_cell(getattr(r, f"{attr}_mean"), getattr(r, f"{attr}_std")) if r else "-")
                table.append(line)
            widths = [max(len(row[i]) for row in table) for i in range(len(header))]
            out.append(f"K_max = {k_max}: {title}")
            out.extend(" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in table)
            out.append("")
    return "\n".join(out)


def write_results(records: Iterable[ResultRecord], path: str | Path) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and a rendered ``.txt`` table next to it."""
    records = sorted(records, key=_sort_key)
    path = Path(path)
    table_path = path.with_suffix(".txt")
    path.write_text(records_to_csv(records), encoding="utf-8")
    table_path.write_text(render_tables(records), encoding="utf-8")
    return path, table_path


def read_results(path: str | Path) -> list[ResultRecord]:
    return records_from_csv(Path(path).read_text(encoding="utf-8"))
