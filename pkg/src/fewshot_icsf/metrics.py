"""Intent accuracy, exact-match span F1 and seed/episode aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

OUTSIDE = "O"


class MetricContractError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Span:
    label: str
    start: int
    end: int  # exclusive


@dataclass
class EpisodeMetrics:
    ic_accuracy: float = 0.0
    slot_precision: float = 0.0
    slot_recall: float = 0.0
    slot_f1: float = 0.0
    queries: int = 0
    gold_spans: int = 0
    predicted_spans: int = 0
    matched_spans: int = 0


def ic_accuracy(predictions: Sequence[str], gold: Sequence[str]) -> float:
    if len(predictions) != len(gold):
        raise MetricContractError(f"{len(predictions)} predictions for {len(gold)} gold intents")
    if not gold:
        return 0.0
    return sum(p == g for p, g in zip(predictions, gold)) / len(gold)


def _split_tag(label: str) -> tuple[str, str]:
    if label[:2] in ("B-", "I-"):
        return label[0], label[2:]
    return "", label


def extract_spans(labels: Sequence[str], outside: str = OUTSIDE) -> set[Span]:
    """Maximal runs of one non-outside label become spans.

    A ``B-`` tag always opens a new span; ``I-x`` and bare ``x`` continue a
    run of the same type.
    """
    spans: set[Span] = set()
    current: str | None = None
    start = 0
    for i, raw in enumerate(labels):
        tag, kind = _split_tag(raw)
        is_outside = raw == outside or kind == outside
        if current is not None and (is_outside or kind != current or tag == "B"):
            spans.add(Span(current, start, i))
            current = None
        if not is_outside and current is None:
            current, start = kind, i
    if current is not None:
        spans.add(Span(current, start, len(labels)))
    return spans


def _prf(matched: int, predicted: int, gold: int) -> tuple[float, float, float]:
    p = matched / predicted if predicted else 0.0
    r = matched / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def span_f1(predicted: Sequence[Sequence[str]], gold: Sequence[Sequence[str]],
            outside: str = OUTSIDE) -> EpisodeMetrics:
    """Micro-averaged exact-match span precision/recall/F1 over utterances."""
    if len(predicted) != len(gold):
        raise MetricContractError(f"{len(predicted)} predicted sequences for {len(gold)} gold")
    n_pred = n_gold = n_match = 0
    for k, (p_seq, g_seq) in enumerate(zip(predicted, gold)):
        if len(p_seq) != len(g_seq):
            raise MetricContractError(
                f"utterance {k}: {len(p_seq)} predicted labels for {len(g_seq)} tokens")
        p_spans = extract_spans(p_seq, outside)
        g_spans = extract_spans(g_seq, outside)
        n_pred += len(p_spans)
        n_gold += len(g_spans)
        n_match += len(p_spans & g_spans)
    p, r, f = _prf(n_match, n_pred, n_gold)
    return EpisodeMetrics(slot_precision=p, slot_recall=r, slot_f1=f, gold_spans=n_gold,
                          predicted_spans=n_pred, matched_spans=n_match)


def episode_metrics(pred_intents: Sequence[str], gold_intents: Sequence[str],
                    pred_slots: Sequence[Sequence[str]], gold_slots: Sequence[Sequence[str]],
                    outside: str = OUTSIDE) -> EpisodeMetrics:
    m = span_f1(pred_slots, gold_slots, outside)
    m.ic_accuracy = ic_accuracy(pred_intents, gold_intents)
    m.queries = len(gold_intents)
    return m


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0


def _sample_std(xs: Sequence[float]) -> float:
    if len(xs) < 2:
        return 0.0
    mu = _mean(xs)
    return math.sqrt(math.fsum((x - mu) ** 2 for x in xs) / (len(xs) - 1))


@dataclass
class AggregateReport:
    ic_mean: float
    ic_std: float
    f1_mean: float
    f1_std: float
    episodes: int
    seeds: list[int] = field(default_factory=list)
    # per-seed: mean over episodes and sample std over episodes
    per_seed_ic: list[tuple[float, float]] = field(default_factory=list)
    per_seed_f1: list[tuple[float, float]] = field(default_factory=list)


def aggregate(per_seed: Sequence[Iterable[EpisodeMetrics]], seeds: Sequence[int] | None = None) -> AggregateReport:
    """Mean over episodes within each seed, then mean and sample std over seeds."""
    per_seed = [list(ms) for ms in per_seed]
    if not per_seed or any(not ms for ms in per_seed):
        raise MetricContractError("aggregate needs at least one episode per seed")
    ic_stats = [(_mean([m.ic_accuracy for m in ms]), _sample_std([m.ic_accuracy for m in ms]))
                for ms in per_seed]
    f1_stats = [(_mean([m.slot_f1 for m in ms]), _sample_std([m.slot_f1 for m in ms]))
                for ms in per_seed]
    ic_means = [s[0] for s in ic_stats]
    f1_means = [s[0] for s in f1_stats]
    counts = {len(ms) for ms in per_seed}
    return AggregateReport(
        ic_mean=_mean(ic_means), ic_std=_sample_std(ic_means),
        f1_mean=_mean(f1_means), f1_std=_sample_std(f1_means),
        episodes=counts.pop() if len(counts) == 1 else max(len(ms) for ms in per_seed),
        seeds=list(seeds) if seeds is not None else list(range(len(per_seed))),
        per_seed_ic=ic_stats, per_seed_f1=f1_stats,
    )
