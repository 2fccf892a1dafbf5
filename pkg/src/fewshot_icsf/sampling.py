"""Variable-way, variable-shot episode construction.

An episode is built in four draws: the way ``n`` and its classes, the query
shot ``k_q``, a support budget ``|S|`` scaled by ``beta``, and per-class
support shots ``k_l`` proportional to noisy class frequencies. Slot labels
seen on only one side of the support/query divide are then rewritten to the
outside label so that evaluation never asks for a label the support set
cannot teach.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .data.corpus import OUTSIDE, UtteranceRecord

MIN_WAY = 3
LOG_HALF, LOG_TWO = math.log(0.5), math.log(2.0)


class SamplingError(ValueError):
    pass


class SplitTooSmallError(SamplingError):
    pass


class ClassTooSmallError(SamplingError):
    pass


class ClassExhaustedError(SamplingError):
    pass


@dataclass
class FewShotSplit:
    name: str
    examples: dict[str, list[UtteranceRecord]]
    dataset: str = ""

    def __post_init__(self):
        for label, xs in self.examples.items():
            if not xs:
                raise ValueError(f"split {self.name}: class {label!r} has no examples")
            for r in xs:
                if r.intent != label:
                    raise ValueError(f"split {self.name}: record {r.id} has intent {r.intent!r}, filed under {label!r}")

    @classmethod
    def from_records(cls, name: str, records: Sequence[UtteranceRecord], dataset: str = "") -> FewShotSplit:
        examples: dict[str, list[UtteranceRecord]] = {}
        for r in records:
            examples.setdefault(r.intent, []).append(r)
        return cls(name, {k: examples[k] for k in sorted(examples)}, dataset)

    @property
    def classes(self) -> list[str]:
        return sorted(self.examples)

    def sizes(self) -> dict[str, int]:
        return {label: len(xs) for label, xs in self.examples.items()}

    def records(self) -> list[UtteranceRecord]:
        return [r for label in self.classes for r in self.examples[label]]

    def __len__(self) -> int:
        return sum(len(xs) for xs in self.examples.values())


@dataclass
class SamplerConfig:
    k_max: int
    seed: int = 0
    query_cap: int = 10
    per_class_cap: int = 20

    def __post_init__(self):
        if self.k_max < MIN_WAY:
            raise ValueError(f"k_max must be at least {MIN_WAY}, got {self.k_max}")
        if self.query_cap < 1 or self.per_class_cap < 1:
            raise ValueError("query_cap and per_class_cap must be positive")


@dataclass
class EpisodeTrace:
    way: int
    classes: list[str]
    query_shot: int
    beta: float
    alpha: dict[str, float]
    proportion: dict[str, float]
    shots: dict[str, int]
    support_size: int
    k_max: int


@dataclass(frozen=True)
class EpisodeExample:
    id: str
    tokens: tuple[str, ...]
    slots: tuple[str, ...]
    intent: str
    remapped: tuple[int, ...] = ()  # token positions rewritten to the sentinel


@dataclass
class Episode:
    support: list[EpisodeExample]
    query: list[EpisodeExample]
    trace: EpisodeTrace
    source_dataset: str = ""

    @property
    def intents(self) -> list[str]:
        return sorted({ex.intent for ex in self.support})

    @property
    def slot_labels(self) -> list[str]:
        return sorted({s for ex in self.support for s in ex.slots})

    def to_dict(self) -> dict:
        def ex(e: EpisodeExample) -> dict:
            return {"id": e.id, "intent": e.intent, "tokens": list(e.tokens),
                    "slots": list(e.slots), "remapped": list(e.remapped)}
        return {"source_dataset": self.source_dataset, "trace": asdict(self.trace),
                "support": [ex(e) for e in self.support], "query": [ex(e) for e in self.query]}

    @classmethod
    def from_dict(cls, d: Mapping) -> Episode:
        def ex(e) -> EpisodeExample:
            return EpisodeExample(e["id"], tuple(e["tokens"]), tuple(e["slots"]), e["intent"],
                                  tuple(e.get("remapped", ())))
        return cls([ex(e) for e in d["support"]], [ex(e) for e in d["query"]],
                   EpisodeTrace(**d["trace"]), d.get("source_dataset", ""))


def episode_rng(seed: int, *counter: int) -> np.random.Generator:
    """Independent generator for one (seed, counter...) coordinate."""
    key = tuple(int(c) & 0xFFFFFFFF for c in counter)
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=key))


# --------------------------------------------------------------------------
# the individual draws


def sample_way(classes: Sequence[str], rng: np.random.Generator) -> tuple[int, list[str]]:
    classes = sorted(classes)
    if len(classes) < MIN_WAY:
        raise SplitTooSmallError(f"split has {len(classes)} classes; need at least {MIN_WAY}")
    n = int(rng.integers(MIN_WAY, len(classes) + 1))
    picked = rng.choice(len(classes), size=n, replace=False)
    return n, [classes[i] for i in picked]


def sample_query_shot(classes: Sequence[str], sizes: Mapping[str, int], query_cap: int = 10) -> int:
    if not classes:
        raise SamplingError("no classes to sample a query shot for")
    smallest = min(classes, key=lambda l: (sizes[l], l))
    k_q = min(query_cap, sizes[smallest] // 2)
    if k_q < 1:
        raise ClassTooSmallError(f"class {smallest!r} has {sizes[smallest]} example(s); need at least 2")
    return k_q


def support_budget(classes: Sequence[str], sizes: Mapping[str, int], query_shot: int, beta: float,
                   k_max: int, per_class_cap: int = 20) -> int:
    total = sum(math.ceil(beta * min(per_class_cap, sizes[l] - query_shot)) for l in classes)
    return min(k_max, total)


def sample_support_budget(classes: Sequence[str], sizes: Mapping[str, int], query_shot: int,
                          k_max: int, rng: np.random.Generator, per_class_cap: int = 20) -> tuple[float, int]:
    beta = 1.0 - rng.random()  # uniform on (0, 1]
    return beta, support_budget(classes, sizes, query_shot, beta, k_max, per_class_cap)


def class_shots(classes: Sequence[str], sizes: Mapping[str, int], query_shot: int, support_size: int,
                alpha: Mapping[str, float]) -> tuple[dict[str, float], dict[str, int]]:
    if support_size < len(classes):
        raise SamplingError(f"support budget {support_size} is smaller than the way {len(classes)}")
    weights = {l: math.exp(alpha[l]) * sizes[l] for l in classes}
    norm = math.fsum(weights.values())
    proportion = {l: weights[l] / norm for l in classes}
    free = support_size - len(classes)
    shots = {l: min(math.floor(proportion[l] * free) + 1, sizes[l] - query_shot) for l in classes}
    return proportion, shots


def sample_class_shots(classes: Sequence[str], sizes: Mapping[str, int], query_shot: int,
                       support_size: int, rng: np.random.Generator):
    alpha = {l: float(rng.uniform(LOG_HALF, LOG_TWO)) for l in classes}
    proportion, shots = class_shots(classes, sizes, query_shot, support_size, alpha)
    return alpha, proportion, shots


def sample_trace(split: FewShotSplit, config: SamplerConfig, rng: np.random.Generator) -> EpisodeTrace:
    sizes = split.sizes()
    n, classes = sample_way(split.classes, rng)
    k_q = sample_query_shot(classes, sizes, config.query_cap)
    beta, budget = sample_support_budget(classes, sizes, k_q, config.k_max, rng, config.per_class_cap)
    alpha, proportion, shots = sample_class_shots(classes, sizes, k_q, budget, rng)
    return EpisodeTrace(n, classes, k_q, beta, alpha, proportion, shots, budget, config.k_max)


# --------------------------------------------------------------------------
# assembly


def remap_unshared_slots(support: list[EpisodeExample], query: list[EpisodeExample],
                         sentinel: str = OUTSIDE) -> tuple[list[EpisodeExample], list[EpisodeExample]]:
    """Rewrite slot labels that occur on only one side to ``sentinel``."""
    s_labels = {s for ex in support for s in ex.slots} - {sentinel}
    q_labels = {s for ex in query for s in ex.slots} - {sentinel}
    unshared = s_labels ^ q_labels
    if not unshared:
        return support, query

    def rewrite(ex: EpisodeExample) -> EpisodeExample:
        hits = [j for j, s in enumerate(ex.slots) if s in unshared]
        if not hits:
            return ex
        slots = tuple(sentinel if s in unshared else s for s in ex.slots)
        return EpisodeExample(ex.id, ex.tokens, slots, ex.intent, tuple(sorted(set(ex.remapped) | set(hits))))

    return [rewrite(e) for e in support], [rewrite(e) for e in query]


def _as_example(r: UtteranceRecord) -> EpisodeExample:
    return EpisodeExample(r.id, r.tokens, r.slots, r.intent)


def assemble_episode(split: FewShotSplit, trace: EpisodeTrace, rng: np.random.Generator,
                     sentinel: str = OUTSIDE) -> Episode:
    support: list[EpisodeExample] = []
    query: list[EpisodeExample] = []
    for label in trace.classes:
        pool = split.examples[label]
        k, q = trace.shots[label], trace.query_shot
        if k + q > len(pool):
            raise ClassExhaustedError(f"class {label!r}: need {k}+{q} examples, have {len(pool)}")
        order = rng.permutation(len(pool))
        support.extend(_as_example(pool[i]) for i in order[:k])
        query.extend(_as_example(pool[i]) for i in order[k:k + q])
    support, query = remap_unshared_slots(support, query, sentinel)
    return Episode(support, query, trace, split.dataset)


def sample_episode(split: FewShotSplit, config: SamplerConfig, rng: np.random.Generator) -> Episode:
    trace = sample_trace(split, config, rng)
    return assemble_episode(split, trace, rng)


class EpisodeSampler:
    """Replayable stream of episodes from a fixed split.

    Episode ``i`` depends only on ``(config.seed, i)``.
    """

    def __init__(self, split: FewShotSplit, config: SamplerConfig, stream: int = 0):
        self.split = split
        self.config = config
        self.stream = stream

    def episode(self, index: int) -> Episode:
        return sample_episode(self.split, self.config, episode_rng(self.config.seed, self.stream, index))

    def take(self, count: int) -> Iterator[Episode]:
        for i in range(count):
            yield self.episode(i)


# --------------------------------------------------------------------------
# buffered training source


class EpisodeBuffer:
    """Pool of not-yet-used examples of one training split.

    Sampled episodes are removed from the pool. Once fewer than three classes
    keep at least two examples the pool is refilled with the whole split.
    """

    def __init__(self, split: FewShotSplit):
        self.split = split
        self.refreshes = 0
        self._remaining: dict[str, list[UtteranceRecord]] = {}
        self.refresh()
        self.refreshes = 0

    def refresh(self) -> None:
        self._remaining = {l: list(xs) for l, xs in self.split.examples.items()}
        self.refreshes += 1

    def remaining(self) -> int:
        return sum(len(xs) for xs in self._remaining.values())

    def view(self) -> FewShotSplit:
        usable = {l: xs for l, xs in self._remaining.items() if len(xs) >= 2}
        return FewShotSplit(self.split.name, {l: usable[l] for l in sorted(usable)}, self.split.dataset)

    def can_supply(self) -> bool:
        return sum(1 for xs in self._remaining.values() if len(xs) >= 2) >= MIN_WAY

    def draw(self, config: SamplerConfig, rng: np.random.Generator) -> Episode:
        if not self.can_supply():
            self.refresh()
        episode = sample_episode(self.view(), config, rng)
        used = {ex.id for ex in episode.support} | {ex.id for ex in episode.query}
        for label in episode.trace.classes:
            self._remaining[label] = [r for r in self._remaining[label] if r.id not in used]
        return episode


def next_joint_dataset(buffers: Mapping[str, EpisodeBuffer], rng: np.random.Generator) -> str:
    if not buffers:
        raise SamplingError("no datasets registered")
    names = sorted(buffers)
    return names[int(rng.integers(len(names)))]


@dataclass
class JointEpisodeSource:
    """Training episodes drawn from one or more datasets.

    Each episode first picks its dataset uniformly, then draws from that
    dataset's buffer. Episode ``i`` uses the generator for ``(seed, i)``.
    """

    splits: Mapping[str, FewShotSplit]
    config: SamplerConfig
    buffers: dict[str, EpisodeBuffer] = field(init=False)
    counter: int = field(init=False, default=0)

    def __post_init__(self):
        self.buffers = {name: EpisodeBuffer(split) for name, split in self.splits.items()}

    def next_episode(self) -> Episode:
        rng = episode_rng(self.config.seed, 1, self.counter)
        self.counter += 1
        name = next_joint_dataset(self.buffers, rng)
        episode = self.buffers[name].draw(self.config, rng)
        episode.source_dataset = name
        return episode
