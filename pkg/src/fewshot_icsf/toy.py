"""Synthetic template corpus for smoke tests and the end-to-end ordering check.

Utterances follow per-intent templates. O tokens are mostly filler words
shared by every intent, plus one intent keyword up front. Each slot value is
introduced by a marker word drawn from a small shared pool, so what carries
over to unseen intents is context ("the tokens after `from`"), not word
identity. Slot values come from slot-specific vocabularies; slot labels are
intent-prefixed and use the IO scheme.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data.corpus import OUTSIDE, UtteranceRecord, write_dataset_file
from .data.splits import SplitConfig
from .encoder import EmbeddingTable, Vocabulary

FILLER_WORDS = ["please", "the", "a", "i", "want", "can", "you", "me", "my", "now", "some", "need"]
MARKER_WORDS = ["to", "from", "at", "with", "for", "on", "in", "of"]


@dataclass
class ToyCorpus:
    records: list[UtteranceRecord]
    split_config: SplitConfig
    intents: list[str]
    slot_labels: list[str]

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(sorted({t for r in self.records for t in r.tokens}))


def _slot_counts(n_slot_labels: int, n_intents: int) -> list[int]:
    # spread slot labels over intents as evenly as possible, at least one each
    return [max(n_slot_labels // n_intents + (1 if i < n_slot_labels % n_intents else 0), 1)
            for i in range(n_intents)]


def make_toy_corpus(seed: int = 0, n_intents: int = 8, n_train: int = 5, n_slot_labels: int = 12,
                    per_intent: int = 200, templates_per_intent: int = 4, values_per_slot: int = 1000,
                    keywords_per_intent: int = 2, dataset: str = "toy") -> ToyCorpus:
    if not 0 < n_train < n_intents:
        raise ValueError("need at least one train and one test intent")
    rng = np.random.default_rng(seed)
    intents = [f"Intent{chr(ord('A') + i)}" for i in range(n_intents)]
    slots_of: dict[str, list[str]] = {}
    markers_of: dict[str, str] = {}
    slot_labels: list[str] = []
    for intent, count in zip(intents, _slot_counts(n_slot_labels, n_intents)):
        names = [f"{intent}:slot{k}" for k in range(count)]
        slots_of[intent] = names
        slot_labels.extend(names)
    order = list(rng.permutation(n_intents))
    train = [intents[i] for i in sorted(order[:n_train])]
    test = [intents[i] for i in sorted(order[n_train:])]

    # Test slots get pairwise distinct markers; train slots cycle through the same
    # markers so each one is seen introducing a value during training.
    test_slots = [s for i in test for s in slots_of[i]]
    train_slots = [s for i in train for s in slots_of[i]]
    if len(test_slots) > min(len(train_slots), len(MARKER_WORDS)):
        raise ValueError("test intents need no more slot labels than train intents and markers")
    markers = [str(m) for m in rng.permutation(MARKER_WORDS)[:len(test_slots)]]
    for name, marker in zip(test_slots, markers):
        markers_of[name] = marker
    for j, name in enumerate(rng.permutation(train_slots)):
        markers_of[str(name)] = markers[j % len(markers)]

    values: dict[str, list[tuple[str, ...]]] = {}
    for label in slot_labels:
        stem = label.replace(":", "_").lower()
        words = [f"{stem}_w{j}" for j in range(values_per_slot + 4)]
        vals = []
        for _ in range(values_per_slot):
            length = 1 if rng.random() < 0.6 else 2
            vals.append(tuple(str(w) for w in rng.choice(words, size=length, replace=False)))
        values[label] = vals

    templates: dict[str, list[list[str]]] = {}
    for intent in intents:
        keywords = [f"{intent.lower()}_kw{j}" for j in range(keywords_per_intent)]
        tpls = []
        for _ in range(templates_per_intent):
            # "*n" stands for up to n filler words, drawn afresh per utterance
            tpl = [str(rng.choice(keywords)), "*2"]
            for slot in rng.permutation(slots_of[intent]):
                tpl += [markers_of[str(slot)], "{" + str(slot) + "}", "*1"]
            tpls.append(tpl)
        templates[intent] = tpls

    records = []
    for intent in intents:
        for k in range(per_intent):
            tpl = templates[intent][int(rng.integers(len(templates[intent])))]
            tokens, labels = [], []
            for item in tpl:
                if item.startswith("{"):
                    label = item[1:-1]
                    val = values[label][int(rng.integers(len(values[label])))]
                    tokens.extend(val)
                    labels.extend([label] * len(val))
                elif item.startswith("*"):
                    fill = rng.choice(FILLER_WORDS, size=int(rng.integers(0, int(item[1:]) + 1)))
                    tokens.extend(str(w) for w in fill)
                    labels.extend([OUTSIDE] * len(fill))
                else:
                    tokens.append(item)
                    labels.append(OUTSIDE)
            records.append(UtteranceRecord(f"{intent}-{k:04d}", tuple(tokens), tuple(labels), intent))
    return ToyCorpus(records, SplitConfig(dataset, train, test), intents, slot_labels)


def write_toy_workspace(directory: str | Path, seed: int = 0, dim: int = 32, **corpus_kwargs) -> dict[str, Path]:
    """Write ``toy.txt``, ``splits.json`` and ``embeddings.txt`` for command-line runs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    corpus = make_toy_corpus(seed, **corpus_kwargs)
    paths = {"corpus": directory / "toy.txt", "splits": directory / "splits.json",
             "embeddings": directory / "embeddings.txt"}
    write_dataset_file(paths["corpus"], corpus.records)
    cfg = corpus.split_config
    paths["splits"].write_text(json.dumps({cfg.dataset: {"train": cfg.train, "dev": cfg.dev, "test": cfg.test}},
                                          indent=2) + "\n", encoding="utf-8")
    table = random_embeddings(corpus.vocabulary(), dim, seed + 1)
    with open(paths["embeddings"], "w", encoding="utf-8") as fh:
        for token, row in zip(table.vocabulary.tokens[1:], table.matrix[1:]):
            fh.write(token + " " + " ".join(repr(float(v)) for v in row) + "\n")
    return paths


def random_embeddings(vocabulary: Vocabulary, dim: int, seed: int = 0, std: float = 1.0) -> EmbeddingTable:
    """I.i.d. Gaussian rows; the unknown-token row is zero."""
    return EmbeddingTable.random(vocabulary, dim, np.random.default_rng(seed), std)


def toy_ordering_experiment(corpus_seed: int = 0, train_seed: int = 0, episodes: int = 2000, k_max: int = 20,
                            dim: int = 32, hidden_dim: int = 32, eval_episodes: int = 100,
                            algorithms: tuple[str, ...] = ("proto", "fomaml", "finetune")) -> dict[str, dict]:
    """Train each algorithm on the toy train intents and score it on test-intent episodes.

    Episodic methods get ``episodes`` training episodes. The baseline gets as
    many passes over the train split as needed to see the same number of
    utterances, so all three algorithms process a comparable amount of data.
    """
    import math
    import time

    from .algorithms import JointModel, TrainLoopConfig, evaluate, init_params, train
    from .data.splits import generate_splits
    from .encoder import EncoderConfig, TokenFeaturizer
    from .metrics import aggregate
    from .sampling import EpisodeSampler, SamplerConfig

    corpus = make_toy_corpus(corpus_seed)
    splits, _ = generate_splits(corpus.records, corpus.split_config)
    table = random_embeddings(corpus.vocabulary(), dim, corpus_seed + 1)
    model = JointModel(EncoderConfig(dim, hidden_dim), TokenFeaturizer(table))
    train_split = {corpus.split_config.dataset: splits["train"]}

    seen = sum(len(ep.support) + len(ep.query)
               for ep in EpisodeSampler(splits["train"], SamplerConfig(k_max, train_seed)).take(episodes))
    baseline_epochs = math.ceil(seen / len(splits["train"]))

    results: dict[str, dict] = {}
    for algorithm in algorithms:
        if algorithm == "finetune":
            config = TrainLoopConfig(algorithm, epochs=baseline_epochs)
        else:
            per_epoch = 100 if episodes % 100 == 0 else episodes
            config = TrainLoopConfig(algorithm, epochs=episodes // per_epoch, episodes_per_epoch=per_epoch)
        start = time.perf_counter()
        params, meta = init_params(config, model, train_split, train_seed)
        train(params, model, config, train_split, k_max, train_seed, None, meta)
        trained = time.perf_counter()
        report = aggregate([evaluate(algorithm, params, model, splits["test"], k_max, train_seed,
                                     eval_episodes, config)])
        results[algorithm] = {"ic": report.ic_mean, "f1": report.f1_mean, "epochs": config.epochs,
                              "train_seconds": trained - start,
                              "eval_seconds": time.perf_counter() - trained}
    return results
