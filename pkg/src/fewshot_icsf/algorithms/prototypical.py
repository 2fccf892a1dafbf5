"""Prototypical networks for joint intent classification and slot filling.

Intent prototypes average the sentence vectors of each support class; slot
prototypes average the token representations carrying each slot label
(outside label included). Queries are scored by a softmax over negative
squared Euclidean distances to the prototypes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..autodiff import ParameterSet, Tensor
from ..autodiff import tensor as T
from ..sampling import Episode, EpisodeExample
from .common import EpisodePrediction, JointModel, _prediction, label_targets, split_rows


class PrototypeError(ValueError):
    pass


@dataclass
class PrototypeSet:
    intent_labels: list[str]
    intent_prototypes: Tensor   # (|intents|, D)
    intent_counts: list[int]
    slot_labels: list[str]
    slot_prototypes: Tensor     # (|slot labels|, D)
    slot_counts: list[int]

    def intent(self, label: str) -> np.ndarray:
        return self.intent_prototypes.data[self.intent_labels.index(label)]

    def slot(self, label: str) -> np.ndarray:
        return self.slot_prototypes.data[self.slot_labels.index(label)]


def averaging_matrix(labels: Sequence[str], vocabulary: Sequence[str],
                     width: int | None = None) -> tuple[np.ndarray, list[int]]:
    """Row ``k`` averages the columns whose label is ``vocabulary[k]``."""
    width = len(labels) if width is None else width
    mat = np.zeros((len(vocabulary), width))
    index = {l: k for k, l in enumerate(vocabulary)}
    for j, l in enumerate(labels):
        mat[index[l], j] = 1.0
    counts = mat.sum(axis=1)
    mat /= counts[:, None]
    return mat, [int(c) for c in counts]


def prototypes_from_features(sentence: Tensor, tokens: Tensor, support: Sequence[EpisodeExample]) -> PrototypeSet:
    """Prototypes from support features occupying the leading rows of ``sentence``/``tokens``."""
    if not support:
        raise PrototypeError("support set is empty")
    intents = [ex.intent for ex in support]
    slots = [s for ex in support for s in ex.slots]
    intent_labels, slot_labels = sorted(set(intents)), sorted(set(slots))
    a_int, c_int = averaging_matrix(intents, intent_labels, sentence.shape[0])
    a_slot, c_slot = averaging_matrix(slots, slot_labels, tokens.shape[0])
    return PrototypeSet(intent_labels, T.matmul(a_int, sentence), c_int,
                        slot_labels, T.matmul(a_slot, tokens), c_slot)


def compute_prototypes(params: ParameterSet, model: JointModel, support: Sequence[EpisodeExample]) -> PrototypeSet:
    if not support:
        raise PrototypeError("support set is empty")
    sentence, tokens, _ = model.encode(params, support)
    return prototypes_from_features(sentence, tokens, support)


def distance_logits(features: Tensor, prototypes: Tensor) -> Tensor:
    return T.mul(T.squared_distances(features, prototypes), -1.0)


def proto_log_probs(params: ParameterSet, model: JointModel, prototypes: PrototypeSet,
                    query: Sequence[EpisodeExample]) -> EpisodePrediction:
    """Intent and per-token slot log-probabilities for each query utterance."""
    if not prototypes.intent_labels or not prototypes.slot_labels:
        raise PrototypeError("prototype set must cover at least one intent and one slot label")
    with T.no_grad():
        sentence, tokens, spans = model.encode(params, query)
        return predict_from_features(prototypes, sentence.data, tokens.data, spans)


def predict_from_features(prototypes: PrototypeSet, sentence: np.ndarray, tokens: np.ndarray,
                          spans) -> EpisodePrediction:
    with T.no_grad():
        li = T.log_softmax(distance_logits(Tensor._wrap(sentence), prototypes.intent_prototypes.detach()), axis=1).data
        ls = T.log_softmax(distance_logits(Tensor._wrap(tokens), prototypes.slot_prototypes.detach()), axis=1).data
    return _prediction(li, ls, spans, prototypes.intent_labels, prototypes.slot_labels)


def proto_episode_loss(params: ParameterSet, model: JointModel, episode: Episode) -> Tensor:
    """Query-averaged sum of intent NLL and per-token slot NLL.

    Support and query go through the encoder in one batch. Query tokens whose
    label has no support prototype (only possible for the outside label)
    are left out of the slot term.
    """
    support, query = episode.support, episode.query
    sentence, tokens, spans = model.encode(params, list(support) + list(query))
    _, q_rows = split_rows(spans, len(support))
    protos = prototypes_from_features(sentence, tokens, support)

    q_sentence = T.take_rows(sentence, np.arange(len(support), len(support) + len(query)))
    intent_t, ok = label_targets([ex.intent for ex in query], protos.intent_labels)
    if not ok.all():
        raise PrototypeError("query intent missing from the support set")
    loss = T.softmax_cross_entropy(distance_logits(q_sentence, protos.intent_prototypes), intent_t, "sum")

    slot_t, ok = label_targets([s for ex in query for s in ex.slots], protos.slot_labels)
    if ok.any():
        rows = np.asarray(q_rows)[ok]
        q_tokens = T.take_rows(tokens, rows)
        loss = T.add(loss, T.softmax_cross_entropy(distance_logits(q_tokens, protos.slot_prototypes),
                                                    slot_t[ok], "sum"))
    return T.mul(loss, 1.0 / len(query))


def proto_predict(params: ParameterSet, model: JointModel, episode: Episode) -> EpisodePrediction:
    with T.no_grad():
        support, query = episode.support, episode.query
        sentence, tokens, spans = model.encode(params, list(support) + list(query))
        protos = prototypes_from_features(sentence, tokens, support)
        n_s = len(support)
        q_spans = spans[n_s:]
        base = q_spans[0][0]
        q_spans = [(s - base, e - base) for s, e in q_spans]
        return predict_from_features(protos, sentence.data[n_s:], tokens.data[base:], q_spans)
