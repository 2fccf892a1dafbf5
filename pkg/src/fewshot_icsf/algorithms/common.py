from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..autodiff import ParameterSet, Tensor
from ..autodiff import tensor as T
from ..encoder import EncoderConfig, encode_examples, head_forward, linear
from ..sampling import EpisodeExample

Featurizer = Callable[[EpisodeExample], np.ndarray]


@dataclass
class JointModel:
    """Everything besides the trainable arrays needed to run the encoder."""

    config: EncoderConfig
    featurizer: Featurizer

    def inputs(self, examples: Sequence[EpisodeExample]) -> list[np.ndarray]:
        return [self.featurizer(ex) for ex in examples]

    def encode(self, params: ParameterSet, examples: Sequence[EpisodeExample]):
        return encode_examples(params, self.inputs(examples), self.config.slot_repr)


@dataclass
class EpisodePrediction:
    intent_labels: list[str]
    slot_labels: list[str]
    intents: list[str]
    slots: list[list[str]]
    intent_log_probs: np.ndarray             # (|Q|, |intent_labels|)
    slot_log_probs: list[np.ndarray] = field(default_factory=list)  # per query: (m, |slot_labels|)


def label_targets(labels: Sequence[str], vocabulary: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Indices of ``labels`` in ``vocabulary`` and a mask of the ones found."""
    index = {l: i for i, l in enumerate(vocabulary)}
    idx = np.array([index.get(l, -1) for l in labels], dtype=np.intp)
    return idx, idx >= 0


def split_rows(spans: Sequence[tuple[int, int]], first: int) -> tuple[list[int], list[int]]:
    """Token rows of utterances ``[0, first)`` and ``[first, ...)``."""
    head = [r for s, e in spans[:first] for r in range(s, e)]
    tail = [r for s, e in spans[first:] for r in range(s, e)]
    return head, tail


def head_loss(params: ParameterSet, model: JointModel, examples: Sequence[EpisodeExample],
              intent_labels: Sequence[str], slot_labels: Sequence[str]) -> Tensor:
    """Summed intent and token-level slot cross entropy, divided by the utterance count.

    This matches the normalization of the prototypical loss. Tokens whose
    label the slot head does not cover are skipped.
    """
    sentence, tokens, _ = model.encode(params, examples)
    return heads_loss_from_features(params, sentence, tokens, examples, intent_labels, slot_labels)


def heads_loss_from_features(params: ParameterSet, sentence: Tensor, tokens: Tensor,
                             examples: Sequence[EpisodeExample], intent_labels: Sequence[str],
                             slot_labels: Sequence[str]) -> Tensor:
    intent_t, intent_ok = label_targets([ex.intent for ex in examples], intent_labels)
    slot_t, slot_ok = label_targets([s for ex in examples for s in ex.slots], slot_labels)
    if not intent_ok.all():
        raise ValueError("intent outside the head's label set")
    logits_i = linear(sentence, params["intent_head.weight"], params["intent_head.bias"])
    loss = T.softmax_cross_entropy(logits_i, intent_t, "sum")
    if slot_ok.any():
        rows = np.flatnonzero(slot_ok)
        logits_s = linear(T.take_rows(tokens, rows), params["slot_head.weight"], params["slot_head.bias"])
        loss = T.add(loss, T.softmax_cross_entropy(logits_s, slot_t[rows], "sum"))
    return T.mul(loss, 1.0 / len(examples))


def predict_with_heads(params: ParameterSet, sentence: np.ndarray, tokens: np.ndarray,
                       spans: Sequence[tuple[int, int]], intent_labels: Sequence[str],
                       slot_labels: Sequence[str]) -> EpisodePrediction:
    """Argmax predictions from (already computed, constant) features."""
    with T.no_grad():
        li = T.log_softmax(linear(Tensor._wrap(sentence), params["intent_head.weight"],
                                  params["intent_head.bias"]), axis=1).data
        ls = T.log_softmax(linear(Tensor._wrap(tokens), params["slot_head.weight"],
                                  params["slot_head.bias"]), axis=1).data
    return _prediction(li, ls, spans, intent_labels, slot_labels)


def _prediction(intent_lp: np.ndarray, slot_lp: np.ndarray, spans, intent_labels, slot_labels) -> EpisodePrediction:
    intents = [intent_labels[i] for i in intent_lp.argmax(axis=1)]
    per_query = [slot_lp[s:e] for s, e in spans]
    slots = [[slot_labels[j] for j in lp.argmax(axis=1)] for lp in per_query]
    return EpisodePrediction(list(intent_labels), list(slot_labels), intents, slots, intent_lp, per_query)


def gold_of(examples: Sequence[EpisodeExample]) -> tuple[list[str], list[list[str]]]:
    return [ex.intent for ex in examples], [list(ex.slots) for ex in examples]
