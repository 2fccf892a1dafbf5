"""Fine-tune baseline: supervised pre-training, then new heads on a frozen encoder."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from ..autodiff import ParameterSet, adam, backward
from ..autodiff import tensor as T
from ..encoder import init_heads
from ..sampling import Episode, EpisodeExample, episode_rng
from .common import EpisodePrediction, JointModel, head_loss, heads_loss_from_features, predict_with_heads
from .fomaml import encoder_only

log = logging.getLogger(__name__)


@dataclass
class BatchPlan:
    """Shuffled pass over one dataset in fixed-size batches."""

    examples: Sequence[EpisodeExample]
    batch_size: int
    rng: np.random.Generator

    def __post_init__(self):
        self._order: list[int] = []
        self.epochs_started = 0

    def next_batch(self) -> list[EpisodeExample]:
        if not self._order:
            self._order = list(self.rng.permutation(len(self.examples)))
            self.epochs_started += 1
        take, self._order = self._order[:self.batch_size], self._order[self.batch_size:]
        return [self.examples[i] for i in take]


def label_inventory(datasets: Mapping[str, Sequence[EpisodeExample]]) -> tuple[list[str], list[str]]:
    intents = sorted({ex.intent for xs in datasets.values() for ex in xs})
    slots = sorted({s for xs in datasets.values() for ex in xs for s in ex.slots})
    return intents, slots


def init_baseline(encoder: ParameterSet, intents: Sequence[str], slots: Sequence[str],
                  rng: np.random.Generator, dim: int) -> ParameterSet:
    params = ParameterSet(encoder)
    params.update(init_heads(len(intents), len(slots), dim, rng))
    return params


def baseline_pretrain(params: ParameterSet, model: JointModel, datasets: Mapping[str, Sequence[EpisodeExample]],
                      intents: Sequence[str], slots: Sequence[str], epochs: int, seed: int,
                      batch_size: int = 512, learning_rate: float = 0.001,
                      on_epoch: Callable[[int, float], None] | None = None) -> ParameterSet:
    """Mini-batch Adam on intent + slot cross entropy over the training classes.

    With several datasets each batch comes from a uniformly chosen one. An
    epoch is ``ceil(total examples / batch_size)`` steps.
    """
    names = sorted(datasets)
    plans = {n: BatchPlan(datasets[n], batch_size, episode_rng(seed, 2, i)) for i, n in enumerate(names)}
    pick = episode_rng(seed, 3)
    total = sum(len(datasets[n]) for n in names)
    steps_per_epoch = math.ceil(total / batch_size)
    opt = adam(learning_rate)
    for epoch in range(epochs):
        losses = []
        for _ in range(steps_per_epoch):
            name = names[int(pick.integers(len(names)))] if len(names) > 1 else names[0]
            batch = plans[name].next_batch()
            loss = head_loss(params, model, batch, intents, slots)
            backward(loss)
            opt.step(params)
            losses.append(loss.item())
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        log.info("baseline epoch %d loss %.4f", epoch + 1, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
    return params


def baseline_adapt_evaluate(params: ParameterSet, model: JointModel, episode: Episode, steps: int = 10,
                            learning_rate: float = 0.001) -> EpisodePrediction:
    """Train fresh zero-initialized heads on the support set; predict the query.

    The encoder is frozen, so support and query features are computed once
    without recording a graph and only the heads see gradients.
    """
    intents = sorted({ex.intent for ex in episode.support})
    slots = sorted({s for ex in episode.support for s in ex.slots})
    encoder = encoder_only(params)
    with T.no_grad():
        s_sent, s_tok, _ = model.encode(encoder, episode.support)
        q_sent, q_tok, q_spans = model.encode(encoder, episode.query)
    heads = init_heads(len(intents), len(slots), model.config.output_dim)
    opt = adam(learning_rate)
    for _ in range(steps):
        loss = heads_loss_from_features(heads, s_sent.detach(), s_tok.detach(), episode.support, intents, slots)
        backward(loss)
        opt.step(heads)
    return predict_with_heads(heads, q_sent.data, q_tok.data, q_spans, intents, slots)
