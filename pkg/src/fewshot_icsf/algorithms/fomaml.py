"""First-order MAML with per-episode output heads.

The persistent parameters are the encoder's. Each episode gets fresh heads
sized to its label sets; the inner loop fine-tunes a copy of encoder plus
heads with SGD on the support set, and the query-loss gradient taken at the
adapted copy is handed to the outer optimizer as if it were the gradient at
the original parameters.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..autodiff import Optimizer, ParameterSet, Tensor, backward, sgd
from ..autodiff import tensor as T
from ..encoder import init_heads
from ..sampling import Episode, EpisodeExample
from .common import EpisodePrediction, JointModel, head_loss, predict_with_heads

HeadInit = Callable[[int, int, int], ParameterSet]


def zero_heads(num_intents: int, num_slots: int, dim: int) -> ParameterSet:
    return init_heads(num_intents, num_slots, dim)


def finetune_steps(params: ParameterSet, loss_fn: Callable[[ParameterSet], Tensor],
                   steps: int, optimizer: Optimizer) -> ParameterSet:
    """Run ``steps`` updates of ``optimizer`` on ``loss_fn`` over a copy of ``params``."""
    adapted = params.clone()
    for _ in range(steps):
        backward(loss_fn(adapted))
        optimizer.step(adapted)
    return adapted


def encoder_only(params: ParameterSet) -> ParameterSet:
    return params.subset("encoder.")


def fomaml_inner_finetune(params: ParameterSet, model: JointModel, support: Sequence[EpisodeExample],
                          steps: int, inner_lr: float, head_init: HeadInit = zero_heads
                          ) -> tuple[ParameterSet, list[str], list[str]]:
    """Adapted copy (encoder + episode heads) after ``steps`` SGD updates.

    ``params`` is left untouched. Returns the adapted set together with the
    intent and slot label orders of its heads.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    intent_labels = sorted({ex.intent for ex in support})
    slot_labels = sorted({s for ex in support for s in ex.slots})
    start = encoder_only(params).clone()
    start.update(head_init(len(intent_labels), len(slot_labels), model.config.output_dim))

    def loss_fn(p):
        return head_loss(p, model, support, intent_labels, slot_labels)

    adapted = finetune_steps(start, loss_fn, steps, sgd(inner_lr))
    return adapted, intent_labels, slot_labels


def fomaml_meta_step(params: ParameterSet, model: JointModel, episode: Episode, outer: Optimizer,
                     inner_steps: int = 8, inner_lr: float = 0.01,
                     head_init: HeadInit = zero_heads) -> float:
    """One outer update of the encoder in ``params``; returns the query loss."""
    adapted, intents, slots = fomaml_inner_finetune(params, model, episode.support, inner_steps,
                                                    inner_lr, head_init)
    loss = head_loss(adapted, model, episode.query, intents, slots)
    backward(loss)
    encoder = encoder_only(params)
    for name, p in encoder.items():
        grad = adapted[name].grad
        p.grad = np.zeros_like(p.data) if grad is None else grad
    outer.step(encoder)
    return loss.item()


def fomaml_predict(params: ParameterSet, model: JointModel, episode: Episode, inner_steps: int = 8,
                   inner_lr: float = 0.01, head_init: HeadInit = zero_heads) -> EpisodePrediction:
    adapted, intents, slots = fomaml_inner_finetune(params, model, episode.support, inner_steps,
                                                    inner_lr, head_init)
    with T.no_grad():
        sentence, tokens, spans = model.encode(adapted, episode.query)
    return predict_with_heads(adapted, sentence.data, tokens.data, spans, intents, slots)
