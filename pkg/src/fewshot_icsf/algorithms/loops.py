from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

from ..autodiff import ParameterSet, adam, backward
from ..data.config import DEFAULT_OUTER_LR
from ..encoder import init_encoder
from ..metrics import EpisodeMetrics, episode_metrics
from ..sampling import Episode, EpisodeExample, EpisodeSampler, FewShotSplit, JointEpisodeSource, SamplerConfig, episode_rng
from .common import EpisodePrediction, JointModel, gold_of
from .finetune import baseline_adapt_evaluate, baseline_pretrain, init_baseline, label_inventory
from .fomaml import fomaml_meta_step, fomaml_predict
from .prototypical import proto_episode_loss, proto_predict

log = logging.getLogger(__name__)

ALGORITHMS = ("proto", "fomaml", "finetune")


@dataclass
class TrainLoopConfig:
    algorithm: str
    outer_lr: float | None = None
    inner_lr: float = 0.01
    inner_steps: int = 8
    baseline_batch: int = 512
    baseline_adapt_steps: int = 10
    epochs: int = 50
    episodes_per_epoch: int = 100
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.outer_lr is None:
            self.outer_lr = DEFAULT_OUTER_LR[self.algorithm]
        if self.outer_lr <= 0 or self.inner_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be non-negative")


def _examples(split: FewShotSplit) -> list[EpisodeExample]:
    return [EpisodeExample(r.id, r.tokens, r.slots, r.intent) for r in split.records()]


def init_params(config: TrainLoopConfig, model: JointModel, train_splits: Mapping[str, FewShotSplit],
                seed: int) -> tuple[ParameterSet, dict]:
    """Fresh parameters plus metadata needed to interpret them later."""
    rng = episode_rng(seed, 0)
    params = init_encoder(model.config, rng)
    meta: dict = {}
    if config.algorithm == "finetune":
        intents, slots = label_inventory({n: _examples(s) for n, s in train_splits.items()})
        params = init_baseline(params, intents, slots, rng, model.config.output_dim)
        meta = {"intent_labels": intents, "slot_labels": slots}
    return params, meta


def train(params: ParameterSet, model: JointModel, config: TrainLoopConfig,
          train_splits: Mapping[str, FewShotSplit], k_max: int, seed: int,
          on_epoch: Callable[[int, float], None] | None = None,
          meta: Mapping | None = None) -> ParameterSet:
    """Train ``params`` in place with the configured algorithm."""
    if config.algorithm == "finetune":
        datasets = {n: _examples(s) for n, s in train_splits.items()}
        if meta and "intent_labels" in meta:
            intents, slots = meta["intent_labels"], meta["slot_labels"]
        else:
            intents, slots = label_inventory(datasets)
        return baseline_pretrain(params, model, datasets, intents, slots, config.epochs, seed,
                                 config.baseline_batch, config.outer_lr, on_epoch)

    source = JointEpisodeSource(train_splits, SamplerConfig(k_max=k_max, seed=seed))
    opt = adam(config.outer_lr)
    for epoch in range(config.epochs):
        total = 0.0
        for _ in range(config.episodes_per_epoch):
            episode = source.next_episode()
            if config.algorithm == "proto":
                loss = proto_episode_loss(params, model, episode)
                backward(loss)
                opt.step(params)
                total += loss.item()
            else:
                total += fomaml_meta_step(params, model, episode, opt, config.inner_steps, config.inner_lr)
        mean_loss = total / max(config.episodes_per_epoch, 1)
        log.info("%s epoch %d loss %.4f", config.algorithm, epoch + 1, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
    return params


def predict_episode(algorithm: str, params: ParameterSet, model: JointModel, episode: Episode,
                    config: TrainLoopConfig | None = None) -> EpisodePrediction:
    config = config or TrainLoopConfig(algorithm)
    if algorithm == "proto":
        return proto_predict(params, model, episode)
    if algorithm == "fomaml":
        return fomaml_predict(params, model, episode, config.inner_steps, config.inner_lr)
    if algorithm == "finetune":
        return baseline_adapt_evaluate(params, model, episode, config.baseline_adapt_steps, config.outer_lr)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def evaluate_episode(algorithm: str, params: ParameterSet, model: JointModel, episode: Episode,
                     config: TrainLoopConfig | None = None) -> tuple[EpisodePrediction, EpisodeMetrics]:
    """Adapt on the support set (on copies), predict and score the query set."""
    prediction = predict_episode(algorithm, params, model, episode, config)
    gold_intents, gold_slots = gold_of(episode.query)
    return prediction, episode_metrics(prediction.intents, gold_intents, prediction.slots, gold_slots)


def evaluate(algorithm: str, params: ParameterSet, model: JointModel, split: FewShotSplit, k_max: int,
             seed: int, episodes: int = 100, config: TrainLoopConfig | None = None) -> list[EpisodeMetrics]:
    sampler = EpisodeSampler(split, SamplerConfig(k_max=k_max, seed=seed), stream=7)
    return [evaluate_episode(algorithm, params, model, ep, config)[1] for ep in sampler.take(episodes)]
