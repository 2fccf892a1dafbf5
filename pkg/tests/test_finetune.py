from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from fewshot_icsf.algorithms import baseline_adapt_evaluate, baseline_pretrain, head_loss, init_baseline
from fewshot_icsf.algorithms.finetune import BatchPlan, label_inventory
from fewshot_icsf.sampling import EpisodeSampler, SamplerConfig
from fewshot_icsf.toy import make_toy_corpus

from conftest import make_episode, make_example, tiny_model


def snapshot(params):
    return {n: p.data.copy() for n, p in params.items()}


@pytest.fixture(scope="module")
def toy_setup():
    from fewshot_icsf.algorithms import JointModel
    from fewshot_icsf.data.splits import generate_splits
    from fewshot_icsf.encoder import EncoderConfig, TokenFeaturizer, init_encoder
    from fewshot_icsf.toy import random_embeddings

    corpus = make_toy_corpus(0, per_intent=30)
    splits, _ = generate_splits(corpus.records, corpus.split_config)
    table = random_embeddings(corpus.vocabulary(), 8, seed=1)
    model = JointModel(EncoderConfig(8, 6), TokenFeaturizer(table))
    return splits, model, table, init_encoder(model.config, np.random.default_rng(0))


def test_freeze_contract_over_100_episodes(toy_setup):
    splits, model, table, encoder = toy_setup
    train = {"toy": splits["train"].records()}
    intents, slots = label_inventory(train)
    params = init_baseline(encoder.clone(), intents, slots, np.random.default_rng(0), model.config.output_dim)
    before, table_before = snapshot(params), table.matrix.copy()
    for ep in EpisodeSampler(splits["test"], SamplerConfig(20, 0)).take(100):
        baseline_adapt_evaluate(params, model, ep)
    for name in before:
        assert np.array_equal(params[name].data, before[name])
    assert np.array_equal(table.matrix, table_before)


def test_single_intent_support_predicts_it_everywhere(tiny_episode):
    model, params, _ = tiny_model(tiny_episode)
    support = [ex for ex in tiny_episode.support if ex.intent == "Play"]
    query = [make_example("q1", "Play", "play/O rock/Play:genre now/O"),
             make_example("q2", "Book", "book/O paris/Book:city soon/O")]
    pred = baseline_adapt_evaluate(params, model, make_episode(support, query))
    assert pred.intents == ["Play", "Play"]


def test_zero_steps_give_uniform_intents(tiny_episode):
    model, params, _ = tiny_model(tiny_episode)
    pred = baseline_adapt_evaluate(params, model, tiny_episode, steps=0)
    assert np.allclose(np.exp(pred.intent_log_probs), 0.5, atol=1e-15)


def test_pretraining_reduces_fixed_batch_loss(toy_setup):
    splits, model, _, encoder = toy_setup
    train = {"toy": splits["train"].records()}
    intents, slots = label_inventory(train)
    params = init_baseline(encoder.clone(), intents, slots, np.random.default_rng(0), model.config.output_dim)
    batch = list(train["toy"][:64])
    start = head_loss(params, model, batch, intents, slots).item()
    baseline_pretrain(params, model, {"toy": batch}, intents, slots, epochs=10, seed=0, batch_size=64,
                      learning_rate=0.01)
    assert head_loss(params, model, batch, intents, slots).item() < start


def test_batches_cover_each_example_once_per_epoch():
    plan = BatchPlan(list(range(23)), 5, np.random.default_rng(0))
    seen = Counter()
    for _ in range(5):
        seen.update(plan.next_batch())
    assert seen == Counter(range(23)) and plan.epochs_started == 1
    plan.next_batch()
    assert plan.epochs_started == 2


def test_pretraining_is_deterministic(toy_setup):
    splits, model, _, encoder = toy_setup
    train = {"toy": splits["train"].records()[:40]}
    intents, slots = label_inventory(train)
    runs = []
    for _ in range(2):
        params = init_baseline(encoder.clone(), intents, slots, np.random.default_rng(3), model.config.output_dim)
        baseline_pretrain(params, model, train, intents, slots, epochs=2, seed=5, batch_size=16)
        runs.append(snapshot(params))
    for name in runs[0]:
        assert np.array_equal(runs[0][name], runs[1][name])
