from __future__ import annotations

import numpy as np
import pytest

from fewshot_icsf.algorithms import fomaml_inner_finetune, fomaml_meta_step, fomaml_predict, head_loss
from fewshot_icsf.algorithms.fomaml import encoder_only, finetune_steps
from fewshot_icsf.autodiff import ParameterSet, Tensor, adam, backward, sgd
from fewshot_icsf.autodiff import tensor as T
from fewshot_icsf.encoder import init_heads

from conftest import tiny_model


def random_heads(seed):
    def init(n_intents, n_slots, dim):
        return init_heads(n_intents, n_slots, dim, np.random.default_rng(seed))
    return init


def snapshot(params):
    return {n: p.data.copy() for n, p in params.items()}


def test_zero_steps_returns_encoder_and_zero_heads(tiny_episode):
    model, params, _ = tiny_model(tiny_episode)
    adapted, intents, slots = fomaml_inner_finetune(params, model, tiny_episode.support, 0, 0.01)
    for name, p in params.items():
        assert np.array_equal(adapted[name].data, p.data)
    assert intents == ["Book", "Play"] and slots == ["Book:city", "O", "Play:genre"]
    assert not adapted["intent_head.weight"].data.any() and not adapted["slot_head.bias"].data.any()


def test_inner_loop_leaves_params_untouched(tiny_episode):
    model, params, _ = tiny_model(tiny_episode)
    before = snapshot(params)
    adapted, _, _ = fomaml_inner_finetune(params, model, tiny_episode.support, 8, 0.5)
    for name in before:
        assert np.array_equal(params[name].data, before[name])
        assert params[name].grad is None
    assert any(not np.array_equal(adapted[n].data, before[n]) for n in before)


def test_negative_steps_rejected(tiny_episode):
    model, params, _ = tiny_model(tiny_episode)
    with pytest.raises(ValueError):
        fomaml_inner_finetune(params, model, tiny_episode.support, -1, 0.01)


def test_quadratic_one_step_oracle():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4))
    curvature = a @ a.T + np.eye(4)
    target = rng.normal(size=4)
    start = rng.normal(size=4)
    params = ParameterSet({"x": Tensor(start.copy(), requires_grad=True)})

    def loss(p):
        # 0.5 x^T A x - b^T x
        x = T.reshape(p["x"], (1, 4))
        quad = T.matmul(T.matmul(x, curvature), T.transpose(x))
        return T.sub(T.mul(T.tensor_sum(quad), 0.5), T.tensor_sum(T.mul(p["x"], target)))

    lr = 0.03
    adapted = finetune_steps(params, loss, 1, sgd(lr))
    expected = start - lr * (curvature @ start - target)
    assert np.max(np.abs(adapted["x"].data - expected)) < 1e-10
    assert np.array_equal(params["x"].data, start)


@pytest.mark.parametrize("seed", [0, 1])
def test_zero_inner_steps_equals_adam_on_query_loss(tiny_episode, seed):
    model, params, _ = tiny_model(tiny_episode, seed=seed)
    init = random_heads(seed + 10)

    # reference: one plain Adam step on the query loss at the current encoder, same heads
    ref = params.clone()
    intents = sorted({ex.intent for ex in tiny_episode.support})
    slots = sorted({s for ex in tiny_episode.support for s in ex.slots})
    ref.update(init(len(intents), len(slots), model.config.output_dim))
    backward(head_loss(ref, model, tiny_episode.query, intents, slots))
    adam(0.0029).step(encoder_only(ref))

    fomaml_meta_step(params, model, tiny_episode, adam(0.0029), inner_steps=0, head_init=init)
    for name in encoder_only(params):
        assert np.max(np.abs(params[name].data - ref[name].data)) < 1e-12


def test_meta_step_moves_encoder_not_table(tiny_episode):
    model, params, table = tiny_model(tiny_episode)
    before, table_before = snapshot(params), table.matrix.copy()
    loss = fomaml_meta_step(params, model, tiny_episode, adam(0.0029), inner_steps=2, inner_lr=0.1)
    assert np.isfinite(loss)
    assert all(not np.array_equal(params[n].data, before[n]) for n in before)
    assert np.array_equal(table.matrix, table_before)
    assert set(params) == set(before)


def test_meta_steps_are_bitwise_reproducible(tiny_episode):
    results = []
    for _ in range(2):
        model, params, _ = tiny_model(tiny_episode, seed=7)
        opt = adam(0.0029)
        for _ in range(2):
            fomaml_meta_step(params, model, tiny_episode, opt, inner_steps=3, inner_lr=0.1)
        results.append(snapshot(params))
    for name in results[0]:
        assert np.array_equal(results[0][name], results[1][name])


def test_predict_leaves_params_untouched(tiny_episode):
    model, params, _ = tiny_model(tiny_episode)
    before = snapshot(params)
    pred = fomaml_predict(params, model, tiny_episode, inner_steps=3, inner_lr=0.1)
    assert len(pred.intents) == len(tiny_episode.query)
    for name in before:
        assert np.array_equal(params[name].data, before[name])
