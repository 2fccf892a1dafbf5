from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from fewshot_icsf.data.corpus import OUTSIDE, UtteranceRecord
from fewshot_icsf.sampling import (
    ClassExhaustedError,
    ClassTooSmallError,
    Episode,
    EpisodeBuffer,
    EpisodeExample,
    EpisodeSampler,
    EpisodeTrace,
    FewShotSplit,
    JointEpisodeSource,
    SamplerConfig,
    SamplingError,
    SplitTooSmallError,
    assemble_episode,
    class_shots,
    episode_rng,
    next_joint_dataset,
    remap_unshared_slots,
    sample_query_shot,
    sample_trace,
    sample_way,
    support_budget,
)


def synthetic_split(sizes: dict[str, int], name: str = "train", dataset: str = "syn",
                    slot_choices: int = 3, seed: int = 0) -> FewShotSplit:
    rng = np.random.default_rng(seed)
    records = []
    for intent, n in sizes.items():
        for k in range(n):
            m = int(rng.integers(1, 5))
            slots = tuple(OUTSIDE if rng.random() < 0.5 else f"{intent}:s{int(rng.integers(slot_choices))}"
                          for _ in range(m))
            records.append(UtteranceRecord(f"{dataset}-{intent}-{k}", tuple(f"t{j}" for j in range(m)), slots, intent))
    return FewShotSplit.from_records(name, records, dataset)


SIZES_5 = {"A": 50, "B": 40, "C": 30, "D": 20, "E": 10}


class TestFormulas:
    def test_worked_example(self):
        sizes = {"a": 30, "b": 8, "c": 14}
        classes = list(sizes)
        k_q = sample_query_shot(classes, sizes)
        assert k_q == 4
        budget = support_budget(classes, sizes, k_q, beta=0.5, k_max=20)
        assert budget == 17
        proportion, shots = class_shots(classes, sizes, k_q, budget, {c: 0.0 for c in classes})
        assert [shots[c] for c in classes] == [9, 3, 4]
        assert proportion["a"] == pytest.approx(30 / 52)

    def test_query_shot_cap(self):
        assert sample_query_shot(["a", "b"], {"a": 20, "b": 99}) == 10

    def test_class_with_one_example(self):
        with pytest.raises(ClassTooSmallError, match="'b'"):
            sample_query_shot(["a", "b"], {"a": 20, "b": 1})

    def test_tiny_beta_gives_one_per_class(self):
        sizes = {"a": 30, "b": 8, "c": 14}
        assert support_budget(list(sizes), sizes, 4, beta=1e-12, k_max=20) == 3

    def test_cap_binds(self):
        sizes = {c: 1000 for c in "abcde"}
        assert support_budget(list(sizes), sizes, 10, beta=1.0, k_max=20) == 20

    def test_single_class_proportion_is_one(self):
        for alpha in (math.log(0.5), 0.0, 0.69):
            proportion, _ = class_shots(["a"], {"a": 30}, 4, 5, {"a": alpha})
            assert proportion["a"] == pytest.approx(1.0)

    def test_budget_below_way(self):
        with pytest.raises(SamplingError):
            class_shots(["a", "b", "c"], {"a": 9, "b": 9, "c": 9}, 2, 2, {"a": 0, "b": 0, "c": 0})


class TestWay:
    def test_three_classes(self):
        rng = np.random.default_rng(0)
        assert {sample_way(["a", "b", "c"], rng)[0] for _ in range(200)} == {3}

    def test_too_few_classes(self):
        with pytest.raises(SplitTooSmallError):
            sample_way(["a", "b"], np.random.default_rng(0))

    def test_uniform_over_range(self):
        rng = np.random.default_rng(123)
        draws = 10_000
        counts = Counter(sample_way(list("abcdefg"), rng)[0] for _ in range(draws))
        assert set(counts) == {3, 4, 5, 6, 7}
        p = 1 / 5
        sigma = math.sqrt(draws * p * (1 - p))
        for n in counts:
            assert abs(counts[n] - draws * p) < 3 * sigma

    def test_replay(self):
        a = sample_way(list("abcdefg"), episode_rng(5, 1))
        b = sample_way(list("abcdefg"), episode_rng(5, 1))
        assert a == b


class TestEpisodes:
    def test_invariants_over_many_episodes(self):
        split = synthetic_split(SIZES_5)
        sampler = EpisodeSampler(split, SamplerConfig(k_max=20, seed=0))
        for ep in sampler.take(2000):
            t = ep.trace
            assert 3 <= t.way <= 5 and t.way == len(t.classes)
            assert 1 <= t.query_shot <= 10
            assert sum(t.shots.values()) <= t.support_size <= 20
            for c in t.classes:
                assert 1 <= t.shots[c] <= SIZES_5[c] - t.query_shot
                s_ids = {e.id for e in ep.support if e.intent == c}
                q_ids = {e.id for e in ep.query if e.intent == c}
                assert len(s_ids) == t.shots[c] and len(q_ids) == t.query_shot
                assert not s_ids & q_ids
            assert {e.intent for e in ep.query} <= {e.intent for e in ep.support}

    def test_replay_is_identical(self):
        split = synthetic_split(SIZES_5)
        a = [e.to_dict() for e in EpisodeSampler(split, SamplerConfig(20, 7)).take(20)]
        b = [e.to_dict() for e in EpisodeSampler(split, SamplerConfig(20, 7)).take(20)]
        assert a == b
        c = [e.to_dict() for e in EpisodeSampler(split, SamplerConfig(20, 8)).take(20)]
        assert a != c

    def test_round_trip_dict(self):
        split = synthetic_split(SIZES_5)
        ep = EpisodeSampler(split, SamplerConfig(20, 1)).episode(3)
        assert Episode.from_dict(ep.to_dict()).to_dict() == ep.to_dict()

    def test_larger_cap_gives_more_shots(self):
        split = synthetic_split(SIZES_5)

        def mean_shot(k_max):
            shots = [k for ep in EpisodeSampler(split, SamplerConfig(k_max, 0)).take(2000)
                     for k in ep.trace.shots.values()]
            return float(np.mean(shots))
        assert mean_shot(100) > mean_shot(20)

    def test_class_exhausted(self):
        split = synthetic_split({"a": 5, "b": 5, "c": 5})
        trace = EpisodeTrace(3, ["a", "b", "c"], 2, 1.0, {}, {}, {"a": 4, "b": 1, "c": 1}, 6, 20)
        with pytest.raises(ClassExhaustedError):
            assemble_episode(split, trace, np.random.default_rng(0))


def ex(uid, slots, intent="I"):
    return EpisodeExample(uid, tuple(f"t{j}" for j in range(len(slots))), tuple(slots), intent)


class TestRemap:
    def test_query_only_label(self):
        support = [ex("s", ["O", "I:a"])]
        query = [ex("q", ["I:a", "I:b", "O"])]
        s2, q2 = remap_unshared_slots(support, query)
        assert s2 == support
        assert q2[0].slots == ("I:a", "O", "O") and q2[0].remapped == (1,)

    def test_support_only_label(self):
        support = [ex("s", ["I:c", "I:a"])]
        query = [ex("q", ["I:a"])]
        s2, q2 = remap_unshared_slots(support, query)
        assert s2[0].slots == ("O", "I:a") and s2[0].remapped == (0,)
        assert q2 == query

    def test_shared_labels_are_a_fixed_point(self):
        support = [ex("s", ["I:a", "O", "I:b"])]
        query = [ex("q", ["I:b", "I:a"])]
        assert remap_unshared_slots(support, query) == (support, query)

    def test_closure_on_adversarial_episodes(self):
        rng = np.random.default_rng(11)
        labels = ["O"] + [f"I:l{k}" for k in range(6)]
        for _ in range(1000):
            def rand_ex(uid):
                return ex(uid, [labels[i] for i in rng.integers(0, len(labels), size=int(rng.integers(1, 6)))])
            support = [rand_ex(f"s{k}") for k in range(int(rng.integers(1, 4)))]
            query = [rand_ex(f"q{k}") for k in range(int(rng.integers(1, 4)))]
            s2, q2 = remap_unshared_slots(support, query)
            s_set = {s for e in s2 for s in e.slots} - {OUTSIDE}
            q_set = {s for e in q2 for s in e.slots} - {OUTSIDE}
            assert s_set == q_set
            for before, after in zip(support + query, s2 + q2):
                changed = [j for j, (a, b) in enumerate(zip(before.slots, after.slots)) if a != b]
                assert list(after.remapped) == changed
                assert all(after.slots[j] == OUTSIDE for j in changed)


class TestBuffers:
    def test_used_examples_removed_then_refreshed(self):
        split = synthetic_split({"a": 6, "b": 6, "c": 6})
        buf = EpisodeBuffer(split)
        ep = buf.draw(SamplerConfig(20, 0), np.random.default_rng(0))
        used = len(ep.support) + len(ep.query)
        assert buf.remaining() == 18 - used
        for k in range(20):
            buf.draw(SamplerConfig(20, 0), np.random.default_rng(k + 1))
        assert buf.refreshes >= 1

    def test_single_dataset_always_chosen(self):
        split = synthetic_split(SIZES_5)
        rng = np.random.default_rng(0)
        assert {next_joint_dataset({"only": EpisodeBuffer(split)}, rng) for _ in range(50)} == {"only"}

    def test_no_datasets(self):
        with pytest.raises(SamplingError):
            next_joint_dataset({}, np.random.default_rng(0))

    def test_three_datasets_uniform(self):
        split = synthetic_split(SIZES_5)
        buffers = {n: EpisodeBuffer(split) for n in ("atis", "snips", "top")}
        rng = np.random.default_rng(99)
        draws = 10_000
        counts = Counter(next_joint_dataset(buffers, rng) for _ in range(draws))
        sigma = math.sqrt(draws * (1 / 3) * (2 / 3))
        for name in buffers:
            assert abs(counts[name] - draws / 3) < 3 * sigma

    def test_joint_source_tags_and_replays(self):
        splits = {"x": synthetic_split(SIZES_5, dataset="x"), "y": synthetic_split(SIZES_5, dataset="y", seed=1)}
        a = JointEpisodeSource(splits, SamplerConfig(20, 3))
        b = JointEpisodeSource(splits, SamplerConfig(20, 3))
        for _ in range(30):
            ea, eb = a.next_episode(), b.next_episode()
            assert ea.to_dict() == eb.to_dict()
            assert all(e.id.startswith(ea.source_dataset) for e in ea.support + ea.query)
