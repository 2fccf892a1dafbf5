from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fewshot_icsf.data.config import ConfigError, parse_run_config, read_run_config
from fewshot_icsf.data.corpus import (
    CorpusFormatError,
    UtteranceRecord,
    apply_slot_prefixing,
    format_corpus,
    parse_corpus,
    parse_dataset_file,
    prefix_slot,
)
from fewshot_icsf.data.results import (
    ResultRecord,
    format_cell,
    read_results,
    records_from_csv,
    records_to_csv,
    write_results,
)
from fewshot_icsf.data.splits import SplitConfig, SplitConfigError, generate_splits, read_split_config
from fewshot_icsf.toy import make_toy_corpus

from conftest import PLAYLIST_BLOCK, PLAYLIST_TOKENS


class TestCorpus:
    def test_playlist_block(self):
        (rec,) = parse_corpus(PLAYLIST_BLOCK)
        assert len(rec) == 12 and rec.tokens == PLAYLIST_TOKENS
        assert rec.slots[3] == "AddToPlaylist:artist" and rec.intent == "AddToPlaylist"

    def test_single_token_block(self, tmp_path):
        path = tmp_path / "one.txt"
        path.write_text("# intent: Hi\nhello\tO\n", encoding="utf-8")
        (rec,) = parse_dataset_file(path)
        assert rec.tokens == ("hello",) and rec.id == "0"

    def test_ragged_block(self):
        with pytest.raises(CorpusFormatError) as info:
            parse_corpus("# intent: A\na\tO\nb\nc\tO\n")
        assert info.value.line == 3

    def test_missing_intent_line(self):
        with pytest.raises(CorpusFormatError, match=":1:"):
            parse_corpus("a\tO\n")

    def test_header_only_block(self):
        with pytest.raises(CorpusFormatError, match="no tokens"):
            parse_corpus("# intent: A\n\n# intent: B\nx\tO\n")

    def test_explicit_ids_and_several_blocks(self):
        text = "# intent: A\n# id: u7\nx\tO\n\n\n# intent: B\ny\tB:s\n"
        recs = parse_corpus(text)
        assert [r.id for r in recs] == ["u7", "1"] and [r.intent for r in recs] == ["A", "B"]

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(
        st.text(alphabet="abcXYZ_", min_size=1, max_size=6),
        st.lists(st.tuples(st.text(alphabet="abc.'-", min_size=1, max_size=5),
                           st.sampled_from(["O", "x", "B-y", "I-y"])), min_size=1, max_size=6)),
        max_size=5))
    def test_parse_serialize_round_trip(self, blocks):
        records = [UtteranceRecord(f"id{k}", tuple(t for t, _ in pairs), tuple(s for _, s in pairs), intent)
                   for k, (intent, pairs) in enumerate(blocks)]
        assert parse_corpus(format_corpus(records)) == records


class TestPrefixing:
    def test_examples(self):
        assert prefix_slot("AddToPlaylist", "artist") == "AddToPlaylist:artist"
        assert prefix_slot("AddToPlaylist", "O") == "O"
        assert prefix_slot("Book", "B-city") == "B-Book:city"

    def test_idempotent_and_length_preserving(self):
        records = [UtteranceRecord("0", ("a", "b", "c"), ("O", "x", "I-y"), "Play")]
        once = apply_slot_prefixing(records)
        assert apply_slot_prefixing(once) == once
        assert once[0].slots == ("O", "Play:x", "I-Play:y") and len(once[0]) == 3


class TestSplits:
    def test_partition_is_disjoint_and_complete(self):
        corpus = make_toy_corpus(0, per_intent=10)
        cfg = corpus.split_config
        cfg = SplitConfig(cfg.dataset, cfg.train[:3], cfg.test, cfg.train[3:])
        splits, stats = generate_splits(corpus.records, cfg)
        seen = [set(s.classes) for s in splits.values()]
        assert all(not a & b for i, a in enumerate(seen) for b in seen[i + 1:])
        assert sum(len(s) for s in splits.values()) == len(corpus.records) == stats["total"].utterances
        assert stats["train"].intents == 3 and stats["dev"].intents == 2 and stats["test"].intents == 3

    def test_empty_dev_gives_no_dev_split(self):
        corpus = make_toy_corpus(0, per_intent=10)
        splits, stats = generate_splits(corpus.records, corpus.split_config)
        assert set(splits) == {"train", "test"} and "dev" not in stats

    def test_overlap_rejected(self):
        with pytest.raises(SplitConfigError, match="both train and test"):
            SplitConfig("d", ["A", "B"], ["B"])

    def test_unknown_intent_rejected(self):
        corpus = make_toy_corpus(0, per_intent=5)
        with pytest.raises(SplitConfigError, match="not found"):
            generate_splits(corpus.records, SplitConfig("toy", ["Nope"], [corpus.intents[0]]))

    def test_slot_values_count_distinct_surface_strings(self):
        recs = [UtteranceRecord("0", ("new", "york", "x"), ("A:c", "A:c", "O"), "A"),
                UtteranceRecord("1", ("new", "york"), ("A:c", "A:c"), "A"),
                UtteranceRecord("2", ("rome",), ("A:c",), "A")]
        _, stats = generate_splits(recs, SplitConfig("d", ["A"], []))
        assert (stats["train"].slot_labels, stats["train"].slot_values) == (1, 2)

    def test_config_file(self, tmp_path):
        path = tmp_path / "splits.json"
        path.write_text(json.dumps({"snips": {"train": ["A"], "test": ["B"]}}))
        cfg = read_split_config(path)["snips"]
        assert (cfg.train, cfg.dev, cfg.test) == (["A"], [], ["B"])
        path.write_text(json.dumps({"snips": {"train": ["A"], "tst": ["B"]}}))
        with pytest.raises(SplitConfigError):
            read_split_config(path)


@pytest.fixture
def run_dir(tmp_path):
    (tmp_path / "data").mkdir()
    (tmp_path / "data" / "toy.train.txt").write_text("# intent: A\nx\tO\n")
    (tmp_path / "emb.txt").write_text("x 1.0 2.0\n")
    return tmp_path


def base_config(**overrides):
    raw = {"algorithm": "fomaml", "k_max": 20, "datasets": ["toy"],
           "paths": {"data": "data", "embeddings": "emb.txt", "output": "out"}}
    raw.update(overrides)
    return raw


class TestRunConfig:
    def test_defaults(self, run_dir):
        run = parse_run_config(base_config(), run_dir)
        assert (run.outer_lr, run.inner_lr, run.inner_steps) == (0.0029, 0.01, 8)
        assert (run.baseline_batch, run.baseline_adapt_steps, run.epochs) == (512, 10, 50)
        assert run.encoder.hidden_dim == 256 and run.seeds == [0, 1, 2]
        assert run.data_dir == run_dir / "data"
        assert parse_run_config(base_config(algorithm="proto"), run_dir).outer_lr == 0.001

    def test_required_fields(self, run_dir):
        with pytest.raises(ConfigError, match="algorithm"):
            parse_run_config(base_config(algorithm=""), run_dir)
        raw = base_config()
        del raw["k_max"]
        with pytest.raises(ConfigError, match="k_max"):
            parse_run_config(raw, run_dir)

    def test_offenders_listed_together(self, run_dir):
        with pytest.raises(ConfigError) as info:
            parse_run_config(base_config(bogus=1, inner_lr=-1, encoder={"slot_repr": "x"}), run_dir)
        message = str(info.value)
        assert "bogus" in message and "inner_lr" in message and "slot_repr" in message

    def test_missing_paths(self, run_dir):
        with pytest.raises(ConfigError, match="emb2.txt"):
            parse_run_config(base_config(paths={"data": "data", "embeddings": "emb2.txt", "output": "o"}), run_dir)

    def test_read_from_file(self, run_dir):
        path = run_dir / "run.json"
        path.write_text(json.dumps(base_config(epochs=3)))
        assert read_run_config(path).epochs == 3
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            read_run_config(path)


RECORDS = [
    ResultRecord("snips", "proto", 20, False, "GloVe", 65.4567, 0.8123, 40.0, 1.5, 100, (0, 1, 2)),
    ResultRecord("atis", "finetune", 100, True, "BERT", 1 / 3, 0.0, 12.0, 0.25, 100, (4,)),
]


class TestResults:
    def test_cell_format(self):
        assert format_cell(65.46, 0.81) == "65.46 +/- 0.81"

    def test_round_trip(self, tmp_path):
        csv_path, table_path = write_results(RECORDS, tmp_path / "r.csv")
        assert sorted(read_results(csv_path), key=repr) == sorted(RECORDS, key=repr)
        table = table_path.read_text()
        assert "65.46 +/- 0.81" in table and "atis (joint)" in table

    def test_rewrite_is_identical(self, tmp_path):
        write_results(RECORDS, tmp_path / "a.csv")
        write_results(RECORDS[::-1], tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()

    def test_empty_report_is_header_only(self):
        text = records_to_csv([])
        assert text.count("\n") == 1 and text.startswith("dataset,")
        assert records_from_csv(text) == []

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            write_results(RECORDS, tmp_path / "missing" / "r.csv")
