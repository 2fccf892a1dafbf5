"""File-level workflows behind the command-line tool.

Each function reads its inputs from disk, does one job and writes its
outputs, so the CLI stays a thin argument parser and tests can drive the
same code paths directly.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .algorithms import JointModel, TrainLoopConfig, evaluate, init_params, train
from .autodiff import CheckpointError, ParameterSet, load_checkpoint, save_checkpoint
from .data.config import RunConfig
from .data.corpus import apply_slot_prefixing, parse_dataset_file, write_dataset_file
from .data.results import ResultRecord
from .data.splits import SPLIT_NAMES, SplitStats, generate_splits, read_split_config, render_stats_table
from .encoder import (
    ContextualFeaturizer,
    EmbeddingTable,
    EncoderConfig,
    TokenFeaturizer,
    Vocabulary,
    load_contextual_vectors,
    load_embeddings,
)
from .metrics import aggregate
from .sampling import EpisodeSampler, FewShotSplit, SamplerConfig

log = logging.getLogger(__name__)

TABLE_KEY = "embedding.table"
META_SUFFIX = ".meta.json"


def dataset_name(split_path: str | Path) -> str:
    """``data/snips.test.txt`` -> ``snips``."""
    return Path(split_path).name.split(".")[0]


# --- prepare-splits -------------------------------------------------------

def prepare_splits(data: str | Path, split_config: str | Path, out_dir: str | Path
                   ) -> dict[str, dict[str, SplitStats]]:
    """Prefix slot labels, partition each configured dataset by intent, write the splits.

    ``data`` is either one corpus file (the config must then name exactly one
    dataset) or a directory holding ``<dataset>.txt`` per configured dataset.
    Writes ``<out>/<dataset>.<split>.txt``, ``stats.txt`` and ``stats.json``.
    """
    data, out_dir = Path(data), Path(out_dir)
    configs = read_split_config(split_config)
    if data.is_file() and len(configs) != 1:
        raise ValueError(f"{data} is a single file but the split config names {len(configs)} datasets")
    out_dir.mkdir(parents=True, exist_ok=True)
    all_stats: dict[str, dict[str, SplitStats]] = {}
    for name, config in configs.items():
        source = data if data.is_file() else data / f"{name}.txt"
        records = apply_slot_prefixing(parse_dataset_file(source))
        splits, stats = generate_splits(records, config)
        for split_name, split in splits.items():
            write_dataset_file(out_dir / f"{name}.{split_name}.txt", split.records())
        all_stats[name] = stats
        log.info("%s: %s", name, ", ".join(f"{k}={v.utterances}" for k, v in stats.items()))
    (out_dir / "stats.txt").write_text(render_stats_table(all_stats), encoding="utf-8")
    payload = {d: {s: vars(v) for s, v in st.items()} for d, st in all_stats.items()}
    (out_dir / "stats.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return all_stats


# --- sample ---------------------------------------------------------------

def load_split(path: str | Path, name: str | None = None) -> FewShotSplit:
    path = Path(path)
    records = parse_dataset_file(path)
    split_name = name or (path.name.split(".")[1] if path.name.count(".") >= 2 else "split")
    return FewShotSplit.from_records(split_name, records, dataset_name(path))


def sample_episodes(split_path: str | Path, k_max: int, count: int, seed: int, out: str | Path) -> int:
    """Write ``count`` episodes, one JSON object per line, traces included."""
    split = load_split(split_path)
    sampler = EpisodeSampler(split, SamplerConfig(k_max=k_max, seed=seed))
    lines = [json.dumps(ep.to_dict(), sort_keys=True) for ep in sampler.take(count)]
    Path(out).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return len(lines)


# --- train ----------------------------------------------------------------

def loop_config(run: RunConfig) -> TrainLoopConfig:
    return TrainLoopConfig(
        algorithm=run.algorithm, outer_lr=run.outer_lr, inner_lr=run.inner_lr,
        inner_steps=run.inner_steps, baseline_batch=run.baseline_batch,
        baseline_adapt_steps=run.baseline_adapt_steps, epochs=run.epochs,
        episodes_per_epoch=run.episodes_per_epoch, seeds=list(run.seeds))


def _split_files(run: RunConfig) -> list[Path]:
    return [run.split_path(d, s) for d in run.datasets for s in SPLIT_NAMES if run.split_path(d, s).exists()]


def build_embedding_table(run: RunConfig) -> EmbeddingTable:
    """Embeddings restricted to the tokens of every split file of the run's datasets."""
    tokens = sorted({t for p in _split_files(run) for r in parse_dataset_file(p) for t in r.tokens})
    table, coverage = load_embeddings(run.embeddings, Vocabulary(tokens))
    log.info("embeddings: %d of %d tokens found (%.1f%%)", coverage.found, coverage.vocabulary_size - 1,
             100.0 * coverage.ratio)
    return table


@dataclass
class TrainedModel:
    params: ParameterSet
    model: JointModel
    meta: dict


def checkpoint_path(run: RunConfig, seed: int) -> Path:
    tag = "+".join(run.datasets)
    return run.output_dir / f"{run.algorithm}-k{run.k_max}-{tag}-seed{seed}.ckpt"


def save_trained(path: str | Path, params: ParameterSet, meta: dict, table: EmbeddingTable | None) -> None:
    """Parameters (plus the frozen table, if any) in the binary format; metadata as JSON beside it."""
    arrays: dict[str, np.ndarray] = dict(params.arrays())
    if table is not None:
        arrays[TABLE_KEY] = table.matrix
    save_checkpoint(path, arrays)
    Path(str(path) + META_SUFFIX).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_trained(path: str | Path) -> TrainedModel:
    path = Path(path)
    arrays = load_checkpoint(path)
    meta_path = Path(str(path) + META_SUFFIX)
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{meta_path}: not valid JSON ({exc})") from exc
    enc = meta["encoder"]
    if enc.get("contextual_vectors"):
        featurizer = ContextualFeaturizer(load_contextual_vectors(enc["contextual_vectors"]))
    else:
        if TABLE_KEY not in arrays:
            raise CheckpointError(f"{path}: no embedding table stored")
        featurizer = TokenFeaturizer(EmbeddingTable(Vocabulary(meta["vocabulary"][1:]), arrays.pop(TABLE_KEY)))
    config = EncoderConfig(enc["embedding_dim"], enc["hidden_dim"], bool(enc.get("contextual_vectors")),
                           enc["slot_repr"])
    return TrainedModel(ParameterSet.from_arrays(arrays), JointModel(config, featurizer), meta)


def _model_for(run: RunConfig) -> tuple[JointModel, EmbeddingTable | None]:
    settings = run.encoder
    if settings.contextual_vectors:
        featurizer = ContextualFeaturizer(load_contextual_vectors(settings.contextual_vectors))
        table = None
    else:
        table = build_embedding_table(run)
        featurizer = TokenFeaturizer(table)
    config = EncoderConfig(featurizer.dim, settings.hidden_dim, bool(settings.contextual_vectors),
                           settings.slot_repr)
    return JointModel(config, featurizer), table


def run_training(run: RunConfig) -> list[Path]:
    """Train one model per seed; checkpoint after every epoch (same file, overwritten)."""
    model, table = _model_for(run)
    train_splits = {d: load_split(run.split_path(d, "train"), "train") for d in run.datasets}
    loop = loop_config(run)
    run.output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for seed in run.seeds:
        params, extra = init_params(loop, model, train_splits, seed)
        path = checkpoint_path(run, seed)
        meta = {
            "algorithm": run.algorithm, "k_max": run.k_max, "datasets": run.datasets, "joint": run.joint,
            "seed": seed, "embedding": _embedding_label(run),
            "encoder": {"embedding_dim": model.config.embedding_dim, "hidden_dim": model.config.hidden_dim,
                        "slot_repr": model.config.slot_repr,
                        "contextual_vectors": run.encoder.contextual_vectors},
            "train_loop": vars(loop),
            "vocabulary": None if table is None else table.vocabulary.tokens,
            **extra,
        }

        def checkpoint(epoch: int, loss: float, params=params, meta=meta, path=path) -> None:
            save_trained(path, params, {**meta, "epochs_done": epoch + 1, "last_loss": loss}, table)

        if loop.epochs == 0:
            save_trained(path, params, {**meta, "epochs_done": 0, "last_loss": None}, table)
        train(params, model, loop, train_splits, run.k_max, seed, checkpoint, extra)
        log.info("seed %d: wrote %s", seed, path)
        written.append(path)
    return written


def _embedding_label(run: RunConfig) -> str:
    if run.encoder.contextual_vectors:
        return Path(run.encoder.contextual_vectors).name.split(".")[0]
    return Path(run.embeddings).name.split(".")[0]


# --- eval -----------------------------------------------------------------

def resolve_checkpoints(checkpoints: Sequence[str], seeds: Sequence[int]) -> list[Path]:
    """One checkpoint per evaluation seed.

    A single path may contain ``{seed}``; a single plain path is reused for
    every seed; otherwise there must be exactly one path per seed.
    """
    if len(checkpoints) == 1:
        return [Path(checkpoints[0].format(seed=s)) for s in seeds]
    if len(checkpoints) != len(seeds):
        raise ValueError(f"{len(checkpoints)} checkpoints for {len(seeds)} seeds")
    return [Path(c) for c in checkpoints]


def run_evaluation(checkpoints: Sequence[str], split_path: str | Path, seeds: Sequence[int],
                   episodes: int = 100, k_max: int | None = None) -> ResultRecord:
    """Episodic evaluation of one model family on one split, aggregated over seeds."""
    split = load_split(split_path)
    per_seed = []
    first: TrainedModel | None = None
    for seed, path in zip(seeds, resolve_checkpoints(checkpoints, seeds)):
        trained = load_trained(path)
        first = first or trained
        meta = trained.meta
        loop = TrainLoopConfig(**meta["train_loop"])
        kmax = k_max or meta["k_max"]
        per_seed.append(evaluate(meta["algorithm"], trained.params, trained.model, split, kmax, seed,
                                 episodes, loop))
        log.info("seed %d (%s): %d episodes", seed, path, episodes)
    assert first is not None
    report = aggregate(per_seed, list(seeds))
    meta = first.meta
    return ResultRecord.from_report(report, split.dataset, meta["algorithm"], k_max or meta["k_max"],
                                    meta["joint"], meta["embedding"])
