"""Run configuration (JSON) with the published hyperparameter defaults."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

ALGORITHMS = ("proto", "fomaml", "finetune")
SLOT_REPRESENTATIONS = ("token", "prefix")

DEFAULT_OUTER_LR = {"proto": 0.001, "finetune": 0.001, "fomaml": 0.0029}
DEFAULT_INNER_LR = 0.01
DEFAULT_INNER_STEPS = 8
DEFAULT_BASELINE_BATCH = 512
DEFAULT_ADAPT_STEPS = 10
DEFAULT_EPOCHS = 50
DEFAULT_EPOCHS_CONTEXTUAL = 30
DEFAULT_EPISODES_PER_EPOCH = 100
DEFAULT_EVAL_EPISODES = 100
DEFAULT_SEEDS = (0, 1, 2)


class ConfigError(ValueError):
    pass


@dataclass
class EncoderSettings:
    hidden_dim: int = 256
    slot_repr: str = "token"
    contextual_vectors: str | None = None


@dataclass
class RunConfig:
    algorithm: str
    k_max: int
    datasets: list[str]
    data_dir: Path
    output_dir: Path
    embeddings: Path | None = None
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    joint: bool = False
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    outer_lr: float = 0.001
    inner_lr: float = DEFAULT_INNER_LR
    inner_steps: int = DEFAULT_INNER_STEPS
    baseline_batch: int = DEFAULT_BASELINE_BATCH
    baseline_adapt_steps: int = DEFAULT_ADAPT_STEPS
    epochs: int = DEFAULT_EPOCHS
    episodes_per_epoch: int = DEFAULT_EPISODES_PER_EPOCH
    eval_episodes: int = DEFAULT_EVAL_EPISODES

    def split_path(self, dataset: str, split: str) -> Path:
        return self.data_dir / f"{dataset}.{split}.txt"

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("data_dir", "output_dir", "embeddings"):
            d[key] = None if d[key] is None else str(d[key])
        return d


_TOP_KEYS = {"algorithm", "k_max", "datasets", "paths", "seeds", "joint", "encoder", "outer_lr",
             "inner_lr", "inner_steps", "baseline_batch", "baseline_adapt_steps", "epochs",
             "episodes_per_epoch", "eval_episodes"}
_PATH_KEYS = {"data", "embeddings", "output"}
_ENCODER_KEYS = {"hidden_dim", "slot_repr", "contextual_vectors"}


def _positive(errors, name, value, kind=float, allow_zero=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        ok = ok and float(value).is_integer()
    if not ok or value < 0 or (value == 0 and not allow_zero):
        errors.append(f"{name}: expected a {'non-negative' if allow_zero else 'positive'} "
                      f"{'integer' if kind is int else 'number'}, got {value!r}")
        return None
    return kind(value)


def parse_run_config(raw: dict, base_dir: Path = Path(".")) -> RunConfig:
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        errors.append(f"unknown keys: {unknown}")
    paths = raw.get("paths", {})
    if not isinstance(paths, dict):
        errors.append("paths: expected an object")
        paths = {}
    unknown = sorted(set(paths) - _PATH_KEYS)
    if unknown:
        errors.append(f"unknown keys in paths: {unknown}")
    enc_raw = raw.get("encoder", {})
    if not isinstance(enc_raw, dict):
        errors.append("encoder: expected an object")
        enc_raw = {}
    unknown = sorted(set(enc_raw) - _ENCODER_KEYS)
    if unknown:
        errors.append(f"unknown keys in encoder: {unknown}")

    algorithm = raw.get("algorithm")
    if not algorithm:
        errors.append("algorithm: required (one of proto, fomaml, finetune)")
    elif algorithm not in ALGORITHMS:
        errors.append(f"algorithm: {algorithm!r} is not one of {list(ALGORITHMS)}")
    k_max = raw.get("k_max")
    if k_max is None:
        errors.append("k_max: required (e.g. 20 or 100)")
    else:
        k_max = _positive(errors, "k_max", k_max, int)
        if k_max is not None and k_max < 3:
            errors.append(f"k_max: must be at least 3, got {k_max}")
    datasets = raw.get("datasets")
    if not datasets or not isinstance(datasets, list) or not all(isinstance(d, str) for d in datasets):
        errors.append("datasets: required non-empty list of dataset names")
        datasets = []
    joint = raw.get("joint", False)
    if not isinstance(joint, bool):
        errors.append(f"joint: expected true/false, got {joint!r}")

    seeds = raw.get("seeds", list(DEFAULT_SEEDS))
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        errors.append(f"seeds: expected a non-empty list of integers, got {seeds!r}")
        seeds = []

    def resolve(key, required):
        value = paths.get(key)
        if value is None:
            if required:
                errors.append(f"paths.{key}: required")
            return None
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    data_dir = resolve("data", True)
    output_dir = resolve("output", True)
    embeddings = resolve("embeddings", False)
    contextual = enc_raw.get("contextual_vectors")
    if contextual is not None:
        cp = Path(contextual)
        contextual = str(cp if cp.is_absolute() else base_dir / cp)
        if not Path(contextual).exists():
            errors.append(f"encoder.contextual_vectors: path does not exist: {contextual}")
    elif embeddings is None:
        errors.append("paths.embeddings: required unless encoder.contextual_vectors is set")
    if data_dir is not None and not data_dir.is_dir():
        errors.append(f"paths.data: directory does not exist: {data_dir}")
    if embeddings is not None and not embeddings.exists():
        errors.append(f"paths.embeddings: file does not exist: {embeddings}")

    slot_repr = enc_raw.get("slot_repr", "token")
    if slot_repr not in SLOT_REPRESENTATIONS:
        errors.append(f"encoder.slot_repr: {slot_repr!r} is not one of {list(SLOT_REPRESENTATIONS)}")
    hidden = _positive(errors, "encoder.hidden_dim", enc_raw.get("hidden_dim", 256), int)

    outer_default = DEFAULT_OUTER_LR.get(algorithm, 0.001)
    epochs_default = DEFAULT_EPOCHS_CONTEXTUAL if contextual else DEFAULT_EPOCHS
    numeric = {
        "outer_lr": (raw.get("outer_lr", outer_default), float, False),
        "inner_lr": (raw.get("inner_lr", DEFAULT_INNER_LR), float, False),
        "inner_steps": (raw.get("inner_steps", DEFAULT_INNER_STEPS), int, True),
        "baseline_batch": (raw.get("baseline_batch", DEFAULT_BASELINE_BATCH), int, False),
        "baseline_adapt_steps": (raw.get("baseline_adapt_steps", DEFAULT_ADAPT_STEPS), int, True),
        "epochs": (raw.get("epochs", epochs_default), int, True),
        "episodes_per_epoch": (raw.get("episodes_per_epoch", DEFAULT_EPISODES_PER_EPOCH), int, False),
        "eval_episodes": (raw.get("eval_episodes", DEFAULT_EVAL_EPISODES), int, False),
    }
    values = {k: _positive(errors, k, v, kind, allow_zero) for k, (v, kind, allow_zero) in numeric.items()}

    if data_dir is not None and data_dir.is_dir():
        for d in datasets:
            if not (data_dir / f"{d}.train.txt").exists():
                errors.append(f"paths.data: missing training split {data_dir / (d + '.train.txt')}")

    if errors:
        raise ConfigError("invalid run config:\n  " + "\n  ".join(errors))
    return RunConfig(
        algorithm=algorithm, k_max=k_max, datasets=list(datasets), data_dir=data_dir,
        output_dir=output_dir, embeddings=embeddings, seeds=list(seeds), joint=joint,
        encoder=EncoderSettings(hidden, slot_repr, contextual), **values,
    )


def read_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_run_config(raw, path.parent)
