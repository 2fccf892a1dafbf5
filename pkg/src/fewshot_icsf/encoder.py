"""Frozen embeddings -> bidirectional LSTM -> intent / slot output layers."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .autodiff import ParameterSet, Tensor, ShapeError, xavier_uniform
from .autodiff import tensor as T

UNK = "<unk>"


class EmbeddingFormatError(ValueError):
    pass


class EmbeddingWarning(UserWarning):
    pass


class EmptyUtteranceError(ValueError):
    pass


class Vocabulary:
    """Token to row index; row 0 is the unknown token."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.index: dict[str, int] = {UNK: 0}
        self.tokens: list[str] = [UNK]
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self.index.get(token)
        if idx is None:
            idx = self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return idx

    def lookup(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.index.get(t, 0) for t in tokens], dtype=np.intp)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index


@dataclass
class EmbeddingTable:
    """Read-only embedding matrix; never part of a :class:`ParameterSet`."""

    vocabulary: Vocabulary
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.array(self.matrix, dtype=np.float64)
        if self.matrix.shape[0] != len(self.vocabulary):
            raise ValueError(f"{self.matrix.shape[0]} rows for {len(self.vocabulary)} vocabulary entries")
        self.matrix.flags.writeable = False

    @property
    def frozen(self) -> bool:
        return True

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def lookup(self, tokens: Sequence[str]) -> np.ndarray:
        return self.matrix[self.vocabulary.lookup(tokens)]

    @classmethod
    def random(cls, vocabulary: Vocabulary, dim: int, rng: np.random.Generator, std: float = 1.0) -> EmbeddingTable:
        """Gaussian rows with per-component ``std``; the unknown row is zero."""
        matrix = rng.normal(scale=std, size=(len(vocabulary), dim))
        matrix[0] = 0.0
        return cls(vocabulary, matrix)


@dataclass
class EmbeddingCoverage:
    vocabulary_size: int
    found: int
    missing: int
    duplicates: int

    @property
    def ratio(self) -> float:
        known = self.vocabulary_size - 1
        return self.found / known if known else 1.0


def load_embeddings(path: str | Path, vocabulary: Vocabulary | None = None
                    ) -> tuple[EmbeddingTable, EmbeddingCoverage]:
    """Read ``token v1 ... vE`` lines.

    With no ``vocabulary`` one is built from the file. Tokens the file lacks
    (and the unknown token) get zero rows. A token listed twice keeps its
    last vector and triggers an :class:`EmbeddingWarning`.
    """
    vectors: dict[str, np.ndarray] = {}
    dim = None
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise EmbeddingFormatError(f"{path}:{lineno}: no vector values")
            elif len(values) != dim:
                raise EmbeddingFormatError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: {exc}") from exc
            if token in vectors:
                duplicates += 1
                warnings.warn(f"{path}:{lineno}: duplicate token {token!r}; keeping the last vector",
                              EmbeddingWarning, stacklevel=2)
            vectors[token] = vec
    if dim is None:
        raise EmbeddingFormatError(f"{path}: empty embedding file")
    if vocabulary is None:
        vocabulary = Vocabulary(vectors)
    matrix = np.zeros((len(vocabulary), dim))
    found = 0
    for idx, token in enumerate(vocabulary.tokens):
        if idx and token in vectors:
            matrix[idx] = vectors[token]
            found += 1
    coverage = EmbeddingCoverage(len(vocabulary), found, len(vocabulary) - 1 - found, duplicates)
    return EmbeddingTable(vocabulary, matrix), coverage


def load_contextual_vectors(path: str | Path) -> dict[str, np.ndarray]:
    """Per-utterance token vectors: ``# id: <id>`` then m lines of E floats."""
    out: dict[str, np.ndarray] = {}
    current: str | None = None
    rows: list[list[float]] = []
    dim = None

    def flush():
        if current is not None:
            if not rows:
                raise EmbeddingFormatError(f"{path}: utterance {current!r} has no vectors")
            out[current] = np.array(rows)

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("# id:"):
                flush()
                current, rows = line[len("# id:"):].strip(), []
                continue
            if current is None:
                raise EmbeddingFormatError(f"{path}:{lineno}: vector before any '# id:' line")
            values = [float(v) for v in line.split()]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise EmbeddingFormatError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
            rows.append(values)
    flush()
    return out


class HasTokens(Protocol):
    id: str
    tokens: Sequence[str]


class TokenFeaturizer:
    """Maps an utterance to its (m, E) input matrix by table lookup."""

    def __init__(self, table: EmbeddingTable):
        self.table = table

    @property
    def dim(self) -> int:
        return self.table.dim

    def __call__(self, utterance: HasTokens) -> np.ndarray:
        return self.table.lookup(utterance.tokens)


class ContextualFeaturizer:
    """Looks up precomputed per-token vectors by utterance id."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        self.vectors = vectors
        first = next(iter(vectors.values()), None)
        self._dim = 0 if first is None else first.shape[1]

    @property
    def dim(self) -> int:
        return self._dim

    def __call__(self, utterance: HasTokens) -> np.ndarray:
        vec = self.vectors.get(utterance.id)
        if vec is None:
            raise KeyError(f"no contextual vectors for utterance {utterance.id!r}")
        if len(vec) != len(utterance.tokens):
            raise ShapeError(f"utterance {utterance.id!r}: {len(vec)} vectors for {len(utterance.tokens)} tokens")
        return vec


@dataclass
class EncoderConfig:
    embedding_dim: int
    hidden_dim: int = 256
    contextual_vectors: bool = False
    slot_repr: str = "token"

    def __post_init__(self):
        if self.embedding_dim <= 0 or self.hidden_dim <= 0:
            raise ValueError("embedding_dim and hidden_dim must be positive")
        if self.slot_repr not in ("token", "prefix"):
            raise ValueError(f"slot_repr must be 'token' or 'prefix', got {self.slot_repr!r}")

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden_dim


def init_encoder(config: EncoderConfig, rng: np.random.Generator) -> ParameterSet:
    e, h = config.embedding_dim, config.hidden_dim
    params = ParameterSet()
    for direction in ("fwd", "bwd"):
        params[f"encoder.{direction}.weight"] = Tensor(xavier_uniform(rng, e + h, 4 * h), requires_grad=True)
        params[f"encoder.{direction}.bias"] = Tensor(np.zeros(4 * h), requires_grad=True)
    return params


def init_heads(num_intents: int, num_slots: int, dim: int, rng: np.random.Generator | None = None) -> ParameterSet:
    """Output layers; zero-initialized when ``rng`` is None."""
    def weight(n):
        return np.zeros((dim, n)) if rng is None else xavier_uniform(rng, dim, n)
    return ParameterSet({
        "intent_head.weight": Tensor(weight(num_intents), requires_grad=True),
        "intent_head.bias": Tensor(np.zeros(num_intents), requires_grad=True),
        "slot_head.weight": Tensor(weight(num_slots), requires_grad=True),
        "slot_head.bias": Tensor(np.zeros(num_slots), requires_grad=True),
    })


@dataclass
class BatchEncoding:
    """Encoder output for a batch of utterances.

    ``tokens`` stacks every utterance's per-token states, utterance by
    utterance; ``spans[b]`` gives the rows belonging to utterance ``b``.
    """

    tokens: Tensor     # (sum m_b, 2H)
    sentence: Tensor   # (B, 2H)
    spans: list[tuple[int, int]]


@dataclass
class EncodedUtterance:
    token_states: Tensor     # (m, 2H)
    sentence_vector: Tensor  # (2H,)

    @property
    def tokens(self) -> Tensor:
        return self.token_states

    @property
    def sentence(self) -> Tensor:
        return T.reshape(self.sentence_vector, (1, -1))


def _run_direction(inputs: np.ndarray, mask: np.ndarray, weight: Tensor, bias: Tensor,
                   reverse: bool) -> tuple[list[Tensor], Tensor]:
    steps, batch, _ = inputs.shape
    hdim = bias.shape[0] // 4
    state = Tensor._wrap(np.zeros((batch, 2 * hdim)))
    hidden: list[Tensor | None] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        state = T.lstm_cell(Tensor._wrap(inputs[t]), state, weight, bias, mask[t])
        hidden[t] = state
    return hidden, state


def encode_batch(params: ParameterSet, inputs: Sequence[np.ndarray]) -> BatchEncoding:
    """Run both LSTM directions over right-padded inputs.

    Padded steps leave the state untouched, so the forward state at the last
    step equals the state after each utterance's final token and the
    backward state at step 0 equals the state after its first token.
    """
    if not inputs:
        raise EmptyUtteranceError("no utterances to encode")
    lengths = [len(x) for x in inputs]
    if min(lengths) == 0:
        raise EmptyUtteranceError("cannot encode an utterance with zero tokens")
    w_f, b_f = params["encoder.fwd.weight"], params["encoder.fwd.bias"]
    w_b, b_b = params["encoder.bwd.weight"], params["encoder.bwd.bias"]
    hdim = b_f.shape[0] // 4
    edim = w_f.shape[0] - hdim
    steps, batch = max(lengths), len(inputs)
    padded = np.zeros((steps, batch, edim))
    mask = np.zeros((steps, batch))
    for b, x in enumerate(inputs):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != edim:
            raise ShapeError(f"utterance {b}: input shape {x.shape}, encoder expects (m, {edim})")
        padded[:len(x), b] = x
        mask[:len(x), b] = 1.0

    fwd, fwd_final = _run_direction(padded, mask, w_f, b_f, reverse=False)
    bwd, bwd_final = _run_direction(padded, mask, w_b, b_b, reverse=True)

    # (steps, batch, 2*2H) -> keep hidden halves only
    packed = T.concat([T.stack(fwd, axis=0), T.stack(bwd, axis=0)], axis=2)
    flat = T.reshape(packed, (steps * batch, 4 * hdim))
    rows, spans = [], []
    for b, m in enumerate(lengths):
        spans.append((len(rows), len(rows) + m))
        rows.extend(t * batch + b for t in range(m))
    selected = T.take_rows(flat, rows)
    tokens = T.concat([selected[:, :hdim], selected[:, 2 * hdim:3 * hdim]], axis=1)
    sentence = T.concat([fwd_final[:, :hdim], bwd_final[:, :hdim]], axis=1)
    return BatchEncoding(tokens, sentence, spans)


def encode_utterance(params: ParameterSet, token_ids: Sequence[int], table: EmbeddingTable) -> EncodedUtterance:
    """Encode one utterance given as vocabulary indices."""
    token_ids = np.asarray(token_ids, dtype=np.intp)
    if token_ids.size == 0:
        raise EmptyUtteranceError("cannot encode an utterance with zero tokens")
    enc = encode_batch(params, [table.matrix[token_ids]])
    return EncodedUtterance(enc.tokens, T.reshape(enc.sentence, (-1,)))


def encode_examples(params: ParameterSet, inputs: Sequence[np.ndarray], slot_repr: str = "token"
                    ) -> tuple[Tensor, Tensor, list[tuple[int, int]]]:
    """Sentence vectors and per-token slot representations for a batch.

    ``slot_repr="prefix"`` represents token j by the sentence vector of the
    prefix ending at j (quadratic cost) instead of the bidirectional state.
    """
    enc = encode_batch(params, inputs)
    if slot_repr == "token":
        return enc.sentence, enc.tokens, enc.spans
    if slot_repr != "prefix":
        raise ValueError(f"unknown slot representation {slot_repr!r}")
    prefixes = [x[:j + 1] for x in inputs for j in range(len(x))]
    return enc.sentence, encode_batch(params, prefixes).sentence, enc.spans


def head_forward(params: ParameterSet, encoded: BatchEncoding | EncodedUtterance, head: str,
                 num_classes: int | None = None) -> Tensor:
    """Logits of the ``intent`` head (per utterance) or ``slot`` head (per token)."""
    if head not in ("intent", "slot"):
        raise ValueError(f"head must be 'intent' or 'slot', got {head!r}")
    weight, bias = params[f"{head}_head.weight"], params[f"{head}_head.bias"]
    feats = encoded.sentence if head == "intent" else encoded.tokens
    if weight.shape[0] != feats.shape[1] or bias.shape != (weight.shape[1],):
        raise ShapeError(f"{head} head {weight.shape}/{bias.shape} does not fit features {feats.shape}")
    if num_classes is not None and weight.shape[1] != num_classes:
        raise ShapeError(f"{head} head has {weight.shape[1]} classes, episode needs {num_classes}")
    logits = linear(feats, weight, bias)
    if head == "intent" and isinstance(encoded, EncodedUtterance):
        return T.reshape(logits, (-1,))
    return logits


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return T.add(T.matmul(x, weight), bias)
