from __future__ import annotations

import numpy as np
import pytest

from fewshot_icsf.algorithms import JointModel
from fewshot_icsf.data.corpus import UtteranceRecord
from fewshot_icsf.encoder import EmbeddingTable, EncoderConfig, TokenFeaturizer, Vocabulary, init_encoder
from fewshot_icsf.sampling import Episode, EpisodeExample, EpisodeTrace

PLAYLIST_TOKENS = ("Please", "add", "some", "Pete", "Townshend", "to", "my", "playlist", "Fiesta", "Hits",
                  "con", "Lali")
PLAYLIST_SLOTS = ("O", "O", "O", "AddToPlaylist:artist", "AddToPlaylist:artist", "O",
                 "AddToPlaylist:playlist_owner", "O", "AddToPlaylist:playlist", "AddToPlaylist:playlist",
                 "AddToPlaylist:playlist", "AddToPlaylist:playlist")

PLAYLIST_BLOCK = "# intent: AddToPlaylist\n" + "".join(
    f"{t}\t{s}\n" for t, s in zip(PLAYLIST_TOKENS, PLAYLIST_SLOTS))


@pytest.fixture
def playlist_record() -> UtteranceRecord:
    return UtteranceRecord("0", PLAYLIST_TOKENS, PLAYLIST_SLOTS, "AddToPlaylist")


def make_example(uid: str, intent: str, pairs: str) -> EpisodeExample:
    """``"a/X b/O"`` -> tokens (a, b) with slots (X, O)."""
    tokens, slots = zip(*(p.split("/") for p in pairs.split()))
    return EpisodeExample(uid, tuple(tokens), tuple(slots), intent)


def make_episode(support: list[EpisodeExample], query: list[EpisodeExample]) -> Episode:
    classes = sorted({e.intent for e in support})
    trace = EpisodeTrace(len(classes), classes, 1, 1.0, {c: 0.0 for c in classes},
                         {c: 1.0 / len(classes) for c in classes}, {c: 1 for c in classes}, len(support), 20)
    return Episode(support, query, trace)


@pytest.fixture
def tiny_episode() -> Episode:
    """Two intents, three-token utterances."""
    support = [
        make_example("s1", "Play", "play/O jazz/Play:genre now/O"),
        make_example("s2", "Play", "play/O rock/Play:genre loud/O"),
        make_example("s3", "Book", "book/O paris/Book:city today/O"),
        make_example("s4", "Book", "book/O rome/Book:city soon/O"),
    ]
    query = [
        make_example("q1", "Play", "play/O rock/Play:genre now/O"),
        make_example("q2", "Book", "book/O paris/Book:city soon/O"),
    ]
    return make_episode(support, query)


def tiny_model(episode: Episode, dim: int = 4, hidden: int = 3, seed: int = 0):
    words = sorted({t for ex in episode.support + episode.query for t in ex.tokens})
    vocab = Vocabulary(words)
    table = EmbeddingTable.random(vocab, dim, np.random.default_rng(seed + 100))
    model = JointModel(EncoderConfig(dim, hidden), TokenFeaturizer(table))
    params = init_encoder(model.config, np.random.default_rng(seed))
    return model, params, table


def numeric_param_grads(loss_fn, params, h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences of ``loss_fn(params)`` with respect to every entry of every parameter."""
    from fewshot_icsf.autodiff import no_grad

    grads = {}
    with no_grad():
        for name, p in params.items():
            g = np.zeros_like(p.data)
            flat, gflat = p.data.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + h
                up = loss_fn(params).item()
                flat[i] = saved - h
                down = loss_fn(params).item()
                flat[i] = saved
                gflat[i] = (up - down) / (2 * h)
            grads[name] = g
    return grads
