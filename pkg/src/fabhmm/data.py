"""Synthetic ground-truth generation and character-level text ingestion."""
from dataclasses import dataclass, field
from typing import List, NamedTuple, Tuple

import numpy as np

from .core import CATEGORICAL, GAUSSIAN, KINDS, HmmParams, SequenceSet, sample


def _default_transitions():
    return ((0.0, 0.5, 0.5, 0.0),
            (0.0, 0.0, 0.5, 0.5),
            (0.5, 0.0, 0.0, 0.5),
            (0.5, 0.5, 0.0, 0.0))


@dataclass(frozen=True)
class GroundTruthSpec:
    """The fixed four-state generator used by the model-selection studies.

    The categorical emission matrix gives state ``k`` probability 1/3 on
    ``emission_width`` consecutive symbols starting at column
    ``emission_offset + emission_stride * k``, wrapping around the alphabet.
    This layout is a reconstruction; change the offset to try alternatives.
    """

    means: Tuple[float, ...] = (-4.0, -1.0, 2.0, 3.0)
    variances: Tuple[float, ...] = (0.5, 0.5, 0.5, 0.5)
    transitions: Tuple[Tuple[float, ...], ...] = field(default_factory=_default_transitions)
    initial_state: int = 0
    n_symbols: int = 8
    emission_width: int = 3
    emission_stride: int = 2
    emission_offset: int = 0

    @property
    def n_states(self):
        return len(self.means)

    def emission_matrix(self):
        K, V = self.n_states, self.n_symbols
        probs = np.zeros((K, V))
        for k in range(K):
            cols = (self.emission_offset + self.emission_stride * k + np.arange(self.emission_width)) % V
            probs[k, cols] = 1.0 / self.emission_width
        return probs

    def params(self, kind):
        alpha = np.zeros(self.n_states)
        alpha[self.initial_state] = 1.0
        beta = np.array(self.transitions, dtype=float)
        if kind == CATEGORICAL:
            return HmmParams(kind, alpha, beta, probs=self.emission_matrix())
        if kind == GAUSSIAN:
            return HmmParams(kind, alpha, beta, means=self.means, variances=self.variances)
        raise ValueError(f"unknown emission kind {kind!r}; expected one of {KINDS}")


GROUND_TRUTH = GroundTruthSpec()


def _symbol_names(kind, truth):
    return [str(v) for v in range(truth.n_symbols)] if kind == CATEGORICAL else None


def _draw(kind, T, seed_seq, truth):
    obs, states = sample(truth.params(kind), T, np.random.Generator(np.random.PCG64(seed_seq)))
    return SequenceSet(kind, [obs], alphabet=_symbol_names(kind, truth), meta={"states": [states]})


def gen_synthetic(kind, T, seed, test_length=None, truth=GROUND_TRUTH):
    """Sample one training sequence of length ``T`` from the ground truth.

    With ``test_length`` a ``(train, test)`` pair is returned; the training
    sequence is the same whether or not a test sequence is requested.  The
    hidden state paths are kept in ``meta["states"]``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    train_ss, test_ss = np.random.SeedSequence(seed).spawn(2)
    train = _draw(kind, T, train_ss, truth)
    if test_length is None:
        return train
    return train, _draw(kind, test_length, test_ss, truth)


class TextSplit(NamedTuple):
    train: SequenceSet
    test: SequenceSet
    alphabet: List[str]
    n_filtered: int


def ingest_text(raw, train_chars, test_chars):
    """Split a character stream into training and test symbol sequences.

    The alphabet is the sorted set of characters in the training slice.
    Test characters outside it are dropped and counted in ``n_filtered``.
    Characters are used as-is (no case folding or normalization).
    """
    if isinstance(raw, (bytes, bytearray)):
        raw = raw.decode("utf-8")
    if train_chars < 1:
        raise ValueError("empty training slice")
    if len(raw) < train_chars:
        raise ValueError(f"text has {len(raw)} characters, fewer than train_chars={train_chars}")
    train_text = raw[:train_chars]
    test_text = raw[train_chars:train_chars + test_chars]
    alphabet = sorted(set(train_text))
    ids = {ch: i for i, ch in enumerate(alphabet)}
    kept = [ch for ch in test_text if ch in ids]
    n_filtered = len(test_text) - len(kept)
    train = SequenceSet(CATEGORICAL, [[ids[ch] for ch in train_text]], alphabet=alphabet)
    if kept:
        test = SequenceSet(CATEGORICAL, [[ids[ch] for ch in kept]], alphabet=alphabet,
                           meta={"n_filtered": n_filtered})
    else:
        test = None
    return TextSplit(train, test, alphabet, n_filtered)


def decode_text(data):
    """Inverse of ingestion for one categorical dataset: ids back to text."""
    if data.alphabet is None:
        raise ValueError("dataset has no alphabet")
    return ["".join(data.alphabet[i] for i in seq) for seq in data.sequences]
