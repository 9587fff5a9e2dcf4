"""Input validation for the estimator interface.

Observations follow the common HMM-library layout: a concatenated array
``X`` of shape (n_samples,) or (n_samples, 1), plus optional ``lengths``
giving the length of every sequence in order.  A ``SequenceSet`` or a list of
1-d arrays is accepted as well.
"""
import numbers

import numpy as np
from sklearn.utils import check_random_state

from .core import CATEGORICAL, GAUSSIAN, KINDS, SequenceSet


def _infer_kind(arrays):
    if all(np.issubdtype(a.dtype, np.integer) or a.dtype == bool for a in arrays):
        return CATEGORICAL
    return GAUSSIAN


def check_sequences(X, lengths=None, kind="auto", n_symbols=None):
    """Coerce ``X`` (and ``lengths``) into a :class:`SequenceSet`.

    Parameters
    ----------
    X : SequenceSet, list of 1-d arrays, or array of shape (n_samples,) or (n_samples, 1)
    lengths : array-like of int, optional
        Sequence lengths summing to ``n_samples``. Only valid with an array ``X``.
    kind : {'auto', 'categorical', 'gaussian1d'}
        'auto' picks categorical for integer input, gaussian1d otherwise.
    n_symbols : int, optional
        Alphabet size for categorical data.
    """
    if isinstance(X, SequenceSet):
        if lengths is not None:
            raise ValueError("lengths cannot be combined with a SequenceSet")
        if kind not in ("auto", X.kind):
            raise ValueError(f"expected {kind} data, got {X.kind}")
        if n_symbols is not None and X.kind == CATEGORICAL and X.n_symbols != n_symbols:
            return SequenceSet(X.kind, X.sequences, alphabet=None, n_symbols=n_symbols)
        return X
    if isinstance(X, (list, tuple)) and len(X) and all(np.ndim(s) == 1 for s in X):
        if lengths is not None:
            raise ValueError("lengths cannot be combined with a list of sequences")
        arrays = [np.asarray(s) for s in X]
    else:
        arr = np.asarray(X)
        if arr.ndim == 2 and arr.shape[1] == 1:
            arr = arr[:, 0]
        if arr.ndim != 1:
            raise ValueError(f"expected observations of shape (n_samples,) or (n_samples, 1), got {arr.shape}")
        if arr.size == 0:
            raise ValueError("no observations")
        if lengths is None:
            arrays = [arr]
        else:
            lengths = np.asarray(lengths, dtype=int)
            if lengths.ndim != 1 or np.any(lengths < 1) or lengths.sum() != arr.size:
                raise ValueError("lengths must be positive and sum to the number of samples")
            arrays = np.split(arr, np.cumsum(lengths)[:-1])
    if kind == "auto":
        kind = _infer_kind(arrays)
    if kind not in KINDS:
        raise ValueError(f"unknown emission kind {kind!r}")
    return SequenceSet(kind, arrays, n_symbols=n_symbols)


def check_seed(random_state):
    """Turn an sklearn-style ``random_state`` into an integer seed or None."""
    if random_state is None:
        return None
    if isinstance(random_state, numbers.Integral) and not isinstance(random_state, bool):
        if random_state < 0:
            raise ValueError("random_state must be non-negative")
        return int(random_state)
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(2 ** 32))
    return int(check_random_state(random_state).randint(2 ** 32))
