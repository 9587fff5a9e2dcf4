"""JSON model and dataset files.

Model file::

    {"kind": "categorical" | "gaussian1d", "K": int, "alpha": [...],
     "beta": [[...], ...], "emissions": [{...}, ...]}

with ``{"probs": [...]}`` (categorical) or ``{"mean": m, "variance": v}``
(gaussian1d) per state.  Dataset file::

    {"kind": ..., "alphabet": [str, ...] (optional), "n_symbols": int (categorical),
     "sequences": [[...], ...]}

Floats are written with Python's shortest round-trip repr, so files reload
bit-for-bit.
"""
import json
import os

import numpy as np

from .core import CATEGORICAL, HmmParams, SequenceSet


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def params_to_dict(params):
    if params.kind == CATEGORICAL:
        emissions = [{"probs": _floats(row)} for row in params.probs]
    else:
        emissions = [{"mean": float(m), "variance": float(v)}
                     for m, v in zip(params.means, params.variances)]
    return {
        "kind": params.kind,
        "K": int(params.n_states),
        "alpha": _floats(params.alpha),
        "beta": [_floats(row) for row in params.beta],
        "emissions": emissions,
    }


def params_from_dict(d):
    try:
        kind = d["kind"]
        K = int(d["K"])
        em = d["emissions"]
        if len(em) != K:
            raise ValueError(f"model declares K={K} but has {len(em)} emissions")
        if kind == CATEGORICAL:
            return HmmParams(kind, d["alpha"], d["beta"], probs=[e["probs"] for e in em])
        return HmmParams(kind, d["alpha"], d["beta"],
                         means=[e["mean"] for e in em],
                         variances=[e["variance"] for e in em])
    except KeyError as exc:
        raise ValueError(f"model file is missing field {exc}") from None


def dataset_to_dict(data):
    out = {"kind": data.kind}
    if data.alphabet is not None:
        out["alphabet"] = list(data.alphabet)
    if data.kind == CATEGORICAL:
        out["n_symbols"] = int(data.n_symbols)
        out["sequences"] = [[int(v) for v in s] for s in data.sequences]
    else:
        out["sequences"] = [_floats(s) for s in data.sequences]
    return out


def dataset_from_dict(d):
    try:
        return SequenceSet(d["kind"], d["sequences"], alphabet=d.get("alphabet"),
                           n_symbols=d.get("n_symbols"))
    except KeyError as exc:
        raise ValueError(f"dataset file is missing field {exc}") from None


def dumps(obj):
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_params(params, path):
    write_json(path, params_to_dict(params))


def load_params(path):
    return params_from_dict(read_json(path))


def save_dataset(data, path):
    write_json(path, dataset_to_dict(data))


def load_dataset(path):
    return dataset_from_dict(read_json(path))
