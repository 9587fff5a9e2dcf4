"""Opt-in invariant assertions for posteriors and regularizers.

Enabled with ``FABHMM_CHECK_INVARIANTS=1`` or :func:`check_invariants`.
"""
import contextlib
import os

import numpy as np

_state = {
    "enabled": os.environ.get("FABHMM_CHECK_INVARIANTS", "") not in ("", "0"),
    "checks": 0,
    "failures": 0,
}


def enabled():
    return _state["enabled"]


def n_checks():
    """Number of invariant checks performed so far in this process."""
    return _state["checks"]


def n_failures():
    """Number of checks that raised."""
    return _state["failures"]


def _fail(msg):
    _state["failures"] += 1
    raise AssertionError(msg)


def set_enabled(flag):
    _state["enabled"] = bool(flag)


@contextlib.contextmanager
def check_invariants(flag=True):
    """Context manager turning invariant assertions on (or off)."""
    old = _state["enabled"]
    _state["enabled"] = bool(flag)
    try:
        yield
    finally:
        _state["enabled"] = old


def assert_posterior(post, atol=1e-10):
    gamma, xi = post.gamma, post.xi
    if not np.allclose(gamma.sum(axis=1), 1.0, rtol=0, atol=atol):
        _fail("gamma rows do not sum to one")
    if np.any(gamma < -atol) or np.any(xi < -atol):
        _fail("negative posterior mass")
    if len(xi):
        if not np.allclose(xi.sum(axis=(1, 2)), 1.0, rtol=0, atol=atol):
            _fail("xi slices do not sum to one")
        if not np.allclose(xi.sum(axis=2), gamma[:-1], rtol=0, atol=atol):
            _fail("xi row marginals differ from gamma[t-1]")
        if not np.allclose(xi.sum(axis=1), gamma[1:], rtol=0, atol=atol):
            _fail("xi column marginals differ from gamma[t]")
    _state["checks"] += 1


def assert_delta(delta, atol=1e-12):
    for name in ("interior", "final"):
        w = getattr(delta, name)
        if abs(w.sum() - 1.0) > atol:
            _fail(f"delta_{name} does not sum to one")
        if np.any(w <= 0) or np.any(w > 1):
            _fail(f"delta_{name} outside (0, 1]")
    _state["checks"] += 1
