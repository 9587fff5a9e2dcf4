"""HMM representation, emission densities and scaled forward-backward.

Observation sequences are 1-d numpy arrays: integer symbol ids for
categorical emissions, floats for one-dimensional Gaussian emissions.
"""
import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import _debug
from ._kernels import forward_backward_scaled, forward_scaled
from .exceptions import DomainError, InstanceTooLargeError, NumericalDegeneracyError

CATEGORICAL = "categorical"
GAUSSIAN = "gaussian1d"
KINDS = (CATEGORICAL, GAUSSIAN)

VARIANCE_FLOOR = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)
_SUM_TOL = 1e-12


def _check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"unknown emission kind {kind!r}; expected one of {KINDS}")
    return kind


@dataclass(frozen=True)
class EmissionModel:
    """Emission distribution of a single hidden state.

    Parameters
    ----------
    kind : {'categorical', 'gaussian1d'}
    probs : ndarray of shape (V,), optional
        Symbol probabilities (categorical only).
    mean, variance : float
        Gaussian parameters (gaussian1d only).
    """

    kind: str
    probs: Optional[np.ndarray] = None
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        _check_kind(self.kind)
        if self.kind == CATEGORICAL:
            p = np.asarray(self.probs, dtype=float)
            if p.ndim != 1 or p.size == 0:
                raise ValueError("categorical emission needs a 1-d probability vector")
            if np.any(p < 0) or abs(p.sum() - 1.0) > _SUM_TOL:
                raise ValueError("categorical probabilities must be non-negative and sum to 1")
            object.__setattr__(self, "probs", p)
        elif not self.variance >= VARIANCE_FLOOR:
            raise ValueError(f"variance {self.variance} below floor {VARIANCE_FLOOR}")

    @property
    def n_free_params(self):
        return self.probs.size - 1 if self.kind == CATEGORICAL else 2


def log_emission(emission, obs):
    """Log mass (categorical) or log density (gaussian1d) of one observation."""
    if emission.kind == CATEGORICAL:
        v = int(obs)
        if v != obs or not 0 <= v < emission.probs.size:
            raise DomainError(f"symbol {obs!r} outside alphabet of size {emission.probs.size}")
        p = emission.probs[v]
        return float(np.log(p)) if p > 0 else -np.inf
    x = float(obs)
    return -0.5 * (_LOG_2PI + np.log(emission.variance)) - 0.5 * (x - emission.mean) ** 2 / emission.variance


@dataclass
class HmmParams:
    """Parameters of a K-state HMM with a single emission family.

    ``beta[j, k]`` is the probability of moving from state ``j`` to state ``k``.
    Categorical emissions are stored as a ``(K, V)`` matrix ``probs``;
    Gaussian emissions as ``means`` and ``variances`` of shape ``(K,)``.
    """

    kind: str
    alpha: np.ndarray
    beta: np.ndarray
    probs: Optional[np.ndarray] = None
    means: Optional[np.ndarray] = None
    variances: Optional[np.ndarray] = None

    def __post_init__(self):
        _check_kind(self.kind)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        K = self.alpha.size
        if K < 1 or self.alpha.ndim != 1:
            raise ValueError("alpha must be a non-empty 1-d vector")
        if self.beta.shape != (K, K):
            raise ValueError(f"beta must have shape ({K}, {K}), got {self.beta.shape}")
        if np.any(self.alpha < 0) or abs(self.alpha.sum() - 1.0) > _SUM_TOL:
            raise ValueError("alpha must be a probability vector")
        if np.any(self.beta < 0) or np.any(np.abs(self.beta.sum(axis=1) - 1.0) > _SUM_TOL):
            raise ValueError("beta must be row-stochastic")
        if self.kind == CATEGORICAL:
            self.probs = np.asarray(self.probs, dtype=float)
            if self.probs.ndim != 2 or self.probs.shape[0] != K:
                raise ValueError("probs must have shape (K, V)")
            if np.any(self.probs < 0) or np.any(np.abs(self.probs.sum(axis=1) - 1.0) > _SUM_TOL):
                raise ValueError("each row of probs must be a probability vector")
            self.means = self.variances = None
        else:
            self.means = np.asarray(self.means, dtype=float).reshape(-1)
            self.variances = np.asarray(self.variances, dtype=float).reshape(-1)
            if self.means.shape != (K,) or self.variances.shape != (K,):
                raise ValueError("means and variances must have shape (K,)")
            if np.any(~(self.variances >= VARIANCE_FLOOR)):
                raise ValueError(f"variances must be >= {VARIANCE_FLOOR}")
            self.probs = None

    @classmethod
    def from_emissions(cls, alpha, beta, emissions: Sequence[EmissionModel]):
        kinds = {e.kind for e in emissions}
        if len(kinds) != 1:
            raise ValueError("all emissions must share one kind")
        kind = kinds.pop()
        if kind == CATEGORICAL:
            return cls(kind, alpha, beta, probs=np.stack([e.probs for e in emissions]))
        return cls(kind, alpha, beta,
                   means=[e.mean for e in emissions],
                   variances=[e.variance for e in emissions])

    @property
    def n_states(self):
        return self.alpha.size

    @property
    def n_symbols(self):
        return None if self.probs is None else self.probs.shape[1]

    @property
    def emissions(self) -> List[EmissionModel]:
        if self.kind == CATEGORICAL:
            return [EmissionModel(CATEGORICAL, probs=row) for row in self.probs]
        return [EmissionModel(GAUSSIAN, mean=float(m), variance=float(v))
                for m, v in zip(self.means, self.variances)]

    def dims(self):
        """Return ``(d_alpha, d_beta, d_phi)`` free-parameter dimensionalities."""
        K = self.n_states
        d_phi = self.probs.shape[1] - 1 if self.kind == CATEGORICAL else 2
        return K - 1, np.full(K, K - 1, dtype=float), np.full(K, d_phi, dtype=float)

    @property
    def n_free_params(self):
        d_alpha, d_beta, d_phi = self.dims()
        return int(d_alpha + d_beta.sum() + d_phi.sum())

    def log_emission_matrix(self, seq):
        """Per-position, per-state emission log values, shape ``(T, K)``."""
        seq = np.asarray(seq)
        if self.kind == CATEGORICAL:
            V = self.probs.shape[1]
            bad = (seq < 0) | (seq >= V) | (seq != np.floor(seq))
            if np.any(bad):
                raise DomainError(f"symbol {seq[bad][0]!r} outside alphabet of size {V}")
            seq = seq.astype(np.int64)
            with np.errstate(divide="ignore"):
                return np.log(self.probs.T[seq])
        x = seq.astype(float)[:, None]
        return -0.5 * (_LOG_2PI + np.log(self.variances)) - 0.5 * (x - self.means) ** 2 / self.variances

    def subset(self, states):
        """Restrict to ``states``, renormalizing alpha and beta rows."""
        idx = np.asarray(states, dtype=int)
        alpha = _renormalize(self.alpha[idx])
        beta = np.apply_along_axis(_renormalize, 1, self.beta[np.ix_(idx, idx)])
        if self.kind == CATEGORICAL:
            return HmmParams(self.kind, alpha, beta, probs=self.probs[idx])
        return HmmParams(self.kind, alpha, beta, means=self.means[idx], variances=self.variances[idx])


def _renormalize(v):
    s = v.sum()
    return v / s if s > 0 else np.full(v.size, 1.0 / v.size)


@dataclass
class SequenceSet:
    """A collection of N observation sequences of one emission kind.

    Parameters
    ----------
    kind : {'categorical', 'gaussian1d'}
    sequences : list of array-like
    alphabet : list of str, optional
        Symbol names; ``alphabet[i]`` is the symbol with id ``i``.
    n_symbols : int, optional
        Alphabet size. Defaults to ``len(alphabet)`` or the largest id plus one.
    """

    kind: str
    sequences: List[np.ndarray]
    alphabet: Optional[List[str]] = None
    n_symbols: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        _check_kind(self.kind)
        if len(self.sequences) < 1:
            raise ValueError("a SequenceSet needs at least one sequence")
        dtype = np.int64 if self.kind == CATEGORICAL else float
        seqs = []
        for n, s in enumerate(self.sequences):
            raw = np.asarray(s)
            if raw.ndim != 1 or raw.size < 1:
                raise ValueError(f"sequence {n} must be a non-empty 1-d array")
            arr = raw.astype(dtype)
            if self.kind == CATEGORICAL and np.any(arr != raw):
                raise ValueError(f"sequence {n} has non-integer symbols")
            if self.kind == GAUSSIAN and not np.all(np.isfinite(arr)):
                raise ValueError(f"sequence {n} has non-finite values")
            seqs.append(arr)
        self.sequences = seqs
        if self.kind == CATEGORICAL:
            hi = max(int(s.max()) for s in seqs)
            lo = min(int(s.min()) for s in seqs)
            if self.n_symbols is None:
                self.n_symbols = len(self.alphabet) if self.alphabet is not None else hi + 1
            if self.alphabet is not None and len(self.alphabet) != self.n_symbols:
                raise ValueError("alphabet length disagrees with n_symbols")
            if lo < 0 or hi >= self.n_symbols:
                raise DomainError(f"symbols must lie in [0, {self.n_symbols})")
        else:
            self.alphabet = None
            self.n_symbols = None

    @property
    def n_sequences(self):
        return len(self.sequences)

    @property
    def lengths(self):
        return np.array([s.size for s in self.sequences], dtype=int)

    @property
    def total_length(self):
        return int(self.lengths.sum())

    def __len__(self):
        return self.n_sequences

    def __iter__(self):
        return iter(self.sequences)


@dataclass
class Posterior:
    """State marginals of one sequence.

    ``gamma[t, k]`` is q(z_t = k); ``xi[t - 1, j, k]`` is q(z_{t-1} = j, z_t = k);
    ``logzeta[t]`` is the log of the per-step normalizer.
    """

    gamma: np.ndarray
    xi: np.ndarray
    logzeta: np.ndarray

    @property
    def log_normalizer(self):
        return float(self.logzeta.sum())


def _multiplier_logs(multipliers, K):
    """Return per-state log weights for interior and final positions, or None."""
    if multipliers is None:
        return None
    if hasattr(multipliers, "interior"):
        interior, final = multipliers.interior, multipliers.final
    else:
        interior, final = multipliers
    interior = np.asarray(interior, dtype=float)
    final = np.asarray(final, dtype=float)
    if interior.shape != (K,) or final.shape != (K,):
        raise ValueError(f"multipliers must each have shape ({K},)")
    if np.any(interior < 0) or np.any(final < 0):
        raise ValueError("multipliers must be non-negative")
    with np.errstate(divide="ignore"):
        return np.log(interior), np.log(final)


def effective_log_emissions(params, seq, multipliers=None):
    """Emission log values with the multiplier of each position class added."""
    log_e = params.log_emission_matrix(seq)
    mlog = _multiplier_logs(multipliers, params.n_states)
    if mlog is not None:
        log_e = log_e.copy()
        log_e[:-1] += mlog[0]
        log_e[-1] += mlog[1]
    return log_e


def _shift(log_e, sequence_index):
    shift = log_e.max(axis=1)
    dead = np.flatnonzero(~np.isfinite(shift))
    if dead.size:
        raise NumericalDegeneracyError(dead[0], sequence_index, "zero emission under every state")
    return np.exp(log_e - shift[:, None]), shift


def forward_backward(params, seq, multipliers=None, *, sequence_index=None):
    """Scaled forward-backward, optionally with per-state emission multipliers.

    Parameters
    ----------
    params : HmmParams
    seq : array-like of shape (T,)
    multipliers : DeltaRegularizer or (interior, final) pair, optional
        Per-state weights applied to the emission at positions ``t < T``
        (interior) and ``t = T`` (final). A length-one sequence uses the
        final weights only.
    sequence_index : int, optional
        Reported in degeneracy errors.

    Returns
    -------
    Posterior
    """
    log_e = effective_log_emissions(params, seq, multipliers)
    emis, shift = _shift(log_e, sequence_index)
    gamma, xi, c, fail = forward_backward_scaled(params.alpha, params.beta, emis)
    if fail >= 0:
        raise NumericalDegeneracyError(fail, sequence_index)
    post = Posterior(gamma, xi, np.log(c) + shift)
    if _debug.enabled():
        _debug.assert_posterior(post)
    return post


def loglik(params, seq, *, sequence_index=None):
    """Marginal log-likelihood log p(x | params) of one sequence."""
    emis, shift = _shift(params.log_emission_matrix(seq), sequence_index)
    _, c, fail = forward_scaled(params.alpha, params.beta, emis)
    if fail >= 0:
        raise NumericalDegeneracyError(fail, sequence_index)
    return float(np.log(c).sum() + shift.sum())


def _as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.PCG64(rng))


def _cdf(p):
    cdf = np.cumsum(p, axis=-1)
    cdf[..., -1] = 1.0
    return cdf


def sample(params, T, rng):
    """Draw ``(observations, states)`` of length ``T``.

    ``rng`` is an integer seed or a ``numpy.random.Generator``; integer seeds
    always use PCG64 so outputs are reproducible across platforms.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = _as_generator(rng)
    u = rng.random(T)
    alpha_cdf = _cdf(params.alpha)
    beta_cdf = _cdf(params.beta)
    states = np.empty(T, dtype=np.int64)
    states[0] = np.searchsorted(alpha_cdf, u[0], side="right")
    for t in range(1, T):
        states[t] = np.searchsorted(beta_cdf[states[t - 1]], u[t], side="right")
    if params.kind == CATEGORICAL:
        cdf = _cdf(params.probs)[states]
        obs = (cdf <= rng.random(T)[:, None]).sum(axis=1).astype(np.int64)
    else:
        obs = params.means[states] + np.sqrt(params.variances[states]) * rng.standard_normal(T)
    return obs, states


def brute_force_posterior(params, seq, multipliers=None, max_paths=10 ** 6):
    """Exact marginals by enumerating every hidden path (test oracle).

    Emission terms are evaluated one observation at a time through
    :func:`log_emission`, independently of the vectorized path.
    """
    seq = np.asarray(seq)
    K, T = params.n_states, seq.size
    if K ** T > max_paths:
        raise InstanceTooLargeError(f"K^T = {K}^{T} exceeds {max_paths} paths")
    mlog = _multiplier_logs(multipliers, K)
    ems = params.emissions
    log_e = np.empty((T, K))
    for t in range(T):
        for k in range(K):
            log_e[t, k] = log_emission(ems[k], seq[t])
            if mlog is not None:
                log_e[t, k] += mlog[1][k] if t == T - 1 else mlog[0][k]
    with np.errstate(divide="ignore"):
        log_a, log_b = np.log(params.alpha), np.log(params.beta)

    def path_logw(paths, upto):
        w = log_a[paths[:, 0]] + log_e[0, paths[:, 0]]
        for t in range(1, upto):
            w = w + log_b[paths[:, t - 1], paths[:, t]] + log_e[t, paths[:, t]]
        return w

    def logsum(w):
        m = w.max()
        return m + np.log(np.exp(w - m).sum()) if np.isfinite(m) else -np.inf

    # prefix marginals give the per-step normalizers
    prefix = np.empty(T)
    for t in range(1, T + 1):
        p = np.array(list(itertools.product(range(K), repeat=t)), dtype=np.int64)
        prefix[t - 1] = logsum(path_logw(p, t))
        if not np.isfinite(prefix[t - 1]):
            raise NumericalDegeneracyError(t - 1)
    paths = p
    w = np.exp(path_logw(paths, T) - prefix[-1])
    gamma = np.zeros((T, K))
    xi = np.zeros((max(T - 1, 0), K, K))
    for t in range(T):
        np.add.at(gamma[t], paths[:, t], w)
        if t:
            np.add.at(xi[t - 1], (paths[:, t - 1], paths[:, t]), w)
    logzeta = np.diff(np.concatenate([[0.0], prefix]))
    return Posterior(gamma, xi, logzeta)
