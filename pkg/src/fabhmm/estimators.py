"""scikit-learn style estimators.

>>> import numpy as np
>>> from fabhmm import FABHMM
>>> regimes = np.repeat([0.0, 5.0, 0.0, 5.0, 0.0, 5.0], 100)
>>> X = regimes + np.random.default_rng(0).normal(size=regimes.size)
>>> model = FABHMM(k_max=5, restarts=2, random_state=0).fit(X)
>>> model.n_states_
2
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_seed, check_sequences
from .baselines import fit_em_detailed, sweep_bic, total_loglik
from .core import CATEGORICAL, SequenceSet, forward_backward, sample
from .fab import FitConfig, fit_fab


class _HMMMixin:
    """Scoring, decoding and sampling shared by every fitted HMM estimator."""

    def _check_X(self, X, lengths):
        check_is_fitted(self, "params_")
        return check_sequences(X, lengths, kind=self.params_.kind,
                               n_symbols=self.params_.n_symbols)

    def score(self, X, lengths=None):
        """Total log-likelihood of ``X`` under the fitted model."""
        return total_loglik(self.params_, self._check_X(X, lengths))

    def score_samples(self, X, lengths=None):
        """Log-likelihood of each sequence."""
        data = self._check_X(X, lengths)
        return np.array([total_loglik(self.params_, SequenceSet(data.kind, [s], n_symbols=data.n_symbols))
                         for s in data.sequences])

    def predict_proba(self, X, lengths=None):
        """Posterior state probabilities, shape (n_samples, n_states)."""
        data = self._check_X(X, lengths)
        return np.concatenate([forward_backward(self.params_, s, sequence_index=n).gamma
                               for n, s in enumerate(data.sequences)])

    def predict(self, X, lengths=None):
        """Most probable state at each position (posterior decoding)."""
        return self.predict_proba(X, lengths).argmax(axis=1)

    def sample(self, n_samples=1, random_state=None):
        """Draw one sequence; returns ``(X, states)``."""
        check_is_fitted(self, "params_")
        return sample(self.params_, n_samples, check_seed(random_state))

    def _set_fitted(self, params, data):
        self.params_ = params
        self.n_states_ = params.n_states
        self.startprob_ = params.alpha
        self.transmat_ = params.beta
        if params.kind == CATEGORICAL:
            self.emissionprob_ = params.probs
            self.n_symbols_ = params.n_symbols
        else:
            self.means_ = params.means
            self.variances_ = params.variances
        self.emission_ = data.kind


class FABHMM(_HMMMixin, BaseEstimator):
    """HMM trained by FAB inference with automatic selection of the state count.

    Parameters
    ----------
    k_max : int, default=10
        Number of states to start from.
    emission : {'auto', 'categorical', 'gaussian1d'}, default='auto'
    epsilon : float, default=1.0
        States with at most this expected number of observations are removed.
    tol : float, default=1e-4
        Stop when the FIC lower bound improves by at most ``tol``.
    max_iter : int, default=1000
    restarts : int, default=5
    random_state : int, RandomState instance or None
    time_limit : float or None
        Seconds after which iteration stops.
    n_jobs : int or None
        Threads used across restarts and sequences.
    n_symbols : int or None
        Alphabet size for categorical data; inferred when None.

    Attributes
    ----------
    params_ : HmmParams
    n_states_ : int
    report_ : FitReport
    fic_lb_ : float
    """

    def __init__(self, k_max=10, emission="auto", epsilon=1.0, tol=1e-4, max_iter=1000,
                 restarts=5, random_state=None, time_limit=None, n_jobs=None, n_symbols=None):
        self.k_max = k_max
        self.emission = emission
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter
        self.restarts = restarts
        self.random_state = random_state
        self.time_limit = time_limit
        self.n_jobs = n_jobs
        self.n_symbols = n_symbols

    def fit(self, X, lengths=None):
        data = check_sequences(X, lengths, kind=self.emission, n_symbols=self.n_symbols)
        config = FitConfig(k_max=self.k_max, epsilon=self.epsilon, tol=self.tol,
                           max_iter=self.max_iter, restarts=self.restarts,
                           seed=check_seed(self.random_state), time_limit=self.time_limit,
                           n_jobs=self.n_jobs or 1)
        self.report_ = fit_fab(data, config)
        self.fic_lb_ = self.report_.fic_lb
        self.n_iter_ = self.report_.iterations_run
        self.converged_ = self.report_.converged
        self._set_fitted(self.report_.params, data)
        return self


class MLHMM(_HMMMixin, BaseEstimator):
    """Maximum-likelihood HMM with a fixed number of states (Baum-Welch).

    Parameters mirror :class:`FABHMM`, with ``n_states`` in place of ``k_max``.
    """

    def __init__(self, n_states=2, emission="auto", tol=1e-4, max_iter=1000, restarts=5,
                 random_state=None, time_limit=None, n_jobs=None, n_symbols=None):
        self.n_states = n_states
        self.emission = emission
        self.tol = tol
        self.max_iter = max_iter
        self.restarts = restarts
        self.random_state = random_state
        self.time_limit = time_limit
        self.n_jobs = n_jobs
        self.n_symbols = n_symbols

    def fit(self, X, lengths=None):
        data = check_sequences(X, lengths, kind=self.emission, n_symbols=self.n_symbols)
        config = FitConfig(k_max=self.n_states, tol=self.tol, max_iter=self.max_iter,
                           restarts=self.restarts, seed=check_seed(self.random_state),
                           time_limit=self.time_limit, n_jobs=self.n_jobs or 1)
        fit = fit_em_detailed(data, self.n_states, config)
        self.loglik_ = fit.loglik
        self.loglik_trace_ = np.asarray(fit.trace)
        self.n_iter_ = fit.iterations
        self.converged_ = fit.converged
        self._set_fitted(fit.params, data)
        return self


class BICHMM(_HMMMixin, BaseEstimator):
    """Maximum-likelihood HMM whose state count maximizes BIC over 1..k_max."""

    def __init__(self, k_max=10, emission="auto", tol=1e-4, max_iter=1000, restarts=5,
                 random_state=None, time_limit=None, n_jobs=None, n_symbols=None):
        self.k_max = k_max
        self.emission = emission
        self.tol = tol
        self.max_iter = max_iter
        self.restarts = restarts
        self.random_state = random_state
        self.time_limit = time_limit
        self.n_jobs = n_jobs
        self.n_symbols = n_symbols

    def fit(self, X, lengths=None):
        data = check_sequences(X, lengths, kind=self.emission, n_symbols=self.n_symbols)
        config = FitConfig(k_max=self.k_max, tol=self.tol, max_iter=self.max_iter,
                           restarts=self.restarts, seed=check_seed(self.random_state),
                           time_limit=self.time_limit, n_jobs=self.n_jobs or 1)
        self.sweep_ = sweep_bic(data, self.k_max, config)
        self.bic_ = np.array([r["bic"] for r in self.sweep_.records])
        self._set_fitted(self.sweep_.best_params, data)
        return self
