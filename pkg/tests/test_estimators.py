import numpy as np
import pytest
from numpy.testing import assert_allclose
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fabhmm import BICHMM, FABHMM, MLHMM
from fabhmm._validation import check_seed, check_sequences
from fabhmm.core import CATEGORICAL, GAUSSIAN, forward_backward


def _blocks():
    regimes = np.repeat([0.0, 5.0, 0.0, 5.0], 80)
    return regimes + np.random.default_rng(1).normal(size=regimes.size)


def test_get_params_and_clone():
    est = FABHMM(k_max=4, epsilon=2.0, random_state=3)
    params = est.get_params()
    assert params["k_max"] == 4 and params["epsilon"] == 2.0
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(k_max=7)
    assert est.k_max == 7


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        FABHMM().predict(np.zeros(3))


def test_fab_fit_predict_score():
    X = _blocks()
    est = FABHMM(k_max=4, restarts=2, random_state=0).fit(X)
    assert est.n_states_ == 2 and est.emission_ == GAUSSIAN
    assert est.transmat_.shape == (2, 2) and est.means_.shape == (2,)
    labels = est.predict(X)
    assert len(set(labels[:80])) == 1 and labels[0] != labels[100]
    proba = est.predict_proba(X)
    assert_allclose(proba.sum(axis=1), 1.0)
    assert est.score(X) == pytest.approx(est.score_samples(X).sum())
    assert est.fic_lb_ == est.report_.fic_lb


def test_lengths_split_sequences():
    X = _blocks()
    est = MLHMM(n_states=2, restarts=1, random_state=0).fit(X.reshape(-1, 1), lengths=[160, 160])
    assert est.score_samples(X, lengths=[100, 220]).shape == (2,)
    gamma = est.predict_proba(X, lengths=[160, 160])
    assert_allclose(gamma[160:], forward_backward(est.params_, X[160:]).gamma)


def test_categorical_inference_and_sampling():
    X = np.tile([0, 0, 1, 2, 2, 1], 30)
    est = MLHMM(n_states=2, restarts=1, random_state=0).fit(X)
    assert est.emission_ == CATEGORICAL and est.emissionprob_.shape == (2, 3)
    obs, states = est.sample(25, random_state=4)
    assert obs.shape == (25,) and states.max() < 2
    again, _ = est.sample(25, random_state=4)
    assert obs.tolist() == again.tolist()


def test_bic_estimator():
    est = BICHMM(k_max=3, restarts=1, random_state=0).fit(_blocks())
    assert est.bic_.shape == (3,) and est.n_states_ == int(np.argmax(est.bic_)) + 1


def test_check_sequences_inputs():
    d = check_sequences([np.array([0.1, 0.2]), np.array([0.3])])
    assert d.kind == GAUSSIAN and d.n_sequences == 2
    with pytest.raises(ValueError):
        check_sequences(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        check_sequences(np.zeros(4), lengths=[2, 1])
    with pytest.raises(ValueError):
        check_sequences(d, kind=CATEGORICAL)


def test_check_seed():
    assert check_seed(None) is None and check_seed(5) == 5
    assert check_seed(np.random.RandomState(0)) == check_seed(np.random.RandomState(0))
    with pytest.raises(ValueError):
        check_seed(-1)
