import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from _helpers import KINDS, as_posterior, random_params, random_seq, reference_baum_welch
from fabhmm.core import CATEGORICAL, GAUSSIAN, HmmParams, SequenceSet, forward_backward, log_emission, loglik
from fabhmm.data import gen_synthetic
from fabhmm.fab import (
    FitConfig,
    OccupancyStats,
    ZeroMassWarning,
    compute_delta,
    compute_fic_lb,
    fab_m_step,
    fab_v_step,
    fit_fab,
    init_posteriors,
    restart_seeds,
    shrink,
)


def test_delta_frozen_values():
    stats = OccupancyStats(B=np.array([10.0, 10.0]), C=np.array([12.0, 8.0]))
    d = compute_delta(stats, [1, 1], [2, 2])
    assert_allclose(d.interior, [0.5104151598873646, 0.48958484011263526], rtol=1e-12)
    assert_allclose(d.final, [0.5104151598873646, 0.48958484011263526], rtol=1e-12)
    assert d.log_norm_interior == pytest.approx(0.5391975120856417, rel=1e-12)
    assert d.log_norm_final == pytest.approx(0.5891975120856416, rel=1e-12)


def test_delta_equal_stats_is_uniform():
    stats = OccupancyStats(B=np.full(4, 7.0), C=np.full(4, 9.0))
    d = compute_delta(stats, np.full(4, 3), np.full(4, 2))
    assert_allclose(d.interior, 0.25, atol=1e-15)
    assert_allclose(d.final, 0.25, atol=1e-15)


def test_delta_large_counts_approach_uniform():
    stats = OccupancyStats(B=np.array([1e9, 2e9, 3e9]), C=np.array([1e9, 2e9, 3e9]))
    d = compute_delta(stats, [2, 2, 2], [2, 2, 2])
    assert_allclose(d.interior, 1 / 3, atol=1e-8)


def test_delta_zero_dims_switch_terms_off():
    stats = OccupancyStats(B=np.array([0.0, 5.0]), C=np.array([1.0, 5.0]))
    d = compute_delta(stats, [0, 0], [0, 0])
    assert_allclose(d.interior, 0.5)
    assert d.log_norm_interior == pytest.approx(np.log(2))
    with pytest.raises(ValueError):
        compute_delta(stats, [1, 1], [2, 2])


def test_delta_favors_larger_states():
    stats = OccupancyStats(B=np.array([2.0, 50.0]), C=np.array([3.0, 51.0]))
    d = compute_delta(stats, [1, 1], [2, 2])
    assert d.interior[1] > d.interior[0] and d.final[1] > d.final[0]


def test_occupancy_stats():
    g = np.array([[0.2, 0.8], [0.6, 0.4], [1.0, 0.0]])
    xi = np.array([[[0.1, 0.1], [0.5, 0.3]], [[0.6, 0.0], [0.4, 0.0]]])
    s = OccupancyStats.from_posteriors([as_posterior(g, xi)])
    assert_allclose(s.C, [1.8, 1.2])
    assert_allclose(s.B, [0.8, 1.2])


def test_v_step_uniform_delta_is_plain_forward_backward():
    rng = np.random.default_rng(0)
    p = random_params(rng, 3, GAUSSIAN)
    data = SequenceSet(GAUSSIAN, [random_seq(rng, 40, GAUSSIAN), random_seq(rng, 9, GAUSSIAN)])
    delta = compute_delta(OccupancyStats(np.ones(3), np.ones(3)), np.zeros(3), np.zeros(3))
    posts, slz = fab_v_step(p, data, delta)
    for post, seq in zip(posts, data.sequences):
        assert_allclose(post.gamma, forward_backward(p, seq).gamma, atol=1e-12)
    expect = sum(loglik(p, s) for s in data.sequences) + data.total_length * np.log(1 / 3)
    assert slz == pytest.approx(expect, abs=1e-9)


def test_v_step_suppresses_small_state():
    rng = np.random.default_rng(1)
    p = random_params(rng, 2, GAUSSIAN)
    data = SequenceSet(GAUSSIAN, [random_seq(rng, 30, GAUSSIAN)])
    delta = compute_delta(OccupancyStats(np.array([0.5, 29.0]), np.array([1.0, 29.0])), [1, 1], [2, 2])
    posts, _ = fab_v_step(p, data, delta)
    plain = forward_backward(p, data.sequences[0])
    assert posts[0].gamma[:, 0].sum() < plain.gamma[:, 0].sum()


def test_v_step_thread_count_is_invisible():
    rng = np.random.default_rng(2)
    p = random_params(rng, 3, CATEGORICAL)
    data = SequenceSet(CATEGORICAL, [random_seq(rng, 50, CATEGORICAL) for _ in range(6)], n_symbols=3)
    delta = compute_delta(OccupancyStats(np.full(3, 80.0), np.full(3, 100.0)), [2] * 3, [2] * 3)
    a, sa = fab_v_step(p, data, delta, n_jobs=1)
    b, sb = fab_v_step(p, data, delta, n_jobs=4)
    assert sa == sb
    assert all(x.gamma.tobytes() == y.gamma.tobytes() for x, y in zip(a, b))


def test_m_step_hard_posteriors():
    x = np.array([0, 0, 1, 2, 2, 2])
    g = np.eye(2)[[0, 0, 0, 1, 1, 1]]
    xi = g[:-1, :, None] * g[1:, None, :]
    p = fab_m_step([as_posterior(g, xi)], SequenceSet(CATEGORICAL, [x]), CATEGORICAL, 3)
    assert_allclose(p.alpha, [1, 0])
    assert_allclose(p.beta, [[2 / 3, 1 / 3], [0, 1]])
    assert_allclose(p.probs, [[2 / 3, 1 / 3, 0], [0, 0, 1]])


def test_m_step_single_state_gaussian():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    g = np.ones((4, 1))
    p = fab_m_step([as_posterior(g, np.ones((3, 1, 1)))], SequenceSet(GAUSSIAN, [x]), GAUSSIAN)
    assert p.means[0] == pytest.approx(x.mean())
    assert p.variances[0] == pytest.approx(x.var())


def test_m_step_weighted_counts():
    rng = np.random.default_rng(3)
    seqs = [rng.integers(0, 4, 12), rng.integers(0, 4, 5)]
    posts = []
    for s in seqs:
        g = rng.dirichlet(np.ones(3), size=len(s))
        xi = g[:-1, :, None] * g[1:, None, :]
        posts.append(as_posterior(g, xi))
    p = fab_m_step(posts, SequenceSet(CATEGORICAL, seqs, n_symbols=4), CATEGORICAL, 4)
    counts = np.zeros((3, 4))
    for post, s in zip(posts, seqs):
        for t, v in enumerate(s):
            counts[:, v] += post.gamma[t]
    assert_allclose(p.probs, counts / counts.sum(axis=1, keepdims=True), atol=1e-14)
    start = posts[0].gamma[0] + posts[1].gamma[0]
    assert_allclose(p.alpha, start / 2, atol=1e-14)


def test_m_step_zero_mass_row_warns():
    g = np.array([[1.0, 0.0], [1.0, 0.0]])
    xi = np.array([[[1.0, 0.0], [0.0, 0.0]]])
    with pytest.warns(ZeroMassWarning):
        p = fab_m_step([as_posterior(g, xi)], SequenceSet(CATEGORICAL, [[0, 1]]), CATEGORICAL, 2)
    assert_allclose(p.beta[1], 0.5)
    assert_allclose(p.probs[1], 0.5)


def test_fic_single_state_closed_form():
    p = HmmParams(GAUSSIAN, [1.0], [[1.0]], means=[0.0], variances=[1.0])
    x = np.array([0.3, -1.2, 0.8])
    data = SequenceSet(GAUSSIAN, [x])
    posts = [forward_backward(p, x)]
    stats = OccupancyStats.from_posteriors(posts)
    dims = p.dims()
    delta = compute_delta(stats, dims[1], dims[2])
    posts, slz = fab_v_step(p, data, delta)
    fic = compute_fic_lb(slz, delta, stats, 1, dims)
    want = sum(log_emission(p.emissions[0], v) for v in x) - np.log(3)
    assert fic == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_fic_zero_penalties_is_loglik(kind):
    rng = np.random.default_rng(4)
    p = random_params(rng, 3, kind)
    seqs = [random_seq(rng, 20, kind), random_seq(rng, 7, kind)]
    data = SequenceSet(kind, seqs, n_symbols=3 if kind == CATEGORICAL else None)
    stats = OccupancyStats(np.ones(3), np.ones(3))
    zero = np.zeros(3)
    delta = compute_delta(stats, zero, zero)
    _, slz = fab_v_step(p, data, delta)
    fic = compute_fic_lb(slz, delta, stats, 2, (0, zero, zero), total_length=27)
    assert fic == pytest.approx(sum(loglik(p, s) for s in seqs), abs=1e-9)


def test_fic_initial_state_penalty_vanishes_for_one_sequence():
    stats = OccupancyStats(np.array([4.0, 5.0]), np.array([5.0, 6.0]))
    delta = compute_delta(stats, [1, 1], [2, 2])
    a = compute_fic_lb(-10.0, delta, stats, 1, (1, [1, 1], [2, 2]))
    b = compute_fic_lb(-10.0, delta, stats, 1, (0, [1, 1], [2, 2]))
    assert a == b


def _three_state_fixture():
    rng = np.random.default_rng(5)
    p = random_params(rng, 3, GAUSSIAN)
    x = random_seq(rng, 8, GAUSSIAN)
    return p, x, forward_backward(p, x)


def test_shrink_no_op():
    _, _, post = _three_state_fixture()
    stats = OccupancyStats.from_posteriors([post])
    posts, mask, pruned = shrink([post], stats, np.ones(3, bool), 0.0)
    assert pruned == [] and mask.all() and posts[0] is post


def test_shrink_removes_empty_state():
    g = np.array([[0.5, 0.5, 0.0], [0.3, 0.7, 0.0]])
    xi = np.array([[[0.2, 0.3, 0.0], [0.1, 0.4, 0.0], [0.0, 0.0, 0.0]]])
    post = as_posterior(g, xi)
    posts, mask, pruned = shrink([post], OccupancyStats.from_posteriors([post]), np.ones(3, bool), 0.5)
    assert pruned == [2] and list(mask) == [True, True, False]
    assert_allclose(posts[0].gamma, g[:, :2], atol=1e-15)
    assert_allclose(posts[0].xi, xi[:, :2, :2], atol=1e-15)


def test_shrink_conditions_path_posterior():
    # dropping a state equals rerunning forward-backward with its emissions switched off
    p, x, post = _three_state_fixture()
    stats = OccupancyStats.from_posteriors([post])
    eps = float(np.sort(stats.C)[0]) + 1e-9
    drop = int(np.argmin(stats.C))
    posts, mask, pruned = shrink([post], stats, np.ones(3, bool), eps)
    assert pruned == [drop] and not mask[drop]
    m = np.ones(3)
    m[drop] = 0.0
    ref = forward_backward(p, x, (m, m))
    keep = np.flatnonzero(m)
    assert_allclose(posts[0].gamma, ref.gamma[:, keep], atol=1e-12)
    assert_allclose(posts[0].xi, ref.xi[:, keep][:, :, keep], atol=1e-12)


def test_shrink_uses_original_ids():
    g = np.array([[0.5, 0.5], [0.5, 0.5], [0.9, 0.1]])
    xi = g[:-1, :, None] * g[1:, None, :]
    post = as_posterior(g, xi)
    mask = np.array([False, True, False, True])
    _, new_mask, pruned = shrink([post], OccupancyStats.from_posteriors([post]), mask, 1.2)
    assert pruned == [3] and list(new_mask) == [False, True, False, False]


def test_shrink_keeps_largest_when_all_small():
    g = np.array([[0.3, 0.7]])
    post = as_posterior(g, np.zeros((0, 2, 2)))
    posts, mask, pruned = shrink([post], OccupancyStats.from_posteriors([post]), np.ones(2, bool), 5.0)
    assert pruned == [0] and list(mask) == [False, True]
    assert_allclose(posts[0].gamma, 1.0)


def test_init_posteriors_are_normalized():
    data = SequenceSet(GAUSSIAN, [np.zeros(6), np.zeros(1)])
    posts = init_posteriors(data, 4, np.random.default_rng(0))
    for p in posts:
        assert_allclose(p.gamma.sum(axis=1), 1.0)
        assert_allclose(p.xi.sum(axis=(1, 2)), 1.0)
        assert_allclose(p.xi.sum(axis=2), p.gamma[:-1])


def test_restart_seeds_are_distinct_and_stable():
    a = [s.generate_state(2).tolist() for s in restart_seeds(7, 3)]
    b = [s.generate_state(2).tolist() for s in restart_seeds(7, 3)]
    assert a == b and len({tuple(x) for x in a}) == 3


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(k_max=0)
    with pytest.raises(ValueError):
        FitConfig(tol=0)
    with pytest.raises(ValueError):
        FitConfig(init="kmeans")


@pytest.mark.parametrize("kind", KINDS)
def test_fit_constant_data_collapses_to_one_state(kind):
    x = np.full(300, 2.5) if kind == GAUSSIAN else np.zeros(300, dtype=int)
    data = SequenceSet(kind, [x], n_symbols=3 if kind == CATEGORICAL else None)
    report = fit_fab(data, FitConfig(k_max=4, restarts=2, seed=0))
    assert report.selected_k == 1 and report.converged


def test_fit_deterministic_across_jobs():
    train = gen_synthetic(GAUSSIAN, 300, 3)
    a = fit_fab(train, FitConfig(k_max=6, restarts=3, seed=11, n_jobs=1))
    b = fit_fab(train, FitConfig(k_max=6, restarts=3, seed=11, n_jobs=3))
    assert a.fic_lb_trace == b.fic_lb_trace
    assert a.params.means.tobytes() == b.params.means.tobytes()


@pytest.mark.parametrize("kind", KINDS)
def test_fit_trace_monotone_between_same_k(kind):
    train = gen_synthetic(kind, 400, 21)
    report = fit_fab(train, FitConfig(k_max=8, restarts=1, seed=2))
    trace = report.fic_lb_trace
    for (_, k0, v0), (_, k1, v1) in zip(trace, trace[1:]):
        if k0 == k1:
            assert v1 >= v0 - 1e-9 * abs(v0)
    ks = [k for _, k, _ in trace]
    assert ks == sorted(ks, reverse=True)
    assert trace[0][1] == 8


def test_fit_prune_events_match_trace():
    train = gen_synthetic(GAUSSIAN, 400, 4)
    report = fit_fab(train, FitConfig(k_max=8, restarts=1, seed=3))
    removed = sum(len(ids) for _, ids in report.prune_events)
    assert 8 - removed == report.selected_k
    flat = [i for _, ids in report.prune_events for i in ids]
    assert len(flat) == len(set(flat)) and all(0 <= i < 8 for i in flat)


def test_fit_larger_epsilon_never_keeps_more_states():
    train = gen_synthetic(GAUSSIAN, 300, 9)
    ks = [fit_fab(train, FitConfig(k_max=6, restarts=1, seed=1, epsilon=e)).selected_k
          for e in (0.5, 30.0, 200.0)]
    assert ks[2] <= ks[1] <= 6 and ks[2] <= ks[0]


@pytest.mark.parametrize("kind", KINDS)
def test_one_iteration_reduces_to_baum_welch(kind):
    rng = np.random.default_rng(12)
    p = random_params(rng, 3, kind)
    seqs = [random_seq(rng, 25, kind), random_seq(rng, 10, kind)]
    data = SequenceSet(kind, seqs, n_symbols=3 if kind == CATEGORICAL else None)
    zero = np.zeros(3)
    delta = compute_delta(OccupancyStats(np.ones(3), np.ones(3)), zero, zero)
    posts, _ = fab_v_step(p, data, delta)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ZeroMassWarning)
        new = fab_m_step(posts, data, kind, 3 if kind == CATEGORICAL else None)
    ref, ref_posts, _ = reference_baum_welch(p, seqs)
    for post, (g, xi) in zip(posts, ref_posts):
        assert_allclose(post.gamma, g, atol=1e-10)
        assert_allclose(post.xi, xi, atol=1e-10)
    assert_allclose(new.alpha, ref.alpha, atol=1e-10)
    assert_allclose(new.beta, ref.beta, atol=1e-10)
    if kind == CATEGORICAL:
        assert_allclose(new.probs, ref.probs, atol=1e-10)
    else:
        assert_allclose(new.means, ref.means, atol=1e-10)
        assert_allclose(new.variances, ref.variances, atol=1e-10)


def test_report_serialization():
    train = gen_synthetic(CATEGORICAL, 200, 1)
    report = fit_fab(train, FitConfig(k_max=4, restarts=1, seed=5, max_iter=5))
    d = report.to_dict(timing=False)
    assert d["wall_time"] is None and d["selected_k"] == report.selected_k
    assert d["model"]["K"] == report.selected_k
    lines = report.trace_csv().splitlines()
    assert lines[0] == "iteration,k,fic_lb" and len(lines) == len(report.fic_lb_trace) + 1
    assert report.iterations_run <= 5


def test_state_parked_on_one_point_is_pruned():
    # an outlier repeated a few times invites a zero-variance state
    rng = np.random.default_rng(0)
    x = rng.normal(size=400)
    x[[50, 150, 250]] = 7.0
    report = fit_fab(SequenceSet(GAUSSIAN, [x]), FitConfig(k_max=4, restarts=2, seed=0))
    assert np.all(report.params.variances > 1e-3)
