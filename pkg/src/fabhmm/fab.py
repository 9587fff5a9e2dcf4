"""Factorized asymptotic Bayesian (FAB) training of HMMs.

One FAB iteration computes state occupancies from the previous posteriors,
turns them into per-state emission multipliers (the delta regularizer), runs a
multiplier-weighted forward-backward pass (V-step), prunes states whose total
occupancy is at most ``epsilon``, and refits the parameters (M-step).  The
FIC lower bound recorded per iteration never decreases while the number of
states stays fixed.
"""
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import _debug
from .core import CATEGORICAL, GAUSSIAN, VARIANCE_FLOOR, HmmParams, Posterior, forward_backward


class ZeroMassWarning(RuntimeWarning):
    """An M-step row had zero expected mass and was replaced by a uniform row."""


@dataclass
class DeltaRegularizer:
    """Normalized per-state emission multipliers.

    ``interior`` applies at positions t < T_n, ``final`` at t = T_n.  The log
    normalizers are log of the sums of the unnormalized weights.
    """

    interior: np.ndarray
    final: np.ndarray
    log_norm_interior: float
    log_norm_final: float


@dataclass
class OccupancyStats:
    """Expected state counts.

    ``B[k]`` sums q(z_t = k) over positions with a successor (t < T_n);
    ``C[k]`` sums over all positions.
    """

    B: np.ndarray
    C: np.ndarray

    @classmethod
    def from_posteriors(cls, posteriors):
        K = posteriors[0].gamma.shape[1]
        B = np.zeros(K)
        C = np.zeros(K)
        for p in posteriors:
            col = p.gamma.sum(axis=0)
            C += col
            B += col - p.gamma[-1]
        return cls(np.maximum(B, 0.0), C)


@dataclass
class FitConfig:
    """Settings shared by FAB and the EM baseline.

    ``epsilon`` is in units of expected observations and ``tol`` is absolute
    on the monitored objective.  ``time_limit`` (seconds) stops a run early and
    keeps the model reached so far.
    """

    k_max: int = 10
    epsilon: float = 1.0
    tol: float = 1e-4
    max_iter: int = 1000
    restarts: int = 5
    seed: Optional[int] = None
    init: str = "random-responsibility"
    time_limit: Optional[float] = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.init != "random-responsibility":
            raise ValueError(f"unknown init scheme {self.init!r}")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")


@dataclass
class FitReport:
    params: HmmParams
    selected_k: int
    fic_lb_trace: List[Tuple[int, int, float]]
    prune_events: List[Tuple[int, List[int]]]
    iterations_run: int
    converged: bool
    wall_time: float
    restart_id: int
    seed: Optional[int] = None
    warnings: List[str] = field(default_factory=list)
    restart_summaries: List[dict] = field(default_factory=list)

    @property
    def fic_lb(self):
        return self.fic_lb_trace[-1][2]

    def to_dict(self, timing=True):
        from .io import params_to_dict

        return {
            "method": "fab",
            "selected_k": self.selected_k,
            "fic_lb": self.fic_lb,
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "restart_id": self.restart_id,
            "seed": self.seed,
            "wall_time": self.wall_time if timing else None,
            "fic_lb_trace": [{"iteration": i, "k": k, "fic_lb": v} for i, k, v in self.fic_lb_trace],
            "prune_events": [{"iteration": i, "pruned": list(ids)} for i, ids in self.prune_events],
            "warnings": list(self.warnings),
            "restarts": self.restart_summaries,
            "model": params_to_dict(self.params),
        }

    def trace_csv(self):
        lines = ["iteration,k,fic_lb"]
        lines += [f"{i},{k},{v!r}" for i, k, v in self.fic_lb_trace]
        return "\n".join(lines) + "\n"


def compute_delta(stats, d_beta, d_phi):
    """Exponentiated occupancy penalties, normalized over states.

    Unnormalized interior weight: exp(-d_beta/(2 B) - d_phi/(2 C));
    final weight: exp(-d_phi/(2 C)).  A zero dimensionality switches its term
    off even when the matching occupancy is zero.
    """
    B, C = np.asarray(stats.B, float), np.asarray(stats.C, float)
    d_beta, d_phi = np.asarray(d_beta, float), np.asarray(d_phi, float)
    if np.any((B <= 0) & (d_beta > 0)) or np.any((C <= 0) & (d_phi > 0)):
        raise ValueError("zero occupancy for an active state; prune it before computing delta")
    with np.errstate(divide="ignore", invalid="ignore"):
        beta_term = np.where(d_beta > 0, d_beta / (2.0 * B), 0.0)
        phi_term = np.where(d_phi > 0, d_phi / (2.0 * C), 0.0)
    log_u = -beta_term - phi_term
    log_v = -phi_term
    lse_u = _logsumexp(log_u)
    lse_v = _logsumexp(log_v)
    delta = DeltaRegularizer(np.exp(log_u - lse_u), np.exp(log_v - lse_v), lse_u, lse_v)
    if _debug.enabled():
        _debug.assert_delta(delta)
    return delta


def _logsumexp(a):
    m = a.max()
    return float(m + np.log(np.exp(a - m).sum()))


def _map_ordered(fn, items, n_jobs):
    if n_jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def fab_v_step(params, data, delta, n_jobs=1):
    """Delta-weighted forward-backward over every sequence.

    Returns
    -------
    posteriors : list of Posterior
    sum_log_zeta : float
        Sum of the log normalizers over all sequences and positions.
    """
    if delta.interior.size != params.n_states:
        raise ValueError("delta and params cover different state sets")
    posteriors = _map_ordered(
        lambda n: forward_backward(params, data.sequences[n], delta, sequence_index=n),
        list(range(data.n_sequences)), n_jobs)
    total = 0.0
    for p in posteriors:
        total += p.log_normalizer
    return posteriors, total


def _m_step(posteriors, data, kind, n_symbols=None):
    """Weighted maximum-likelihood update; returns ``(params, issues)``."""
    K = posteriors[0].gamma.shape[1]
    issues = []
    start = np.zeros(K)
    trans = np.zeros((K, K))
    occ = np.zeros(K)
    for p in posteriors:
        start += p.gamma[0]
        occ += p.gamma.sum(axis=0)
        if len(p.xi):
            trans += p.xi.sum(axis=0)
    alpha = start / start.sum()
    row = trans.sum(axis=1)
    for j in np.flatnonzero(row <= 0):
        issues.append(f"zero-mass transition row for state {j}; set to uniform")
        trans[j] = 1.0
        row[j] = K
    beta = trans / row[:, None]

    if kind == CATEGORICAL:
        V = n_symbols if n_symbols is not None else data.n_symbols
        counts = np.zeros((K, V))
        for p, seq in zip(posteriors, data.sequences):
            for k in range(K):
                counts[k] += np.bincount(seq, weights=p.gamma[:, k], minlength=V)
        tot = counts.sum(axis=1)
        for k in np.flatnonzero(tot <= 0):
            issues.append(f"zero occupancy for state {k}; emission set to uniform")
            counts[k] = 1.0
            tot[k] = V
        return HmmParams(kind, alpha, beta, probs=counts / tot[:, None]), issues

    sx = np.zeros(K)
    for p, seq in zip(posteriors, data.sequences):
        sx += seq @ p.gamma
    empty = occ <= 0
    if np.any(empty):
        pooled = np.concatenate(data.sequences)
        for k in np.flatnonzero(empty):
            issues.append(f"zero occupancy for state {k}; emission set to pooled fit")
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sx / occ
    if np.any(empty):
        means[empty] = pooled.mean()
    sq = np.zeros(K)
    for p, seq in zip(posteriors, data.sequences):
        sq += ((seq[:, None] - means) ** 2 * p.gamma).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        variances = sq / occ
    if np.any(empty):
        variances[empty] = pooled.var()
    variances = np.maximum(variances, VARIANCE_FLOOR)
    return HmmParams(GAUSSIAN, alpha, beta, means=means, variances=variances), issues


def fab_m_step(posteriors, data, kind, n_symbols=None):
    """Update alpha, beta and the emissions from posteriors.

    With a single emission family the occupancy penalty does not depend on
    the emission parameters, so this is the ordinary weighted ML update.
    Rows with zero expected mass are made uniform and reported through
    :class:`ZeroMassWarning`.
    """
    params, issues = _m_step(posteriors, data, kind, n_symbols)
    for msg in issues:
        warnings.warn(msg, ZeroMassWarning, stacklevel=2)
    return params


def compute_fic_lb(sum_log_zeta, delta, stats, n_sequences, dims, total_length=None):
    """FIC lower bound at the posteriors produced with ``delta``.

    ``stats`` must be the occupancies that ``delta`` was computed from.  The
    log normalizers of delta enter once per position of their class; they
    compensate the 1/Delta factor folded into the multipliers.  Linearizing
    log(count) around its own value leaves the (log count - 1) terms.
    """
    d_alpha, d_beta, d_phi = dims
    d_beta, d_phi = np.asarray(d_beta, float), np.asarray(d_phi, float)
    B, C = np.asarray(stats.B, float), np.asarray(stats.C, float)
    if np.any((B <= 0) & (d_beta > 0)) or np.any((C <= 0) & (d_phi > 0)):
        raise ValueError("zero occupancy for an active state")
    if total_length is None:
        total_length = int(round(C.sum()))
    n_interior = total_length - n_sequences
    log_delta_sum = n_interior * delta.log_norm_interior + n_sequences * delta.log_norm_final
    with np.errstate(divide="ignore", invalid="ignore"):
        pen_beta = np.where(d_beta > 0, 0.5 * d_beta * (np.log(B) - 1.0), 0.0)
        pen_phi = np.where(d_phi > 0, 0.5 * d_phi * (np.log(C) - 1.0), 0.0)
    return float(sum_log_zeta + log_delta_sum - 0.5 * d_alpha * np.log(n_sequences)
                 - pen_beta.sum() - pen_phi.sum())


def _restrict_posterior(post, keep):
    """Condition the posterior path distribution on visiting only ``keep`` states.

    The posterior over paths is a Markov chain; conditioning it on avoiding
    the removed states zeros their marginals while keeping the pairwise and
    single-position marginals consistent.  Falls back to independent
    per-position renormalization if the event has zero probability.
    """
    g, xi = post.gamma, post.xi
    T, K = g.shape
    m = keep.astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(g[:-1, :, None] > 0, xi / g[:-1, :, None], 0.0)
    a = np.empty((T, K))
    c = np.empty(T)
    a[0] = g[0] * m
    c[0] = a[0].sum()
    ok = c[0] > 0
    if ok:
        a[0] /= c[0]
        for t in range(1, T):
            a[t] = (a[t - 1] @ P[t - 1]) * m
            c[t] = a[t].sum()
            if not c[t] > 0:
                ok = False
                break
            a[t] /= c[t]
    if ok:
        b = np.ones((T, K))
        for t in range(T - 2, -1, -1):
            b[t] = P[t] @ (m * b[t + 1]) / c[t + 1]
        gamma = a * b
        new_xi = a[:-1, :, None] * P * (m * b[1:])[:, None, :] / c[1:, None, None]
    else:
        gamma = g * m
        s = gamma.sum(axis=1, keepdims=True)
        gamma = np.where(s > 0, gamma / np.where(s > 0, s, 1.0), m / m.sum())
        new_xi = gamma[:-1, :, None] * gamma[1:, None, :]
    idx = np.flatnonzero(keep)
    return Posterior(gamma[:, idx], new_xi[:, idx][:, :, idx], post.logzeta)


def _prune(posteriors, active_mask, keep_local):
    active_ids = np.flatnonzero(active_mask)
    pruned = [int(i) for i in active_ids[~keep_local]]
    if not pruned:
        return posteriors, active_mask, []
    new_posts = [_restrict_posterior(p, keep_local) for p in posteriors]
    if _debug.enabled():
        for p in new_posts:
            _debug.assert_posterior(p)
    mask = active_mask.copy()
    mask[pruned] = False
    return new_posts, mask, pruned


def shrink(posteriors, stats, active_mask, epsilon):
    """Remove states whose total occupancy ``C[k]`` is at most ``epsilon``.

    Parameters
    ----------
    posteriors : list of Posterior
        Posteriors over the currently active states, in id order.
    stats : OccupancyStats
        Occupancies of ``posteriors``.
    active_mask : ndarray of bool
        Mask over the original state ids.
    epsilon : float

    Returns
    -------
    posteriors : list of Posterior
        Posteriors over the surviving states.
    active_mask : ndarray of bool
    pruned : list of int
        Original ids of the removed states.
    """
    active_mask = np.asarray(active_mask, dtype=bool)
    C = np.asarray(stats.C)
    keep = C > epsilon
    if not keep.any():
        keep = np.zeros_like(keep)
        keep[int(np.argmax(C))] = True
    return _prune(posteriors, active_mask, keep)


def _collapsed(params, posteriors):
    """Mask of Gaussian states whose variance hit the floor, or None.

    Such a state sits on a singularity of the likelihood: the floor keeps it
    finite, but the Laplace step behind the occupancy penalties does not hold
    there, and FIC_LB rewards parking a state on one or two points.  When every
    state has collapsed, the one with the largest occupancy is kept.
    """
    if params.kind != GAUSSIAN or params.n_states < 2:
        return None
    bad = params.variances <= VARIANCE_FLOOR
    if not bad.any():
        return None
    if bad.all():
        bad[int(np.argmax(OccupancyStats.from_posteriors(posteriors).C))] = False
    return bad


def init_posteriors(data, K, rng):
    """Random responsibilities: flat Dirichlet draws per position."""
    posts = []
    for seq in data.sequences:
        g = rng.dirichlet(np.ones(K), size=seq.size)
        xi = g[:-1, :, None] * g[1:, None, :]
        if len(xi):
            xi /= xi.sum(axis=(1, 2), keepdims=True)
        posts.append(Posterior(g, xi, np.zeros(seq.size)))
    return posts


def _generator(seed_seq):
    return np.random.Generator(np.random.PCG64(seed_seq))


def restart_seeds(seed, n):
    """Independent per-restart seed sequences in a fixed order."""
    return np.random.SeedSequence(seed).spawn(n)


def _fit_fab_single(data, config, seed_seq, restart_id, deadline):
    rng = _generator(seed_seq)
    kind, V = data.kind, data.n_symbols
    N = data.n_sequences
    total = data.total_length
    has_transitions = total > N
    posts = init_posteriors(data, config.k_max, rng)
    params, issues = _m_step(posts, data, kind, V)
    notes = [f"init: {m}" for m in issues]
    mask = np.ones(config.k_max, dtype=bool)
    trace, events = [], []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        stats = OccupancyStats.from_posteriors(posts)
        d_alpha, d_beta, d_phi = params.dims()
        if not has_transitions:
            d_beta = np.zeros_like(d_beta)
        dims = (d_alpha, d_beta, d_phi)
        delta = compute_delta(stats, d_beta, d_phi)
        posts, slz = fab_v_step(params, data, delta, config.n_jobs)
        fic = compute_fic_lb(slz, delta, stats, N, dims, total_length=total)
        K_iter = params.n_states
        trace.append((it, K_iter, fic))

        new_stats = OccupancyStats.from_posteriors(posts)
        posts, mask, pruned = shrink(posts, new_stats, mask, config.epsilon)
        if has_transitions and len(posts[0].gamma[0]) > 1:
            # a state seen (almost) only at sequence ends has next to no
            # transition occupancy; -log(B)/2 is then unbounded, so the same
            # threshold applies to B as to C
            B = OccupancyStats.from_posteriors(posts).B
            keep_b = B > config.epsilon
            if not keep_b.any():
                keep_b[int(np.argmax(B))] = True
            if not keep_b.all():
                posts, mask, extra = _prune(posts, mask, keep_b)
                pruned = sorted(pruned + extra)
        params, issues = _m_step(posts, data, kind, V)
        collapsed = _collapsed(params, posts)
        if collapsed is not None:
            posts, mask, extra = _prune(posts, mask, ~collapsed)
            pruned = sorted(pruned + extra)
            params, issues = _m_step(posts, data, kind, V)
        if pruned:
            events.append((it, pruned))
        notes += [f"iteration {it}: {m}" for m in issues]

        if not pruned and len(trace) > 1 and trace[-2][1] == K_iter \
                and fic - trace[-2][2] <= config.tol:
            converged = True
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
    return {
        "params": params, "trace": trace, "events": events, "iterations": it,
        "converged": converged, "restart_id": restart_id, "warnings": notes,
    }


def fit_fab(data, config):
    """Train an HMM with FAB from ``config.k_max`` states.

    Every restart starts from random responsibilities.  The winner has the
    highest final FIC lower bound; ties go to fewer states, then to the
    lower restart id.

    Returns
    -------
    FitReport
    """
    start = time.perf_counter()
    deadline = None if config.time_limit is None else start + config.time_limit
    seeds = restart_seeds(config.seed, config.restarts)
    runs = _map_ordered(
        lambda r: _fit_fab_single(data, config, seeds[r], r, deadline),
        list(range(config.restarts)), config.n_jobs)
    best = min(runs, key=lambda r: (-r["trace"][-1][2], r["params"].n_states, r["restart_id"]))
    wall = time.perf_counter() - start
    summaries = [{"restart_id": r["restart_id"], "k": r["params"].n_states,
                  "fic_lb": r["trace"][-1][2], "iterations": r["iterations"],
                  "converged": r["converged"]} for r in runs]
    return FitReport(
        params=best["params"],
        selected_k=best["params"].n_states,
        fic_lb_trace=best["trace"],
        prune_events=best["events"],
        iterations_run=best["iterations"],
        converged=best["converged"],
        wall_time=wall,
        restart_id=best["restart_id"],
        seed=config.seed,
        warnings=best["warnings"],
        restart_summaries=summaries,
    )
