"""Maximum-likelihood Baum-Welch and BIC model-order selection."""
import dataclasses
import time
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .core import HmmParams, forward_backward, loglik
from .fab import _m_step, _map_ordered, init_posteriors, restart_seeds


def e_step(params, data, n_jobs=1):
    """Standard forward-backward on every sequence; returns ``(posteriors, loglik)``."""
    posts = _map_ordered(
        lambda n: forward_backward(params, data.sequences[n], sequence_index=n),
        list(range(data.n_sequences)), n_jobs)
    total = 0.0
    for p in posts:
        total += p.log_normalizer
    return posts, total


def baum_welch_step(params, data, n_jobs=1):
    """One EM iteration.

    Returns
    -------
    new_params : HmmParams
    posteriors : list of Posterior
        Posteriors under ``params``.
    loglik : float
        Log-likelihood of ``params``.
    """
    posts, ll = e_step(params, data, n_jobs)
    new_params, _ = _m_step(posts, data, params.kind, params.n_symbols)
    return new_params, posts, ll


def total_loglik(params, data):
    total = 0.0
    for n, seq in enumerate(data.sequences):
        total += loglik(params, seq, sequence_index=n)
    return total


@dataclass
class EMFit:
    params: HmmParams
    loglik: float
    trace: List[float]
    iterations: int
    converged: bool
    restart_id: int
    warnings: List[str] = field(default_factory=list)


def _fit_em_single(data, K, config, seed_seq, restart_id, deadline):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    posts = init_posteriors(data, K, rng)
    params, issues = _m_step(posts, data, data.kind, data.n_symbols)
    notes = list(issues)
    trace = []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        posts, ll = e_step(params, data, config.n_jobs)
        trace.append(ll)
        params, issues = _m_step(posts, data, data.kind, data.n_symbols)
        notes += [f"iteration {it}: {m}" for m in issues]
        if len(trace) > 1 and ll - trace[-2] <= config.tol:
            converged = True
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
    return EMFit(params, total_loglik(params, data), trace, it, converged, restart_id, notes)


def fit_em_detailed(data, K, config, seed=None):
    """Best-of-restarts Baum-Welch fit with its log-likelihood trace.

    ``seed`` overrides ``config.seed`` and may be a ``SeedSequence``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    seed = config.seed if seed is None else seed
    deadline = None if config.time_limit is None else time.perf_counter() + config.time_limit
    if isinstance(seed, np.random.SeedSequence):
        seeds = seed.spawn(config.restarts)
    else:
        seeds = restart_seeds(seed, config.restarts)
    fits = _map_ordered(lambda r: _fit_em_single(data, K, config, seeds[r], r, deadline),
                        list(range(config.restarts)), config.n_jobs)
    return min(fits, key=lambda f: (-f.loglik, f.restart_id))


def fit_em(data, K, config):
    """Maximum-likelihood HMM with ``K`` states; returns ``(params, loglik)``."""
    fit = fit_em_detailed(data, K, config)
    return fit.params, fit.loglik


def bic_score(loglik, d_total, total_length):
    """``loglik - d_total / 2 * log(total_length)``; larger is better."""
    if total_length < 1:
        raise ValueError("total_length must be >= 1")
    return loglik - 0.5 * d_total * np.log(total_length)


def n_free_params(K, kind, n_symbols=None):
    d_phi = (n_symbols - 1) if kind == "categorical" else 2
    return (K - 1) + K * (K - 1) + K * d_phi


@dataclass
class SweepResult:
    records: List[dict]
    selected_k: int
    models: Dict[int, HmmParams] = field(default_factory=dict, repr=False)
    fits: Dict[int, EMFit] = field(default_factory=dict, repr=False)

    @property
    def best_params(self):
        return self.models[self.selected_k]

    @property
    def converged(self):
        return all(r["converged"] for r in self.records)

    def to_dict(self, timing=True):
        from .io import params_to_dict

        recs = [dict(r, wall_time=r["wall_time"] if timing else None) for r in self.records]
        return {"method": "em-bic", "selected_k": self.selected_k, "records": recs,
                "model": params_to_dict(self.best_params)}

    def to_csv(self, timing=True):
        lines = ["k,loglik,d_total,bic,wall_time_s,converged"]
        for r in self.records:
            wt = repr(r["wall_time"]) if timing else ""
            lines.append(f"{r['k']},{r['loglik']!r},{r['d_total']},{r['bic']!r},{wt},{str(r['converged']).lower()}")
        return "\n".join(lines) + "\n"


def sweep_seed(seed, K):
    """Seed sequence for the K-state fit of a sweep; independent of k_max."""
    entropy = seed if seed is not None else np.random.SeedSequence().entropy
    return np.random.SeedSequence(entropy, spawn_key=(K,))


def sweep_bic(data, k_max, config):
    """Fit K = 1..k_max by EM and pick the K with the largest BIC.

    Ties go to the smaller K.  ``config.time_limit`` budgets the whole sweep:
    once it is spent, each remaining K gets a single EM iteration.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    entropy = config.seed if config.seed is not None else np.random.SeedSequence().entropy
    deadline = None if config.time_limit is None else time.perf_counter() + config.time_limit
    records, models, fits = [], {}, {}
    for K in range(1, k_max + 1):
        t0 = time.perf_counter()
        cfg = config
        if deadline is not None:
            cfg = dataclasses.replace(config, time_limit=max(deadline - t0, 0.0))
        fit = fit_em_detailed(data, K, cfg, seed=sweep_seed(entropy, K))
        wall = time.perf_counter() - t0
        d = n_free_params(K, data.kind, data.n_symbols)
        records.append({"k": K, "loglik": fit.loglik, "d_total": d,
                        "bic": float(bic_score(fit.loglik, d, data.total_length)),
                        "wall_time": wall, "converged": fit.converged})
        models[K] = fit.params
        fits[K] = fit
    best = max(records, key=lambda r: (r["bic"], -r["k"]))
    return SweepResult(records, best["k"], models, fits)
