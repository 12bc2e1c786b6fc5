"""Vectorized ensemble simulation: many paths advanced in lockstep.

The single-path samplers in ``models`` are the reference implementations;
these engines produce the same processes in bulk for the estimator hot loops,
tracking exactly the per-path summaries the estimators need (running maxima,
event counts, rate integrals, optional full event records).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import Axis, EventKind, HivParams, ReedFrostParams, Scaling, SirParams

__all__ = ["JumpEnsemble", "hiv_ensemble", "rf_advance", "rf_chains", "rf_loglik", "sir_ensemble"]

_INF = EventKind.INFECTION.value
_REM = EventKind.REMOVAL.value
_DET = EventKind.DETECTION.value

_ITERATION_CAP = 100_000_000


@dataclass
class JumpEnsemble:
    """Per-path summaries of a batch of jump-process simulations."""

    s: np.ndarray
    i: np.ndarray
    r: np.ndarray
    t: np.ndarray
    max_i: np.ndarray
    n_inf: np.ndarray
    n_rem: np.ndarray
    int_pair: np.ndarray
    int_i: np.ndarray
    window_rem: np.ndarray | None = None
    events: list[tuple[np.ndarray, np.ndarray]] | None = None
    decayed: np.ndarray | None = None

    @property
    def extinct(self) -> np.ndarray:
        return self.i == 0

    def extinction_times(self, alive_value: float = np.inf) -> np.ndarray:
        """Last event time where extinct, ``alive_value`` elsewhere."""
        return np.where(self.extinct, self.t, alive_value)


def _collect_events(
    n: int,
    rec_idx: list[np.ndarray],
    rec_t: list[np.ndarray],
    rec_k: list[np.ndarray],
) -> list[tuple[np.ndarray, np.ndarray]]:
    if rec_idx:
        idx = np.concatenate(rec_idx)
        times = np.concatenate(rec_t)
        kinds = np.concatenate(rec_k)
    else:
        idx = np.empty(0, dtype=np.int64)
        times = np.empty(0)
        kinds = np.empty(0, dtype=np.int8)
    order = np.argsort(idx, kind="stable")
    idx, times, kinds = idx[order], times[order], kinds[order]
    starts = np.searchsorted(idx, np.arange(n))
    ends = np.searchsorted(idx, np.arange(n), side="right")
    return [(times[a:b], kinds[a:b]) for a, b in zip(starts, ends)]


def _target_hit(axis: Axis | None, level: float | None, i: np.ndarray, r: np.ndarray) -> np.ndarray:
    if axis is None:
        return np.zeros(i.shape, dtype=bool)
    values = i if axis is Axis.INFECTED else r
    return values >= level


def sir_ensemble(
    params: SirParams,
    n_paths: int | None,
    rng: np.random.Generator,
    *,
    horizon: float = np.inf,
    target_axis: Axis | None = None,
    target_level: float | None = None,
    window: tuple[float, float] | None = None,
    record: bool = False,
    init: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> JumpEnsemble:
    """Advance an ensemble of SIR paths to extinction, horizon, or target.

    ``init`` supplies per-path (s, i, r, t) start points for continuing
    truncated paths; otherwise all paths start fresh at (s0, i0, 0, 0).
    """
    if init is not None:
        s = np.array(init[0], dtype=np.int64)
        i = np.array(init[1], dtype=np.int64)
        r = np.array(init[2], dtype=np.int64)
        t = np.array(init[3], dtype=float)
        n = len(t)
    else:
        n = int(n_paths)
        s = np.full(n, params.s0, dtype=np.int64)
        i = np.full(n, params.i0, dtype=np.int64)
        r = np.zeros(n, dtype=np.int64)
        t = np.zeros(n)
    coef = params.lam / params.population if params.scaling is Scaling.MASS_ACTION else params.lam
    max_i = i.copy()
    n_inf = np.zeros(n, dtype=np.int64)
    n_rem = np.zeros(n, dtype=np.int64)
    int_pair = np.zeros(n)
    int_i = np.zeros(n)
    window_rem = np.zeros(n, dtype=np.int64) if window is not None else None
    rec_idx: list[np.ndarray] = []
    rec_t: list[np.ndarray] = []
    rec_k: list[np.ndarray] = []

    active = (i > 0) & (t < horizon) & ~_target_hit(target_axis, target_level, i, r)
    iterations = 0
    while active.any():
        iterations += 1
        if iterations > _ITERATION_CAP:
            raise RuntimeError("iteration cap exceeded in ensemble simulation")
        idx = np.flatnonzero(active)
        s_a, i_a = s[idx], i[idx]
        rate_inf = coef * s_a * i_a
        rate_tot = rate_inf + params.gamma * i_a
        dt = -np.log1p(-rng.random(idx.size)) / rate_tot
        t_new = t[idx] + dt
        over = t_new > horizon
        dt_eff = np.minimum(t_new, horizon) - t[idx]
        int_pair[idx] += (s_a * i_a * dt_eff) * (1.0 / params.population if params.scaling is Scaling.MASS_ACTION else 1.0)
        int_i[idx] += i_a * dt_eff
        is_inf = rng.random(idx.size) * rate_tot < rate_inf

        hit_inf = idx[~over & is_inf]
        hit_rem = idx[~over & ~is_inf]
        s[hit_inf] -= 1
        i[hit_inf] += 1
        n_inf[hit_inf] += 1
        max_i[hit_inf] = np.maximum(max_i[hit_inf], i[hit_inf])
        i[hit_rem] -= 1
        r[hit_rem] += 1
        n_rem[hit_rem] += 1
        t[idx] = np.minimum(t_new, horizon)
        if window is not None and hit_rem.size:
            t_rem = t[hit_rem]
            window_rem[hit_rem] += (t_rem > window[0]) & (t_rem <= window[1])
        if record:
            ev = idx[~over]
            rec_idx.append(ev)
            rec_t.append(t[ev])
            rec_k.append(np.where(is_inf[~over], _INF, _REM).astype(np.int8))
        active = (i > 0) & (t < horizon) & ~_target_hit(target_axis, target_level, i, r)

    events = _collect_events(n, rec_idx, rec_t, rec_k) if record else None
    return JumpEnsemble(s, i, r, t, max_i, n_inf, n_rem, int_pair, int_i, window_rem, events)


def hiv_ensemble(
    params: HivParams,
    n_paths: int | None,
    rng: np.random.Generator,
    *,
    horizon: float = np.inf,
    target_axis: Axis | None = None,
    target_level: float | None = None,
    window: tuple[float, float] | None = None,
    record: bool = False,
    init: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> JumpEnsemble:
    """Advance contact-tracing paths by thinning, in lockstep.

    State carries, per path, the decayed contact-tracing sum
    sum(exp(-c * age)); between jumps it only decays, so the rate at the
    last jump bounds the rate until the next and rejected proposals simply
    re-tighten the bound.  ``init`` supplies (s, i, r, t, decayed).
    """
    if init is not None:
        s = np.array(init[0], dtype=np.int64)
        i = np.array(init[1], dtype=np.int64)
        r = np.array(init[2], dtype=np.int64)
        t = np.array(init[3], dtype=float)
        decayed = np.array(init[4], dtype=float)
        n = len(t)
    else:
        n = int(n_paths)
        s = np.full(n, params.s0, dtype=np.int64)
        i = np.full(n, params.i0, dtype=np.int64)
        r = np.full(n, params.r0_count, dtype=np.int64)
        t = np.zeros(n)
        decayed = np.full(n, float(sum(np.exp(-params.c * a) for a in params.initial_detection_ages)))
    max_i = i.copy()
    n_inf = np.zeros(n, dtype=np.int64)
    n_rem = np.zeros(n, dtype=np.int64)
    int_pair = np.zeros(n)
    int_i = np.zeros(n)
    window_rem = np.zeros(n, dtype=np.int64) if window is not None else None
    rec_idx: list[np.ndarray] = []
    rec_t: list[np.ndarray] = []
    rec_k: list[np.ndarray] = []

    active = (i > 0) & (t < horizon) & ~_target_hit(target_axis, target_level, i, r)
    iterations = 0
    while active.any():
        iterations += 1
        if iterations > _ITERATION_CAP:
            raise RuntimeError("iteration cap exceeded in ensemble simulation")
        idx = np.flatnonzero(active)
        i_a = i[idx]
        rate_inf = params.lam * s[idx] * i_a
        bound = rate_inf + params.gamma1 * i_a + params.gamma2 * i_a * decayed[idx]
        dt = -np.log1p(-rng.random(idx.size)) / bound
        t_new = t[idx] + dt
        over = t_new > horizon
        dt_eff = np.minimum(t_new, horizon) - t[idx]
        decay_factor = np.exp(-params.c * dt_eff)
        decayed[idx] *= decay_factor
        t[idx] = np.minimum(t_new, horizon)
        rate_det = params.gamma1 * i_a + params.gamma2 * i_a * decayed[idx]
        rate_tot = rate_inf + rate_det
        if np.any(rate_tot > bound * (1.0 + 1e-12)):
            raise AssertionError("thinning bound fell below the instantaneous rate")
        accepted = ~over & (rng.random(idx.size) * bound < rate_tot)
        is_inf = rng.random(idx.size) * rate_tot < rate_inf

        hit_inf = idx[accepted & is_inf]
        hit_det = idx[accepted & ~is_inf]
        s[hit_inf] -= 1
        i[hit_inf] += 1
        n_inf[hit_inf] += 1
        max_i[hit_inf] = np.maximum(max_i[hit_inf], i[hit_inf])
        i[hit_det] -= 1
        r[hit_det] += 1
        n_rem[hit_det] += 1
        decayed[hit_det] += 1.0
        if window is not None and hit_det.size:
            t_det = t[hit_det]
            window_rem[hit_det] += (t_det > window[0]) & (t_det <= window[1])
        if record and (accepted.any()):
            ev = idx[accepted]
            rec_idx.append(ev)
            rec_t.append(t[ev])
            rec_k.append(np.where(is_inf[accepted], _INF, _DET).astype(np.int8))
        active = (i > 0) & (t < horizon) & ~_target_hit(target_axis, target_level, i, r)

    events = _collect_events(n, rec_idx, rec_t, rec_k) if record else None
    return JumpEnsemble(
        s, i, r, t, max_i, n_inf, n_rem, int_pair, int_i, window_rem, events, decayed
    )


def rf_advance(
    s: np.ndarray, i: np.ndarray, q: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """One Reed-Frost generation for an ensemble of (s, i) states."""
    p_infect = -np.expm1(i * np.log(q)) if q < 1.0 else np.zeros(len(i))
    new_inf = rng.binomial(s, p_infect)
    return s - new_inf, new_inf


def rf_chains(
    params: ReedFrostParams, t_max: int, n_paths: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate n_paths Reed-Frost chains; returns (S, I) arrays of shape
    (n_paths, t_max + 1)."""
    S = np.zeros((n_paths, t_max + 1), dtype=np.int64)
    I = np.zeros((n_paths, t_max + 1), dtype=np.int64)
    S[:, 0] = params.s0
    I[:, 0] = params.i0
    for g in range(t_max):
        S[:, g + 1], I[:, g + 1] = rf_advance(S[:, g], I[:, g], params.q, rng)
    return S, I


def rf_loglik(S: np.ndarray, I: np.ndarray, q: float) -> np.ndarray:
    """Log-likelihood of each Reed-Frost chain under escape probability q.

    Generations with no infectives contribute nothing.  q = 1 sends any chain
    with a subsequent infection to -inf.
    """
    s_t, i_t, i_next = S[:, :-1], I[:, :-1], I[:, 1:]
    live = i_t > 0
    out = np.zeros(S.shape[0])
    if q >= 1.0:
        out[np.any(live & (i_next > 0), axis=1)] = -np.inf
        return out
    log_q = np.log(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.log(-np.expm1(i_t * log_q))
        comb = gammaln(s_t + 1) - gammaln(i_next + 1) - gammaln(s_t - i_next + 1)
        terms = comb + i_next * log_p + (s_t - i_next) * i_t * log_q
    terms = np.where(live, terms, 0.0)
    # absorbed rows produce 0 * log(0) above; anything left is a true log(0)
    terms = np.where(np.isnan(terms), -np.inf, terms)
    return terms.sum(axis=1)
