"""Interacting-branching-particle splitting and temporal multilevel splitting.

A particle ensemble is pushed through nested intermediate events.  At each
stage, particles that reached the stage's level before their own horizon
survive; the rest are replaced by copies of survivors truncated at the
survivor's level-hitting time and re-simulated onward.  The estimate is the
product of stage survival fractions, generalized to weighted selection by the
unnormalized genealogical formula

    value = prod_k mean(w_k) * mean(indicator / prod_k w_k(ancestral line)),

which reduces exactly to the survival-fraction product for 0/1 weights.

Selection variants for continuous-time events (survivors always keep their
slots and futures):

* ``multinomial``: each killed slot independently draws its own parent with
  probability proportional to the selection weights among survivors.
* ``keepall``: one parent is drawn from the weighted survivor pool per stage
  and every killed slot becomes an independent continuation of it; the shared
  ancestry leaves estimates unbiased but visibly noisier.

Discrete-generation events instead redraw the whole ensemble from the
weighted selection distribution every generation (the weighted-potential
normalization requires it), so ``variant`` has no effect on them.

Stream layout per stage s: particle 0 carries batched mutation draws,
particle 1 carries selection draws; stage 0 is the initial ensemble.
Restarts shift all stage coordinates by a large fixed offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lockstep
from .core import (
    NEVER,
    CompartmentState,
    EventKind,
    HivParams,
    ModelParams,
    ReedFrostParams,
    SeedSpec,
    SirParams,
    path_from_arrays,
)
from .estimators import Diagnostics, Estimate, Particle, ParticleEnsemble, _stop_config
from .events import (
    CumulativeInfections,
    DiagnosesIncrement,
    Duration,
    EventSpec,
    FinalSize,
    Incidence,
    LevelSchedule,
    NoProgressError,
    event_threshold,
    quantile_levels,
)

__all__ = ["ibps_estimate", "temporal_split_estimate"]

_INF = EventKind.INFECTION.value
_RESTART_STAGE_OFFSET = 1_000_000
_STAGE_CAP = 100_000

VARIANTS = ("multinomial", "keepall")
WEIGHT_RULES = ("indicator", "potential_v", "potential_dv")


# ---------------------------------------------------------------------------
# continuous-time ensembles: per-slot event arrays plus vector caches


@dataclass
class _Slots:
    """Parallel per-slot path records for a jump-process ensemble."""

    times: list[np.ndarray]
    kinds: list[np.ndarray]
    s: np.ndarray
    i: np.ndarray
    r: np.ndarray
    t: np.ndarray
    max_i: np.ndarray
    window_rem: np.ndarray | None
    decayed: np.ndarray | None
    log_w: np.ndarray

    @classmethod
    def from_batch(cls, batch: lockstep.JumpEnsemble) -> "_Slots":
        n = len(batch.t)
        return cls(
            times=[ev[0] for ev in batch.events],
            kinds=[ev[1] for ev in batch.events],
            s=batch.s,
            i=batch.i,
            r=batch.r,
            t=batch.t,
            max_i=batch.max_i,
            window_rem=batch.window_rem,
            decayed=batch.decayed,
            log_w=np.zeros(n),
        )


def _progress(slots: _Slots, spec: EventSpec) -> np.ndarray:
    if isinstance(spec, FinalSize):
        return slots.r.astype(float)
    if isinstance(spec, Incidence):
        return slots.max_i.astype(float)
    return slots.window_rem.astype(float)


def _initial_state(model: ModelParams) -> CompartmentState:
    if isinstance(model, HivParams):
        return CompartmentState(model.s0, model.i0, model.r0_count)
    return CompartmentState(model.s0, model.i0, 0)


def _hiv_decayed_at(model: HivParams, times: np.ndarray, kinds: np.ndarray, t_cut: float) -> float:
    """Contact-tracing sum at t_cut from the recorded detections before it."""
    det = times[(kinds != _INF) & (times <= t_cut)]
    total = float(np.sum(np.exp(-model.c * (t_cut - det)))) if det.size else 0.0
    for age in model.initial_detection_ages:
        total += math.exp(-model.c * (t_cut + age))
    return total


def _hit_index(
    slots: _Slots, parent: int, spec: EventSpec, level: float, initial: CompartmentState
) -> int:
    """Index of the parent's event that first attains the level, -1 if the
    initial state already does."""
    kinds = slots.kinds[parent]
    lvl = int(math.ceil(level))
    if isinstance(spec, FinalSize):
        if initial.r >= lvl:
            return -1
        removals = np.flatnonzero(kinds != _INF)
        return int(removals[lvl - initial.r - 1])
    if isinstance(spec, Incidence):
        if initial.i >= lvl:
            return -1
        running = initial.i + np.cumsum(np.where(kinds == _INF, 1, -1))
        return int(np.flatnonzero(running >= lvl)[0])
    times = slots.times[parent]
    in_window = (kinds != _INF) & (times > spec.t) & (times <= spec.t + spec.u)
    return int(np.flatnonzero(np.cumsum(in_window) >= lvl)[0])


def _cut_state(
    slots: _Slots,
    parent: int,
    cut: int,
    model: ModelParams,
    spec: EventSpec,
    initial: CompartmentState,
) -> tuple:
    """Prefix summaries of a parent's path up to (and including) event ``cut``."""
    times = slots.times[parent][: cut + 1]
    kinds = slots.kinds[parent][: cut + 1]
    n_inf = int(np.sum(kinds == _INF))
    n_rem = len(kinds) - n_inf
    s = initial.s - n_inf
    i = initial.i + n_inf - n_rem
    r = initial.r + n_rem
    t = float(times[-1]) if len(times) else 0.0
    if len(kinds):
        running = initial.i + np.cumsum(np.where(kinds == _INF, 1, -1))
        max_i = max(initial.i, int(running.max()))
    else:
        max_i = initial.i
    wc = 0
    if isinstance(spec, DiagnosesIncrement):
        wc = int(np.sum((kinds != _INF) & (times > spec.t) & (times <= spec.t + spec.u)))
    decayed = (
        _hiv_decayed_at(model, times, kinds, t) if isinstance(model, HivParams) else 0.0
    )
    return times, kinds, s, i, r, t, max_i, wc, decayed


def _extend_slots(
    slots: _Slots,
    targets: np.ndarray,
    parents: np.ndarray,
    level: float,
    model: ModelParams,
    spec: EventSpec,
    rng: np.random.Generator,
) -> None:
    """Replace each target slot by its parent's prefix plus a fresh tail."""
    initial = _initial_state(model)
    prefixes = []
    init_s = np.empty(len(targets), dtype=np.int64)
    init_i = np.empty(len(targets), dtype=np.int64)
    init_r = np.empty(len(targets), dtype=np.int64)
    init_t = np.empty(len(targets))
    init_d = np.empty(len(targets))
    cut_max_i = np.empty(len(targets), dtype=np.int64)
    cut_wc = np.empty(len(targets), dtype=np.int64)
    for j, (slot, parent) in enumerate(zip(targets, parents)):
        cut = _hit_index(slots, int(parent), spec, level, initial)
        times, kinds, s, i, r, t, max_i, wc, decayed = _cut_state(
            slots, int(parent), cut, model, spec, initial
        )
        prefixes.append((times, kinds))
        init_s[j], init_i[j], init_r[j], init_t[j] = s, i, r, t
        init_d[j] = decayed
        cut_max_i[j] = max_i
        cut_wc[j] = wc
    parent_log_w = slots.log_w[parents].copy()
    stop = _stop_config(spec)
    if isinstance(model, HivParams):
        batch = lockstep.hiv_ensemble(
            model, None, rng, record=True,
            init=(init_s, init_i, init_r, init_t, init_d), **stop,
        )
    else:
        batch = lockstep.sir_ensemble(
            model, None, rng, record=True,
            init=(init_s, init_i, init_r, init_t), **stop,
        )
    for j, slot in enumerate(targets):
        times, kinds = prefixes[j]
        new_t, new_k = batch.events[j]
        slots.times[slot] = np.concatenate([times, new_t])
        slots.kinds[slot] = np.concatenate([kinds, new_k])
    slots.s[targets] = batch.s
    slots.i[targets] = batch.i
    slots.r[targets] = batch.r
    slots.t[targets] = batch.t
    slots.max_i[targets] = np.maximum(cut_max_i, batch.max_i)
    if slots.window_rem is not None:
        slots.window_rem[targets] = cut_wc + batch.window_rem
    if slots.decayed is not None:
        slots.decayed[targets] = batch.decayed
    slots.log_w[targets] = parent_log_w


def _materialize(
    slots: _Slots,
    model: ModelParams,
    spec: EventSpec,
    weights: np.ndarray,
    stage: int,
    levels: list[float],
) -> ParticleEnsemble:
    initial = _initial_state(model)
    init_det = tuple(-a for a in model.initial_detection_ages) if isinstance(
        model, HivParams
    ) else ()
    particles = []
    for k in range(len(slots.times)):
        extinct = slots.i[k] == 0
        horizon = math.inf if extinct else float(slots.t[k])
        path = path_from_arrays(
            initial, slots.times[k], slots.kinds[k], horizon, init_det
        )
        hits = tuple(
            _level_hit_time(slots, k, lvl, initial, spec) for lvl in levels
        )
        particles.append(Particle(path, hits, horizon))
    return ParticleEnsemble(
        tuple(particles), tuple(float(w) for w in weights), stage, tuple(levels)
    )


def _level_hit_time(
    slots: _Slots, k: int, level: float, initial: CompartmentState, spec: EventSpec
):
    """First time slot k attained the level on the event's axis, or NEVER."""
    kinds = slots.kinds[k]
    times = slots.times[k]
    lvl = int(math.ceil(level))
    if isinstance(spec, FinalSize):
        if initial.r >= lvl:
            return 0.0
        removals = np.flatnonzero(kinds != _INF)
        if removals.size >= lvl - initial.r:
            return float(times[removals[lvl - initial.r - 1]])
        return NEVER
    if isinstance(spec, Incidence):
        if initial.i >= lvl:
            return 0.0
        running = initial.i + np.cumsum(np.where(kinds == _INF, 1, -1))
        hit = np.flatnonzero(running >= lvl)
        return float(times[hit[0]]) if hit.size else NEVER
    in_window = (kinds != _INF) & (times > spec.t) & (times <= spec.t + spec.u)
    hit = np.flatnonzero(np.cumsum(in_window) >= lvl)
    return float(times[hit[0]]) if hit.size else NEVER


def _ibps_continuous(
    model: ModelParams,
    spec: EventSpec,
    n_particles: int,
    levels_fixed: tuple[float, ...] | None,
    keep_fraction: float | None,
    variant: str,
    seed: SeedSpec,
    stage_base: int,
) -> tuple[float, list[float], list[float], _Slots, np.ndarray, int, bool]:
    """One splitting run; returns (value, per_level, levels, slots, final
    weights, stage count, extinct flag)."""
    threshold = event_threshold(spec)
    rng0 = seed.stream(particle=0, stage=stage_base).generator()
    fn = lockstep.hiv_ensemble if isinstance(model, HivParams) else lockstep.sir_ensemble
    slots = _Slots.from_batch(
        fn(model, n_particles, rng0, record=True, **_stop_config(spec))
    )
    per_level: list[float] = []
    levels: list[float] = []
    prev: float | None = None
    stage = 0
    fixed_iter = iter(levels_fixed) if levels_fixed is not None else None
    while True:
        stage += 1
        if stage > _STAGE_CAP:
            raise RuntimeError("stage cap exceeded in splitting run")
        progress = _progress(slots, spec)
        if fixed_iter is not None:
            try:
                level = float(next(fixed_iter))
            except StopIteration:
                break
        else:
            try:
                level = float(quantile_levels(progress, keep_fraction, previous=prev))
            except NoProgressError:
                level = threshold
            if prev is not None and level <= prev:
                above = progress[progress > prev]
                level = float(above.min()) if above.size else threshold
            if level >= threshold:
                level = float(threshold)
        levels.append(level)
        surv = progress >= level
        n_surv = int(np.count_nonzero(surv))
        per_level.append(n_surv / n_particles)
        if n_surv == 0:
            return 0.0, per_level, levels, slots, surv.astype(float), stage, True
        final_stage = level >= threshold
        sel_rng = seed.stream(particle=1, stage=stage_base + stage).generator()
        surv_idx = np.flatnonzero(surv)
        if final_stage:
            # conditional-law refill: dead slots copy a surviving path wholesale
            dead = np.flatnonzero(~surv)
            if dead.size:
                parents = surv_idx[sel_rng.integers(0, surv_idx.size, size=dead.size)]
                for slot, parent in zip(dead, parents):
                    slots.times[slot] = slots.times[parent]
                    slots.kinds[slot] = slots.kinds[parent]
                for arr in (slots.s, slots.i, slots.r, slots.t, slots.max_i):
                    arr[dead] = arr[parents]
                if slots.window_rem is not None:
                    slots.window_rem[dead] = slots.window_rem[parents]
                if slots.decayed is not None:
                    slots.decayed[dead] = slots.decayed[parents]
                slots.log_w[dead] = slots.log_w[parents]
            break
        targets = np.flatnonzero(~surv)
        if targets.size:
            if variant == "multinomial":
                parents = surv_idx[sel_rng.integers(0, surv_idx.size, size=targets.size)]
            else:
                parent = surv_idx[int(sel_rng.integers(0, surv_idx.size))]
                parents = np.full(targets.size, parent)
            mut_rng = seed.stream(particle=0, stage=stage_base + stage).generator()
            _extend_slots(slots, targets, parents, level, model, spec, mut_rng)
        prev = level
    value = math.prod(per_level)
    weights = (_progress(slots, spec) >= threshold).astype(float)
    return value, per_level, levels, slots, weights, stage, False


# ---------------------------------------------------------------------------
# discrete-generation ensembles (Reed-Frost)


def _ibps_discrete(
    model: ReedFrostParams,
    spec: CumulativeInfections,
    n_particles: int,
    levels_fixed: tuple[float, ...] | None,
    keep_fraction: float | None,
    weight_rule: str,
    alpha: float,
    seed: SeedSpec,
    stage_base: int,
) -> tuple[float, list[float], list[float], np.ndarray, np.ndarray, np.ndarray, bool]:
    """Generation-synchronized splitting for cumulative-infection events.

    Every generation selects all N slots anew from the weighted ensemble and
    advances them by one fresh transition (the whole future is re-simulated
    generation by generation anyway, so this is the only mutation needed).

    Returns (value, per_level, levels, S history, I history, final weights,
    extinct flag)."""
    t_end = spec.t
    if levels_fixed is not None and len(levels_fixed) != t_end - 1:
        raise ValueError(
            "discrete schedules need exactly one level per selection generation"
        )
    n = n_particles
    S = np.zeros((n, t_end), dtype=np.int64)
    I = np.zeros((n, t_end), dtype=np.int64)
    S[:, 0] = model.s0
    I[:, 0] = model.i0
    cum = np.full(n, float(model.i0))
    log_w = np.zeros(n)
    log_mean_total = 0.0
    per_level: list[float] = []
    levels: list[float] = []
    prev_level = -math.inf
    for g in range(1, t_end):
        adv_rng = seed.stream(particle=0, stage=stage_base + g).generator()
        S[:, g], I[:, g] = lockstep.rf_advance(S[:, g - 1], I[:, g - 1], model.q, adv_rng)
        cum += I[:, g]
        if levels_fixed is not None:
            level = float(levels_fixed[g - 1])
        else:
            level = float(quantile_levels(cum, keep_fraction))
            level = max(min(level, float(spec.n_c)), prev_level)
        levels.append(level)
        surv = cum >= level
        if weight_rule == "indicator":
            omega = surv.astype(float)
        elif weight_rule == "potential_v":
            omega = np.exp(alpha * I[:, g]) * surv
        else:
            omega = np.exp(alpha * (I[:, g] - I[:, g - 1])) * surv
        per_level.append(float(np.mean(surv)))
        mean_w = float(np.mean(omega))
        if mean_w == 0.0:
            return 0.0, per_level, levels, S, I, omega, True
        log_mean_total += math.log(mean_w)
        # Full weighted redraw of every slot: the genealogical normalization
        # requires expected offspring counts proportional to the weights,
        # which keeping survivors in place would break for non-flat weights.
        sel_rng = seed.stream(particle=1, stage=stage_base + g).generator()
        probs = omega / omega.sum()
        gained = np.where(surv, np.log(np.where(omega > 0, omega, 1.0)), 0.0)
        parents = sel_rng.choice(n, size=n, p=probs)
        S[:, : g + 1] = S[parents, : g + 1]
        I[:, : g + 1] = I[parents, : g + 1]
        cum = cum[parents]
        log_w = log_w[parents] + gained[parents]
        prev_level = level
    ind = cum >= spec.n_c
    per_level.append(float(np.mean(ind)))
    if weight_rule == "indicator":
        value = math.prod(per_level)
    else:
        with np.errstate(over="ignore"):
            correction = float(np.mean(np.where(ind, np.exp(-log_w), 0.0)))
        value = math.exp(log_mean_total) * correction
    final_weights = ind.astype(float)
    return value, per_level, levels, S, I, final_weights, False


# ---------------------------------------------------------------------------
# public estimators


def ibps_estimate(
    model: ModelParams,
    spec: EventSpec,
    *,
    n_particles: int,
    schedule: LevelSchedule | None = None,
    keep_fraction: float | None = None,
    variant: str = "multinomial",
    weight_rule: str = "indicator",
    alpha: float = 0.0,
    seed: SeedSpec,
    restart_on_extinction: int = 0,
    conditional_sample: bool = True,
) -> tuple[Estimate, ParticleEnsemble]:
    """Interacting-branching-particle splitting estimate of a rare event.

    Levels come either from a fixed schedule ending at the event threshold or
    adaptively as the keep_fraction quantile of ensemble scores.  A run whose
    ensemble dies records the estimate 0 (keeping across-replication averages
    unbiased) unless ``restart_on_extinction`` grants fresh attempts.

    The returned ensemble holds the final paths as an empirical estimate of
    the law conditioned on the event; pass ``conditional_sample=False`` to
    skip materializing them (the replication hot path does).
    """
    if n_particles < 2:
        raise ValueError("n_particles must be at least 2")
    if (schedule is None) == (keep_fraction is None):
        raise ValueError("provide exactly one of schedule or keep_fraction")
    if keep_fraction is not None and not 0.0 < keep_fraction < 1.0:
        raise ValueError("keep_fraction must lie in (0, 1)")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if weight_rule not in WEIGHT_RULES:
        raise ValueError(f"weight_rule must be one of {WEIGHT_RULES}")
    if isinstance(spec, Duration):
        raise ValueError("duration events split along the time axis; use temporal_split_estimate")
    if schedule is not None:
        schedule.validate_against(spec)
    discrete = isinstance(spec, CumulativeInfections)
    if weight_rule != "indicator" and not discrete:
        raise ValueError("potential weight rules apply to discrete-generation events only")
    if discrete != isinstance(model, ReedFrostParams):
        raise ValueError("cumulative-infection events pair with the Reed-Frost model")
    levels_fixed = schedule.levels if schedule is not None else None

    extinct_count = 0
    for attempt in range(restart_on_extinction + 1):
        stage_base = attempt * _RESTART_STAGE_OFFSET
        if discrete:
            value, per_level, levels, S, I, weights, extinct = _ibps_discrete(
                model, spec, n_particles, levels_fixed, keep_fraction,
                weight_rule, alpha, seed, stage_base,
            )
        else:
            value, per_level, levels, slots, weights, _, extinct = _ibps_continuous(
                model, spec, n_particles, levels_fixed, keep_fraction,
                variant, seed, stage_base,
            )
        if not extinct:
            break
        extinct_count += 1
    if not conditional_sample:
        ensemble = ParticleEnsemble((), (), len(per_level), tuple(levels))
    elif discrete:
        particles = tuple(
            Particle(
                [(int(a), int(b)) for a, b in zip(S[k], I[k])], (), float(spec.t)
            )
            for k in range(n_particles)
        )
        ensemble = ParticleEnsemble(
            particles, tuple(float(w) for w in weights), len(per_level), tuple(levels)
        )
    else:
        ensemble = _materialize(slots, model, spec, weights, len(per_level), levels)
    diag = Diagnostics(
        extinct_ensembles=extinct_count, zero_runs=int(value == 0.0)
    )
    estimate = Estimate(value, per_level=tuple(per_level), diagnostics=diag)
    return estimate, ensemble


def temporal_split_estimate(
    model: ModelParams,
    horizon: float,
    *,
    n_particles: int,
    time_grid: tuple[float, ...] | None = None,
    keep_count: int | None = None,
    seed: SeedSpec,
    restart_on_extinction: int = 0,
) -> Estimate:
    """Probability the epidemic outlives ``horizon``, by splitting the time axis.

    Stage k keeps paths not extinct by t_k and refills the rest from uniform
    draws among the keepers, concatenated at t_k and re-simulated onward.  The
    adaptive variant picks the next time point so that ``keep_count`` of the
    current paths survive it.
    """
    if n_particles < 2:
        raise ValueError("n_particles must be at least 2")
    if (time_grid is None) == (keep_count is None):
        raise ValueError("provide exactly one of time_grid or keep_count")
    if time_grid is not None:
        if time_grid[0] <= 0:
            raise ValueError("time grid entries must be positive")
        if any(b <= a for a, b in zip(time_grid, time_grid[1:])):
            raise ValueError("time grid must be strictly increasing")
        if not math.isclose(time_grid[-1], horizon):
            raise ValueError("time grid must end at the horizon")
    if keep_count is not None and not 1 <= keep_count < n_particles:
        raise ValueError("keep_count must lie in [1, n_particles)")
    if not isinstance(model, (SirParams, HivParams)):
        raise TypeError("temporal splitting applies to the jump-process models")

    fn = lockstep.hiv_ensemble if isinstance(model, HivParams) else lockstep.sir_ensemble
    extinct_count = 0
    value = 0.0
    per_level: list[float] = []
    for attempt in range(restart_on_extinction + 1):
        stage_base = attempt * _RESTART_STAGE_OFFSET
        rng0 = seed.stream(particle=0, stage=stage_base).generator()
        slots = _Slots.from_batch(fn(model, n_particles, rng0, record=True, horizon=horizon))
        ext = np.where(slots.i == 0, slots.t, math.inf)
        per_level = []
        extinct = False
        stage = 0
        t_prev = 0.0
        grid_iter = iter(time_grid[:-1]) if time_grid is not None else None
        while True:
            stage += 1
            if stage > _STAGE_CAP:
                raise RuntimeError("stage cap exceeded in temporal splitting")
            if grid_iter is not None:
                t_k = next(grid_iter, None)
                if t_k is None:
                    break
            else:
                ordered = np.sort(ext)[::-1]
                t_k = float(ordered[keep_count]) if keep_count < len(ordered) else -math.inf
                if not math.isfinite(t_k) or t_k >= horizon:
                    break
                if t_k <= t_prev:
                    break
            alive = ext > t_k
            n_alive = int(np.count_nonzero(alive))
            per_level.append(n_alive / n_particles)
            if n_alive == 0:
                extinct = True
                break
            dead = np.flatnonzero(~alive)
            if dead.size:
                sel_rng = seed.stream(particle=1, stage=stage_base + stage).generator()
                alive_idx = np.flatnonzero(alive)
                parents = alive_idx[sel_rng.integers(0, alive_idx.size, size=dead.size)]
                mut_rng = seed.stream(particle=0, stage=stage_base + stage).generator()
                _refill_at_time(slots, dead, parents, t_k, model, horizon, mut_rng)
                ext[dead] = np.where(slots.i[dead] == 0, slots.t[dead], math.inf)
            t_prev = t_k
        if extinct:
            extinct_count += 1
            value = 0.0
            continue
        final_p = float(np.mean(ext > horizon))
        per_level.append(final_p)
        value = math.prod(per_level)
        break
    diag = Diagnostics(extinct_ensembles=extinct_count, zero_runs=int(value == 0.0))
    return Estimate(value, per_level=tuple(per_level), diagnostics=diag)


def _refill_at_time(
    slots: _Slots,
    targets: np.ndarray,
    parents: np.ndarray,
    t_k: float,
    model: ModelParams,
    horizon: float,
    rng: np.random.Generator,
) -> None:
    """Replace target slots by parent prefixes at time t_k plus fresh tails."""
    initial = _initial_state(model)
    prefixes = []
    m = len(targets)
    init_s = np.empty(m, dtype=np.int64)
    init_i = np.empty(m, dtype=np.int64)
    init_r = np.empty(m, dtype=np.int64)
    init_t = np.full(m, t_k)
    init_d = np.empty(m)
    for j, parent in enumerate(parents):
        times = slots.times[parent]
        kinds = slots.kinds[parent]
        cut = int(np.searchsorted(times, t_k, side="right"))
        times, kinds = times[:cut], kinds[:cut]
        prefixes.append((times, kinds))
        n_inf = int(np.sum(kinds == _INF))
        n_rem = len(kinds) - n_inf
        init_s[j] = initial.s - n_inf
        init_i[j] = initial.i + n_inf - n_rem
        init_r[j] = initial.r + n_rem
        if isinstance(model, HivParams):
            init_d[j] = _hiv_decayed_at(model, times, kinds, t_k)
    if isinstance(model, HivParams):
        batch = lockstep.hiv_ensemble(
            model, None, rng, record=True, horizon=horizon,
            init=(init_s, init_i, init_r, init_t, init_d),
        )
    else:
        batch = lockstep.sir_ensemble(
            model, None, rng, record=True, horizon=horizon,
            init=(init_s, init_i, init_r, init_t),
        )
    for j, slot in enumerate(targets):
        times, kinds = prefixes[j]
        new_t, new_k = batch.events[j]
        slots.times[slot] = np.concatenate([times, new_t])
        slots.kinds[slot] = np.concatenate([kinds, new_k])
    slots.s[targets] = batch.s
    slots.i[targets] = batch.i
    slots.r[targets] = batch.r
    slots.t[targets] = batch.t
    slots.max_i[targets] = batch.max_i  # max over the tail only; unused here
    if slots.decayed is not None:
        slots.decayed[targets] = batch.decayed
