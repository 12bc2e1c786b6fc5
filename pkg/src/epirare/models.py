"""Exact-distribution samplers: Reed-Frost chain, Markovian SIR jump process,
and the age-structured contact-tracing process.

All samplers are pure functions of (params, stop rule, random stream); any
number may run concurrently.  Exponential holding times are sampled by
inversion (-log(1-U)/rate) so that common-random-number couplings can share
uniforms at the clock level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Axis,
    CompartmentState,
    EpidemicPath,
    EventKind,
    HivParams,
    ReedFrostParams,
    SimulationError,
    SirParams,
    path_from_arrays,
)

__all__ = [
    "EVENT_CAP",
    "StopRule",
    "hiv_rates",
    "hiv_simulate",
    "rf_simulate",
    "rf_step",
    "sir_rates",
    "sir_simulate",
]

# Hard per-path cap guarding the almost-sure-extinction assumption.
EVENT_CAP = 100_000_000


@dataclass(frozen=True)
class StopRule:
    """When to halt a jump-process simulation.

    Extinction always halts (no further events are possible).  A finite
    ``horizon`` halts at that clock time; a target halts on first passage of
    the axis quantity at or above ``target_level``.
    """

    horizon: float = math.inf
    target_axis: Axis | None = None
    target_level: int | None = None

    def __post_init__(self) -> None:
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if (self.target_axis is None) != (self.target_level is None):
            raise ValueError("target axis and level must be given together")
        if self.target_axis is not None and self.target_axis not in (
            Axis.INFECTED,
            Axis.REMOVED,
        ):
            raise ValueError("first-passage targets apply to the I or R axis only")

    @staticmethod
    def extinction() -> "StopRule":
        return StopRule()

    @staticmethod
    def at_time(horizon: float) -> "StopRule":
        return StopRule(horizon=horizon)

    @staticmethod
    def first_passage(axis: Axis, level: int, horizon: float = math.inf) -> "StopRule":
        return StopRule(horizon=horizon, target_axis=axis, target_level=level)

    def reached(self, state: CompartmentState) -> bool:
        if self.target_axis is None:
            return False
        value = state.i if self.target_axis is Axis.INFECTED else state.r
        return value >= self.target_level


def rf_step(
    state: tuple[int, int], q: float, rng: np.random.Generator
) -> tuple[int, int]:
    """One Reed-Frost generation from (s, i).

    Each susceptible escapes all current infectives with probability q**i, so
    the next infective count is Binomial(s, 1 - q**i) and the susceptibles
    shrink by the same amount.  The set {i = 0} is absorbing.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1]: {q}")
    s, i = state
    if s < 0 or i < 0:
        raise ValueError("compartment counts must be non-negative")
    if i == 0:
        return (s, 0)
    p_infect = -math.expm1(i * math.log(q))  # 1 - q**i without cancellation
    new_inf = int(rng.binomial(s, p_infect))
    return (s - new_inf, new_inf)


def rf_simulate(
    params: ReedFrostParams, t_max: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Reed-Frost trajectory of length t_max + 1 started at (s0, i0).

    Once absorbed the remaining generations repeat the absorbed state, so the
    returned chain always has full length.
    """
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    chain = [(params.s0, params.i0)]
    state = chain[0]
    for _ in range(t_max):
        if state[1] == 0:
            chain.append(state)
            continue
        state = rf_step(state, params.q, rng)
        chain.append(state)
    return chain


def sir_rates(state: CompartmentState, params: SirParams) -> tuple[float, float]:
    """Instantaneous (infection, removal) rates of the SIR process."""
    return params.pair_rate(state.s, state.i), params.gamma * state.i


def sir_simulate(
    params: SirParams,
    stop: StopRule,
    rng: np.random.Generator,
    *,
    initial: CompartmentState | None = None,
    t0: float = 0.0,
) -> EpidemicPath:
    """Competing-exponential-clock simulation of the SIR jump process.

    Holding times are Exponential(total rate) by inversion; the event kind is
    infection with probability proportional to its rate.  Halts at the stop
    rule or extinction, whichever is first.  ``initial``/``t0`` allow
    continuing from an interior state, as particle mutation requires.
    """
    state = initial if initial is not None else CompartmentState(params.s0, params.i0, 0)
    t = t0
    times: list[float] = []
    kinds: list[int] = []
    while True:
        if state.i == 0:
            horizon = math.inf
            break
        if t >= stop.horizon or stop.reached(state):
            horizon = t
            break
        rate_inf, rate_rem = sir_rates(state, params)
        total = rate_inf + rate_rem
        dt = -math.log1p(-rng.random()) / total
        if t + dt > stop.horizon:
            t = stop.horizon
            horizon = stop.horizon
            break
        t += dt
        if rng.random() * total < rate_inf:
            state = CompartmentState(state.s - 1, state.i + 1, state.r)
            kinds.append(EventKind.INFECTION)
        else:
            state = CompartmentState(state.s, state.i - 1, state.r + 1)
            kinds.append(EventKind.REMOVAL)
        times.append(t)
        if len(times) >= EVENT_CAP:
            raise SimulationError("event cap exceeded; path did not absorb")
    base = initial if initial is not None else CompartmentState(params.s0, params.i0, 0)
    return path_from_arrays(base, times, kinds, horizon)


def hiv_rates(
    state: CompartmentState,
    detection_times: tuple[float, ...],
    t_now: float,
    params: HivParams,
) -> tuple[float, float]:
    """Instantaneous (infection, detection) rates of the contact-tracing model.

    The detection rate adds, on top of the spontaneous gamma1*I term, a
    contact-tracing term gamma2*I * sum(exp(-c * age)) over the ages of all
    recorded detections.
    """
    if any(d > t_now for d in detection_times):
        raise ValueError("detection times must not postdate the evaluation time")
    decayed = sum(math.exp(-params.c * (t_now - d)) for d in detection_times)
    rate_inf = params.lam * state.s * state.i
    rate_det = params.gamma1 * state.i + params.gamma2 * state.i * decayed
    return rate_inf, rate_det


def hiv_simulate(
    params: HivParams,
    stop: StopRule,
    rng: np.random.Generator,
    *,
    initial: CompartmentState | None = None,
    t0: float = 0.0,
    detection_times: tuple[float, ...] | None = None,
) -> EpidemicPath:
    """Thinning-based simulation of the contact-tracing jump process.

    Between jumps the compartment counts are constant and every contact-
    tracing summand decays, so the total rate at the last jump bounds the
    rate until the next one.  Proposals from that bound are accepted with
    probability (instantaneous rate) / (bound); the bound is re-tightened at
    every rejected proposal.
    """
    state = initial if initial is not None else CompartmentState(
        params.s0, params.i0, params.r0_count
    )
    if detection_times is None:
        detection_times = tuple(-a for a in params.initial_detection_ages)
    t = t0
    # Decayed contact-tracing sum at the current time, updated multiplicatively.
    decayed = sum(math.exp(-params.c * (t - d)) for d in detection_times)
    new_times: list[float] = []
    new_kinds: list[int] = []
    n_events = 0
    while True:
        if state.i == 0:
            horizon = math.inf
            break
        if t >= stop.horizon or stop.reached(state):
            horizon = t
            break
        rate_inf = params.lam * state.s * state.i
        bound = rate_inf + params.gamma1 * state.i + params.gamma2 * state.i * decayed
        dt = -math.log1p(-rng.random()) / bound
        if t + dt > stop.horizon:
            horizon = stop.horizon
            t = stop.horizon
            break
        t += dt
        decayed *= math.exp(-params.c * dt)
        rate_det = params.gamma1 * state.i + params.gamma2 * state.i * decayed
        total = rate_inf + rate_det
        if total > bound * (1.0 + 1e-12):
            raise AssertionError("thinning bound fell below the instantaneous rate")
        if rng.random() * bound >= total:
            continue  # rejected proposal; bound re-tightens from here
        if rng.random() * total < rate_inf:
            state = CompartmentState(state.s - 1, state.i + 1, state.r)
            new_kinds.append(EventKind.INFECTION)
        else:
            state = CompartmentState(state.s, state.i - 1, state.r + 1)
            new_kinds.append(EventKind.DETECTION)
            detection_times = detection_times + (t,)
            decayed += 1.0
        new_times.append(t)
        n_events += 1
        if n_events >= EVENT_CAP:
            raise SimulationError("event cap exceeded; path did not absorb")
    base = initial if initial is not None else CompartmentState(
        params.s0, params.i0, params.r0_count
    )
    init_det = tuple(d for d in detection_times if d <= t0)
    return path_from_arrays(base, new_times, new_kinds, horizon, init_det)
