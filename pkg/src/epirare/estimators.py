"""Probability estimators: crude Monte-Carlo, fixed importance sampling with
exact likelihood ratios, and cross-entropy adaptive importance sampling.

Each estimator consumes a SeedSpec whose replication coordinate is set by the
caller; internal phases derive sibling streams through the stage coordinate,
so a run is reproducible bit for bit from (master seed, replication).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import lockstep
from .core import (
    Axis,
    EpidemicPath,
    EventKind,
    HivParams,
    ModelParams,
    ReedFrostParams,
    Scaling,
    SeedSpec,
    SirParams,
)
from .events import (
    CumulativeInfections,
    DiagnosesIncrement,
    Duration,
    EventSpec,
    FinalSize,
    Incidence,
)

__all__ = [
    "Diagnostics",
    "Estimate",
    "Particle",
    "ParticleEnsemble",
    "ce_estimate",
    "cmc",
    "is_estimate",
    "rf_log_likelihood",
    "sir_importance_ratio",
]

# |log likelihood-ratio| beyond this is flagged: exp() would saturate a double.
LOG_RATIO_OVERFLOW = 700.0


@dataclass(frozen=True)
class Diagnostics:
    """Counters surfaced alongside an estimate.

    ``zero_runs`` counts runs whose final value was exactly zero and, for the
    cross-entropy method, iterations whose weights all vanished.
    """

    extinct_ensembles: int = 0
    zero_runs: int = 0
    likelihood_overflows: int = 0

    def merged(self, other: "Diagnostics") -> "Diagnostics":
        return Diagnostics(
            self.extinct_ensembles + other.extinct_ensembles,
            self.zero_runs + other.zero_runs,
            self.likelihood_overflows + other.likelihood_overflows,
        )


@dataclass(frozen=True)
class Estimate:
    """A probability estimate with its replication spread and diagnostics."""

    value: float
    std_error: float = 0.0
    per_level: tuple[float, ...] = ()
    replications: int = 1
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __post_init__(self) -> None:
        if self.value < 0 or self.std_error < 0:
            raise ValueError("estimate and standard error must be non-negative")
        if any(not 0.0 <= p <= 1.0 for p in self.per_level):
            raise ValueError("per-level survival fractions must lie in [0, 1]")


@dataclass(frozen=True)
class Particle:
    """One member of a splitting ensemble with its stopping-time caches."""

    path: object
    level_hit_times: tuple
    horizon: float


@dataclass(frozen=True)
class ParticleEnsemble:
    """Final ensemble of a splitting run: an empirical conditional law."""

    particles: tuple[Particle, ...]
    weights: tuple[float, ...]
    stage: int
    levels: tuple[float, ...] = ()


def _stop_config(spec: EventSpec) -> dict:
    """Lockstep stop arguments under which the event is decided."""
    if isinstance(spec, FinalSize):
        return dict(target_axis=Axis.REMOVED, target_level=spec.n_c)
    if isinstance(spec, Incidence):
        return dict(horizon=spec.T, target_axis=Axis.INFECTED, target_level=spec.n_i)
    if isinstance(spec, Duration):
        return dict(horizon=spec.T)
    if isinstance(spec, DiagnosesIncrement):
        return dict(horizon=spec.t + spec.u, window=(spec.t, spec.t + spec.u))
    raise TypeError(f"no jump-process stop rule for {spec}")


def _batch_indicators(batch: lockstep.JumpEnsemble, spec: EventSpec) -> np.ndarray:
    if isinstance(spec, FinalSize):
        return batch.r >= spec.n_c
    if isinstance(spec, Incidence):
        return batch.max_i >= spec.n_i
    if isinstance(spec, Duration):
        return batch.i > 0
    return batch.window_rem >= spec.n_r


def _ensemble_fn(model: ModelParams):
    if isinstance(model, SirParams):
        return lockstep.sir_ensemble
    if isinstance(model, HivParams):
        return lockstep.hiv_ensemble
    raise TypeError(f"not a jump-process model: {model}")


def _validate_event_model(model: ModelParams, spec: EventSpec) -> None:
    discrete = isinstance(model, ReedFrostParams)
    if discrete != isinstance(spec, CumulativeInfections):
        raise ValueError(
            "cumulative-infection events pair with the Reed-Frost model; "
            "all other events pair with the jump-process models"
        )


def cmc(model: ModelParams, spec: EventSpec, n_paths: int, seed: SeedSpec) -> Estimate:
    """Crude Monte-Carlo: empirical frequency of the event over i.i.d. paths."""
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    _validate_event_model(model, spec)
    rng = seed.generator()
    if isinstance(model, ReedFrostParams):
        _, infectives = lockstep.rf_chains(model, spec.t - 1, n_paths, rng)
        hits = infectives.sum(axis=1) >= spec.n_c
    else:
        batch = _ensemble_fn(model)(model, n_paths, rng, **_stop_config(spec))
        hits = _batch_indicators(batch, spec)
    value = float(np.mean(hits))
    return Estimate(value, diagnostics=Diagnostics(zero_runs=int(value == 0.0)))


def sir_importance_ratio(
    path: EpidemicPath, base: SirParams, instr: SirParams
) -> float:
    """Likelihood ratio d(base)/d(instrumental) of a path simulated under the
    instrumental SIR law, evaluated at the path's stopping time.

    The rate integrals reduce to finite sums over inter-event intervals since
    S and I are piecewise constant.  A base rate of zero against a path that
    used it gives ratio 0 (absolute-continuity edge).
    """
    if instr.lam <= 0 or instr.gamma <= 0:
        raise ValueError("instrumental rates must be positive")
    if base.scaling is not instr.scaling or base.population != instr.population:
        raise ValueError("base and instrumental laws must share scaling and population")
    int_pair = 0.0
    int_i = 0.0
    n_inf = 0
    n_rem = 0
    state = path.initial
    t_prev = 0.0
    divisor = base.population if base.scaling is Scaling.MASS_ACTION else 1
    for ev in path.events:
        dt = ev.time - t_prev
        int_pair += state.s * state.i / divisor * dt
        int_i += state.i * dt
        if ev.kind == EventKind.INFECTION:
            n_inf += 1
        else:
            n_rem += 1
        state = ev.state_after
        t_prev = ev.time
    if state.i > 0:
        if not math.isfinite(path.horizon):
            raise ValueError("path has no finite stopping time to evaluate the ratio at")
        dt = path.horizon - t_prev
        int_pair += state.s * state.i / divisor * dt
        int_i += state.i * dt
    if (base.lam == 0 and n_inf > 0) or (base.gamma == 0 and n_rem > 0):
        return 0.0
    log_phi = -((base.lam - instr.lam) * int_pair + (base.gamma - instr.gamma) * int_i)
    if n_inf:
        log_phi += n_inf * math.log(base.lam / instr.lam)
    if n_rem:
        log_phi += n_rem * math.log(base.gamma / instr.gamma)
    return math.exp(log_phi)


def rf_log_likelihood(path, q: float) -> float:
    """Log-likelihood of a Reed-Frost chain under escape probability q.

    Generations with no infectives contribute nothing; q = 1 with any
    subsequent infection yields -inf.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1]: {q}")
    chain = list(path)
    total = 0.0
    for (s, i), (s_next, i_next) in zip(chain, chain[1:]):
        if i_next > s or s_next != s - i_next:
            raise ValueError("inconsistent chain: bookkeeping does not close")
        if i == 0:
            if i_next != 0:
                raise ValueError("inconsistent chain: infections out of absorption")
            continue
        if q >= 1.0:
            if i_next > 0:
                return -math.inf
            continue
        p_infect = -math.expm1(i * math.log(q))
        total += (
            math.lgamma(s + 1)
            - math.lgamma(i_next + 1)
            - math.lgamma(s - i_next + 1)
            + (i_next * math.log(p_infect) if i_next else 0.0)
            + (s - i_next) * i * math.log(q)
        )
    return total


def _sir_log_ratio(
    batch: lockstep.JumpEnsemble, base: SirParams, instr: SirParams
) -> np.ndarray:
    log_phi = -(
        (base.lam - instr.lam) * batch.int_pair
        + (base.gamma - instr.gamma) * batch.int_i
    )
    if base.lam > 0:
        log_phi = log_phi + batch.n_inf * math.log(base.lam / instr.lam)
    else:
        log_phi = np.where(batch.n_inf > 0, -np.inf, log_phi)
    log_phi = log_phi + batch.n_rem * math.log(base.gamma / instr.gamma)
    return log_phi


def is_estimate(
    model: ModelParams,
    spec: EventSpec,
    instrumental: ModelParams,
    n_paths: int,
    seed: SeedSpec,
) -> Estimate:
    """Fixed importance sampling: simulate under the instrumental law and
    reweight by the exact likelihood ratio."""
    _validate_event_model(model, spec)
    rng = seed.generator()
    overflow = 0
    if isinstance(model, ReedFrostParams):
        if not isinstance(instrumental, ReedFrostParams):
            raise TypeError("instrumental law must match the model family")
        if (instrumental.s0, instrumental.i0) != (model.s0, model.i0):
            raise ValueError("instrumental law must share the initial condition")
        S, I = lockstep.rf_chains(instrumental, spec.t - 1, n_paths, rng)
        hits = I.sum(axis=1) >= spec.n_c
        log_ratio = lockstep.rf_loglik(S, I, model.q) - lockstep.rf_loglik(
            S, I, instrumental.q
        )
    elif isinstance(model, SirParams):
        if not isinstance(instrumental, SirParams):
            raise TypeError("instrumental law must match the model family")
        if (instrumental.s0, instrumental.i0) != (model.s0, model.i0):
            raise ValueError("instrumental law must share the initial condition")
        batch = lockstep.sir_ensemble(
            instrumental, n_paths, rng, **_stop_config(spec)
        )
        hits = _batch_indicators(batch, spec)
        log_ratio = _sir_log_ratio(batch, model, instrumental)
    else:
        raise TypeError("importance sampling supports the Reed-Frost and SIR models")
    used = log_ratio[hits]
    used = used[np.isfinite(used)]
    if used.size and np.max(np.abs(used)) > LOG_RATIO_OVERFLOW:
        overflow = 1
    with np.errstate(over="ignore"):
        value = float(np.mean(np.where(hits, np.exp(log_ratio), 0.0)))
    diag = Diagnostics(zero_runs=int(value == 0.0), likelihood_overflows=overflow)
    return Estimate(value, diagnostics=diag)


def _rf_ce_update(
    S: np.ndarray, I: np.ndarray, weights: np.ndarray, q_prev: float
) -> float:
    """Weighted maximum-likelihood escape probability, by 1-D search."""
    eps = 1e-9
    active = weights > 0

    def negative_objective(q: float) -> float:
        return -float(weights[active] @ lockstep.rf_loglik(S[active], I[active], q))

    res = minimize_scalar(
        negative_objective, bounds=(eps, 1.0 - eps), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x) if res.success else q_prev


def ce_estimate(
    model: ModelParams,
    spec: EventSpec,
    n_paths: int,
    iterations: int,
    seed: SeedSpec,
) -> tuple[Estimate, list[ModelParams]]:
    """Cross-entropy adaptive importance sampling.

    Starting from the nominal parameters, each iteration simulates under the
    current instrumental law, forms the importance-sampling estimate, and
    refits the instrumental parameters by weighted maximum likelihood with
    weights ratio * indicator.  Returns the last iteration's estimate plus the
    learned parameter trace.  An iteration whose weights all vanish keeps the
    parameters and is counted in ``zero_runs``.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    _validate_event_model(model, spec)
    if not isinstance(model, (ReedFrostParams, SirParams)):
        raise TypeError("the cross-entropy method supports Reed-Frost and SIR models")
    trace: list[ModelParams] = [model]
    current = model
    zero_runs = 0
    overflow = 0
    theta = 0.0
    for k in range(1, iterations + 1):
        rng = seed.stream(stage=k).generator()
        if isinstance(model, ReedFrostParams):
            S, I = lockstep.rf_chains(current, spec.t - 1, n_paths, rng)
            hits = I.sum(axis=1) >= spec.n_c
            log_ratio = lockstep.rf_loglik(S, I, model.q) - lockstep.rf_loglik(
                S, I, current.q
            )
        else:
            batch = lockstep.sir_ensemble(current, n_paths, rng, **_stop_config(spec))
            hits = _batch_indicators(batch, spec)
            log_ratio = _sir_log_ratio(batch, model, current)
        finite = np.isfinite(log_ratio)
        if np.any(np.abs(log_ratio[finite & hits]) > LOG_RATIO_OVERFLOW):
            overflow += 1
        with np.errstate(over="ignore"):
            weights = np.where(hits, np.exp(log_ratio), 0.0)
        theta = float(np.mean(weights))
        if not np.any(weights > 0):
            zero_runs += 1
            trace.append(current)
            continue
        if isinstance(model, ReedFrostParams):
            q_new = _rf_ce_update(S, I, weights, current.q)
            current = dataclasses.replace(current, q=q_new)
        else:
            w_pair = float(weights @ batch.int_pair)
            w_int_i = float(weights @ batch.int_i)
            lam_new = float(weights @ batch.n_inf) / w_pair if w_pair > 0 else current.lam
            gam_new = float(weights @ batch.n_rem) / w_int_i if w_int_i > 0 else current.gamma
            current = dataclasses.replace(
                current, lam=max(lam_new, 1e-12), gamma=max(gam_new, 1e-12)
            )
        trace.append(current)
    diag = Diagnostics(
        zero_runs=zero_runs + int(theta == 0.0), likelihood_overflows=overflow
    )
    return Estimate(theta, diagnostics=diag), trace
