"""Final-size distribution of the Markovian SIR model.

Two independent routes compute the distribution of the number of initially
susceptible individuals ever infected: a triangular linear system solved in
arbitrary precision, and absorption probabilities of the embedded jump chain
enumerated by dynamic programming.  The pair serves as ground truth for all
estimator tests, so disagreement is an error, never silently renormalized.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np

from .core import Scaling, SirParams

__all__ = [
    "UnstableSolveError",
    "brute_force_final_size",
    "exact_final_size",
    "tail_pf",
    "threshold_for_tail",
]

_BRUTE_FORCE_MAX_S0 = 30
_SUM_TOL = 1e-9
_NEG_TOL = 1e-6


class UnstableSolveError(RuntimeError):
    """The triangular solve lost too much precision to be trusted."""


def _pair_rate_factor(params: SirParams, s: int) -> float:
    """Per-infective infection rate with s susceptibles left."""
    if params.scaling is Scaling.MASS_ACTION:
        return params.lam * s / params.population
    return params.lam * s


def exact_final_size(params: SirParams, dps: int | None = None) -> np.ndarray:
    """Distribution of k = initially susceptible individuals ever infected.

    Solves, by forward substitution, the triangular system

        sum_{k=0}^{l} C(s0-k, l-k) * p_k / phi(l)**(i0+k) = C(s0, l),
        phi(l) = gamma / (gamma + per-infective rate at s0-l susceptibles),

    for l = 0..s0.  The substitution runs in arbitrary-precision arithmetic
    (``dps`` decimal digits, chosen from s0 when omitted) because the system
    cancels catastrophically already for moderate populations.

    Returns a length s0+1 probability vector indexed by k.
    """
    s0, i0 = params.s0, params.i0
    if i0 == 0:
        out = np.zeros(s0 + 1)
        out[0] = 1.0
        return out
    phi_min = min(
        params.gamma / (params.gamma + _pair_rate_factor(params, s))
        for s in range(s0 + 1)
    )
    if dps is None:
        # Headroom for the binomial growth plus the (1/phi)**(i0+k) blowup;
        # the system amplifies even input rounding, so be generous.
        dps = max(60, 30 + 3 * s0 + int((s0 + i0) * math.log10(1.0 / phi_min)))
    with mpmath.workdps(dps):
        gamma = mpmath.mpf(params.gamma)
        lam = mpmath.mpf(params.lam)
        # Rate factors stay in working precision: double-rounding them first
        # feeds the solve perturbed inputs that the cancellation amplifies.
        if params.scaling is Scaling.MASS_ACTION:
            rates = [lam * (s0 - l) / params.population for l in range(s0 + 1)]
        else:
            rates = [lam * (s0 - l) for l in range(s0 + 1)]
        phi = [gamma / (gamma + rate) for rate in rates]
        p = [mpmath.mpf(0)] * (s0 + 1)
        for l in range(s0 + 1):
            acc = mpmath.binomial(s0, l)
            inv_phi = 1 / phi[l]
            # inv_phi**(i0+k), advanced incrementally over k
            power = inv_phi ** i0
            for k in range(l):
                acc -= mpmath.binomial(s0 - k, l - k) * p[k] * power
                power *= inv_phi
            p[l] = acc / power  # divides by inv_phi**(i0+l)
        values = [float(v) for v in p]
    if min(values) < -_NEG_TOL:
        raise UnstableSolveError(
            f"numerically unstable for this s0: min p_k = {min(values):.3e}"
        )
    out = np.clip(np.array(values), 0.0, None)
    total = out.sum()
    if abs(total - 1.0) > _SUM_TOL:
        raise UnstableSolveError(
            f"final-size probabilities sum to {total!r}, off by more than {_SUM_TOL}"
        )
    return out


def brute_force_final_size(params: SirParams) -> np.ndarray:
    """Absorption probabilities of the embedded jump chain, by enumeration.

    From (s, i) with i > 0 the chain moves to (s-1, i+1) with probability
    rate_inf / (rate_inf + rate_rem) and to (s, i-1) otherwise; states (s, 0)
    absorb with final size s0 - s.  The (s, i) lattice is O(s0^2), so the
    population is capped.
    """
    s0, i0 = params.s0, params.i0
    if s0 > _BRUTE_FORCE_MAX_S0:
        raise ValueError(f"brute force supports s0 <= {_BRUTE_FORCE_MAX_S0}, got {s0}")
    i_max = i0 + s0
    mass = np.zeros((s0 + 1, i_max + 1))
    mass[s0, i0] = 1.0
    final = np.zeros(s0 + 1)
    for s in range(s0, -1, -1):
        for i in range(i_max, 0, -1):
            m = mass[s, i]
            if m == 0.0:
                continue
            rate_inf = _pair_rate_factor(params, s) * i
            rate_rem = params.gamma * i
            p_inf = rate_inf / (rate_inf + rate_rem) if s > 0 else 0.0
            if s > 0 and p_inf > 0.0:
                mass[s - 1, i + 1] += m * p_inf
            mass[s, i - 1] += m * (1.0 - p_inf)
        final[s0 - s] = mass[s, 0]
    return final


def tail_pf(dist: np.ndarray, i0: int, n_c: int) -> float:
    """P{final epidemic size >= n_c} for a final-size distribution over k.

    The final size counts every individual ever infected, i0 + k in total.
    """
    if n_c < 1:
        raise ValueError(f"threshold must be at least 1: {n_c}")
    s0 = len(dist) - 1
    if n_c <= i0:
        return 1.0
    if n_c > i0 + s0:
        return 0.0
    return float(np.sum(dist[n_c - i0 :]))


def threshold_for_tail(dist: np.ndarray, i0: int, target: float) -> int:
    """Smallest threshold whose exact tail probability best matches target."""
    s0 = len(dist) - 1
    best_nc, best_gap = 1, math.inf
    for n_c in range(1, i0 + s0 + 1):
        gap = abs(tail_pf(dist, i0, n_c) - target)
        if gap < best_gap:
            best_nc, best_gap = n_c, gap
    return best_nc
