"""Annealed entropy of a box, its Lagrange closure, and the static threshold."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import comb, xlogy

from .errors import ConvergenceError, DomainError
from .problem import MacroState, ProblemSpec, energy_of_box

_TINY = 1e-300


@dataclass(frozen=True)
class LagrangeClosure:
    lam: float
    mu_plus: float
    mu_minus: float
    Z: float
    Mplus: float
    Mminus: float


def spin_sums(Mm: np.ndarray) -> tuple[float, float]:
    """Clause-position counts on 0-bits and on 1-bits, ``(M+, M-)``."""
    K = len(Mm) - 1
    m = np.arange(K + 1)
    return float((K - m) @ Mm), float(m @ Mm)


def lagrange_closure(state: MacroState) -> LagrangeClosure:
    """Closed-form multipliers of the box-counting saddle point."""
    q = state.q
    if abs(q) >= 1.0:
        raise DomainError("closure undefined at |q| = 1")
    Mp, Mm_ = spin_sums(state.Mm)
    mup = 2.0 * Mp / (1.0 + q)
    mum = 2.0 * Mm_ / (1.0 - q)
    lam = float(np.arctanh(q) - 0.5 * (mup - mum))
    Z = float(np.exp(lam + mup) + np.exp(-lam + mum))
    return LagrangeClosure(lam, mup, mum, Z, Mp, Mm_)


def _entropy(q: float, M: np.ndarray, gamma: float) -> float:
    K = len(M) - 1
    C = comb(K, np.arange(K + 1))
    if abs(q) >= 1.0:
        ref = np.zeros(K + 1)
        ref[0 if q > 0 else K] = gamma
        return 0.0 if np.allclose(M, ref, atol=1e-14) else -np.inf
    m = np.arange(K + 1)
    t = np.arctanh(q)
    D = (K - 2 * m) @ M
    r = 1.0 - q * q
    return float(
        -q * t
        + (K * gamma - 1.0) * (0.5 * np.log(r) - np.log(2.0))
        + D * t
        - xlogy(M, M / C).sum()
        + xlogy(gamma, gamma)
    )


def annealed_entropy(state: MacroState) -> float:
    """Disorder-averaged log-count of strings in a box, per variable.

    Uses ``0 ln 0 = 0``. Returns ``-inf`` for boxes that are empty in the
    large-N limit.
    """
    return _entropy(state.q, state.Mm, state.gamma)


def entropy_gradient(state: MacroState) -> tuple[float, np.ndarray]:
    """Partial derivatives ``(ds/dq, ds/dM_m)``.

    The M-gradient is defined up to an additive constant (the sum of
    densities is fixed), which is dropped.
    """
    K = state.K
    q, M = state.q, state.Mm
    m = np.arange(K + 1)
    C = comb(K, m)
    t = np.arctanh(q)
    r = 1.0 - q * q
    D = (K - 2 * m) @ M
    dq = -t + (D - K * state.gamma * q) / r
    dM = (K - 2 * m) * t - np.log(np.maximum(M, _TINY) / C)
    return float(dq), dM


def _binomial_weights(K: int, q: float) -> np.ndarray:
    x = (1.0 - q) / 2.0
    m = np.arange(K + 1)
    return comb(K, m) * np.power(x, m) * np.power(1.0 - x, K - m)


def tilted_densities(spec: ProblemSpec, gamma: float, q: float,
                     energy: float | None = None,
                     fixed: dict | None = None) -> np.ndarray | None:
    """Entropy-maximizing densities at fixed ``q``.

    With an energy constraint the satisfied and violated groups each carry
    binomial weights rescaled to their fixed totals. Returns ``None`` when
    the constraints cannot be met.
    """
    K = spec.K
    fixed = dict(fixed or {})
    w = _binomial_weights(K, q)
    M = np.zeros(K + 1)
    free = np.ones(K + 1, dtype=bool)
    for m, val in fixed.items():
        M[m] = val
        free[m] = False
    rest = gamma - M.sum()
    z = spec.zeta_array
    if energy is None:
        groups = [(free, rest)]
    else:
        viol = (z == 0)
        groups = [(free & viol, energy - M[~free & viol].sum()),
                  (free & ~viol, gamma - energy - M[~free & ~viol].sum())]
    for mask, mass in groups:
        if mass < -1e-14:
            return None
        mass = max(mass, 0.0)
        if mass == 0.0:
            continue
        ws = w[mask].sum()
        if not mask.any() or ws <= 0.0:
            return None
        M[mask] = mass * w[mask] / ws
    return M


def max_entropy_state(spec: ProblemSpec, gamma: float, energy: float | None = None,
                      fixed: dict | None = None, q: float | None = None
                      ) -> tuple[MacroState | None, float]:
    """Maximize the annealed entropy under optional constraints.

    Parameters
    ----------
    spec : ProblemSpec
    gamma : float
        Clause density.
    energy : float, optional
        Fixed energy density.
    fixed : dict, optional
        Fixed individual densities ``{m: M_m}``.
    q : float, optional
        Fixed total spin.

    Returns
    -------
    state, value
        ``(None, -inf)`` when the constraints are infeasible.
    """
    def value(qq):
        M = tilted_densities(spec, gamma, qq, energy, fixed)
        if M is None:
            return -np.inf, None
        return _entropy(qq, M, gamma), M

    if q is not None:
        s, M = value(q)
        if M is None:
            return None, -np.inf
        return MacroState(q, M, gamma), s

    # coarse scan in v = atanh q, then Brent refinement around the best point
    vs = np.linspace(-8.0, 8.0, 81)
    vals = np.array([value(np.tanh(v))[0] for v in vs])
    if not np.isfinite(vals).any():
        return None, -np.inf
    i = int(np.argmax(vals))
    lo, hi = vs[max(i - 1, 0)], vs[min(i + 1, len(vs) - 1)]
    res = minimize_scalar(lambda v: -value(np.tanh(v))[0], bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    v = res.x if -res.fun >= vals[i] else vs[i]
    qq = float(np.tanh(v))
    s, M = value(qq)
    return MacroState(qq, M, gamma), s


def zero_energy_entropy(spec: ProblemSpec, gamma: float) -> float:
    return max_entropy_state(spec, gamma, energy=0.0)[1]


def static_threshold(spec: ProblemSpec, tol: float = 1e-4, step: float = 0.05,
                     gamma_max: float = 200.0) -> float:
    """Clause density where the zero-energy entropy vanishes.

    A grid of spacing ``step`` brackets the sign change; the entropy must
    decrease along the grid, then bisection refines to ``tol``.
    """
    prev_g, prev_s = 0.0, np.log(2.0)
    g = step
    while g <= gamma_max:
        s = zero_energy_entropy(spec, g)
        if s > prev_s + 1e-12:
            raise ConvergenceError(
                f"zero-energy entropy not decreasing near gamma={g}",
                {"gamma": g, "s": s, "previous": prev_s})
        if s < 0:
            lo, hi = prev_g, g
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if zero_energy_entropy(spec, mid) > 0:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        prev_g, prev_s = g, s
        g = round(g + step, 12)
    raise ConvergenceError(f"no sign change of the zero-energy entropy up to gamma={gamma_max}",
                           {"range": [step, gamma_max]})


def sa_free_energy(spec: ProblemSpec, state: MacroState, T: float) -> float:
    """Thermal free energy ``eps - T s`` of a box."""
    if T < 0:
        raise DomainError("temperature must be nonnegative")
    return energy_of_box(spec, state) - T * annealed_entropy(state)
