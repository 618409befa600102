"""Entropy and landscape factor with the vertex degrees pinned to Poisson.

The total-degree distribution of a random hypergraph is Poisson with mean
``K gamma``. Imposing it on each box introduces a field ``h`` conjugate to
``M+ - M-``; boxes with ``M+/(1+q) = M-/(1-q)`` are unaffected.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import comb, xlogy
from scipy.stats import poisson

from .entropy import spin_sums
from .errors import ConvergenceError, DomainError
from .potential import LandscapeSet, _pair_sum
from .problem import Kind, MacroState, ProblemSpec
from .thresholds import Envelope, _Slice, envelope_threshold

TAIL = 1e-14


def poisson_weights(mean: float, tail: float = TAIL) -> np.ndarray:
    """Poisson pmf truncated where the upper tail drops below ``tail``."""
    kmax = int(poisson.isf(tail, mean)) + 1 if mean > 0 else 0
    while poisson.sf(kmax, mean) >= tail:
        kmax += 1
    return poisson.pmf(np.arange(kmax + 1), mean)


@dataclass(frozen=True)
class PoissonClosure:
    lam: float
    h: float
    c_k: np.ndarray
    residual: float


def poisson_closure(q: float, Mplus: float, Mminus: float, gammaK: float,
                    lam0: float | None = None, h0: float | None = None,
                    tol: float = 1e-13, maxiter: int = 200) -> PoissonClosure:
    """Solve for ``(lambda, h)`` by damped Newton.

    Equations: ``sum_k c_k tanh(lambda + k h) = q`` and
    ``sum_k k c_k tanh(lambda + k h) = M+ - M-``.
    """
    if abs(q) >= 1:
        raise DomainError("closure needs |q| < 1")
    c = poisson_weights(gammaK)
    k = np.arange(len(c), dtype=float)
    D = Mplus - Mminus
    x = np.array([np.arctanh(q) if lam0 is None else lam0, 0.0 if h0 is None else h0])

    def resid(x):
        th = np.tanh(x[0] + k * x[1])
        return np.array([c @ th - q, (k * c) @ th - D]), th

    r, th = resid(x)
    nr = np.max(np.abs(r))
    for _ in range(maxiter):
        if nr < tol:
            break
        s2 = c * (1.0 - th**2)
        J = np.array([[s2.sum(), k @ s2], [k @ s2, (k * k) @ s2]])
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Jacobian", {"x": x.tolist()}) from exc
        t = 1.0
        while True:
            xn = x - t * step
            rn, thn = resid(xn)
            nn = np.max(np.abs(rn))
            if nn < nr or t < 1e-12:
                break
            t *= 0.5
        x, r, th, nr = xn, rn, thn, nn
    if nr >= max(tol, 1e-11):
        raise ConvergenceError("Poisson closure did not converge", {"residual": float(nr)})
    return PoissonClosure(float(x[0]), float(x[1]), c, float(nr))


def _closure_for(state: MacroState) -> tuple[PoissonClosure, float, float]:
    Mp, Mm = spin_sums(state.Mm)
    return poisson_closure(state.q, Mp, Mm, state.K * state.gamma), Mp, Mm


def nextorder_entropy(state: MacroState) -> float:
    """Annealed entropy with Poisson-pinned vertex degrees."""
    K, q, M, g = state.K, state.q, state.Mm, state.gamma
    if abs(q) >= 1:
        return -np.inf
    cl, Mp, Mm = _closure_for(state)
    k = np.arange(len(cl.c_k))
    C = comb(K, np.arange(K + 1))
    x = cl.lam + k * cl.h
    lncosh = np.abs(x) + np.log1p(np.exp(-2 * np.abs(x)))
    return float(
        -cl.lam * q - (Mp - Mm) * cl.h + cl.c_k @ lncosh
        - xlogy(M, M / C).sum() + xlogy(Mp, Mp) + xlogy(Mm, Mm)
        + xlogy(g, g) - K * g * np.log(K * g)
    )


def nextorder_ell(state: MacroState) -> float:
    """Landscape factor with Poisson-pinned vertex degrees."""
    return float(np.exp(log_ell_grad(state.q, state.Mm, state.gamma)[0]))


def log_ell_grad(q: float, M: np.ndarray, gamma: float):
    """``ln ell`` with gradients in ``q`` and ``M``, next-order closure."""
    K = len(M) - 1
    m = np.arange(K + 1)
    Mp, Mm = float((K - m) @ M), float(m @ M)
    cl = poisson_closure(q, Mp, Mm, K * gamma)
    c = cl.c_k
    k = np.arange(len(c), dtype=float)
    P, dP = _pair_sum(M)
    sq = np.sqrt(Mp * Mm)
    A = P / sq
    if A >= 1.0 + 1e-12 and len(c) > 200:
        raise DomainError("pair ratio beyond the series radius")
    x = cl.lam + k * cl.h
    sech = 1.0 / np.cosh(x)
    th = np.tanh(x)
    Ak = np.power(A, k)
    terms = c * Ak * sech
    S = terms.sum()
    L = float(np.log(S))
    dL_dlam = -(terms * th).sum() / S
    dL_dh = -(terms * th * k).sum() / S
    dL_dA = (c * k * np.power(A, np.maximum(k - 1, 0)) * sech).sum() / S
    s2 = c * (1.0 - th**2)
    J = np.array([[s2.sum(), k @ s2], [k @ s2, (k * k) @ s2]])
    Jinv = np.linalg.inv(J)
    dq = dL_dlam * Jinv[0, 0] + dL_dh * Jinv[1, 0]
    dD = dL_dlam * Jinv[0, 1] + dL_dh * Jinv[1, 1]
    dA_dM = dP / sq - 0.5 * A * ((K - m) / Mp + m / Mm)
    dM = dL_dA * dA_dM + dD * (K - 2 * m)
    return L, float(dq), dM


# ---------------------------------------------------------------------------
# thresholds


def _max_entropy_zero_energy(spec: ProblemSpec, gamma: float) -> float:
    K = spec.K
    if spec.kind is Kind.ONE_IN_K:
        M = np.zeros(K + 1)
        M[1] = gamma

        def neg(v):
            try:
                return -nextorder_entropy(MacroState(np.tanh(v), M, gamma))
            except (ConvergenceError, DomainError):
                return np.inf

        from .entropy import max_entropy_state
        v0 = np.arctanh(max_entropy_state(spec, gamma, energy=0.0)[0].q)
        vs = v0 + np.linspace(-0.5, 0.5, 41)
        vals = [neg(v) for v in vs]
        i = int(np.argmin(vals))
        r = minimize_scalar(neg, bounds=(vs[max(i - 1, 0)], vs[min(i + 1, 40)]),
                            method="bounded", options={"xatol": 1e-12})
        return float(-min(r.fun, vals[i]))
    idx = np.flatnonzero(spec.zeta_array > 0)
    w0 = np.log(spec.binom[idx])

    def neg(x):
        e = np.exp(x[1:] - x[1:].max())
        M = np.zeros(K + 1)
        M[idx] = gamma * e / e.sum()
        try:
            return -nextorder_entropy(MacroState(np.tanh(x[0]), M, gamma))
        except (ConvergenceError, DomainError):
            return np.inf

    r = minimize(neg, np.concatenate([[0.0], w0]), method="Nelder-Mead",
                 options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000})
    return float(-r.fun)


def nextorder_static_threshold(spec: ProblemSpec, bracket: tuple | None = None,
                               tol: float = 1e-6) -> float:
    from scipy.optimize import brentq
    from .entropy import static_threshold
    if bracket is None:
        g0 = static_threshold(spec)
        bracket = (0.9 * g0, 1.1 * g0)
    return float(brentq(lambda g: _max_entropy_zero_energy(spec, g), *bracket, xtol=tol))


class _NextSlice(_Slice):
    def neg_log_ell(self, y, eps):
        q, M = self.unpack(y, eps)
        try:
            L, dq, dM = log_ell_grad(q, M, self.gamma)
        except (ConvergenceError, DomainError, np.linalg.LinAlgError):
            return np.inf, np.zeros_like(y)
        parts = [[dq * (1.0 - q * q)]]
        for idx in (self.A, self.B):
            Mi, di = M[idx], dM[idx]
            s = Mi.sum()
            parts.append(Mi * (di - (Mi @ di) / s) if s > 0 else np.zeros(len(idx)))
        return -L, -np.concatenate(parts)


def nextorder_envelope(spec: ProblemSpec, gamma: float, n: int = 300,
                       base: Envelope | None = None) -> Envelope:
    """Envelope of the next-order landscape factor.

    Each slice starts from both the previous slice and the base-envelope
    maximizer; the better local maximum is kept. Isolated dips are then
    re-solved from the neighbouring slices.
    """
    from .thresholds import envelope
    if base is None:
        base = envelope(spec, gamma, LandscapeSet.FULL, n)
    grid = base.eps
    sl = _NextSlice(spec, gamma, LandscapeSet.FULL)
    y = sl.start()
    n_sl = len(grid)
    vals = np.empty(n_sl)
    ys: list = [None] * n_sl
    # L-BFGS-B stalls after one step on some slices here; BFGS does not
    opts = {"gtol": 1e-10, "maxiter": 5000}

    def solve(i, starts):
        best = None
        for y0 in starts:
            if y0 is None or not np.isfinite(sl.neg_log_ell(y0, grid[i])[0]):
                continue
            res = minimize(sl.neg_log_ell, y0, args=(grid[i],), jac=True,
                           method="BFGS", options=opts)
            if best is None or res.fun < best.fun:
                best = res
        return best

    for i in range(n_sl - 1, -1, -1):
        best = solve(i, (y, sl.pack(base.states[i])))
        if best is None or not np.isfinite(best.fun):
            raise ConvergenceError("next-order slice has no feasible start",
                                   {"gamma": gamma, "eps": float(grid[i])})
        y = ys[i] = best.x
        vals[i] = np.exp(-best.fun)
    # a slice that stopped early shows up as an isolated dip; retry such
    # slices from their neighbours until nothing improves
    for _sweep in range(5):
        changed = False
        for i in range(1, n_sl - 1):
            if 2 * vals[i] >= vals[i - 1] + vals[i + 1] - 1e-13 * vals[i]:
                continue
            best = solve(i, (ys[i - 1], ys[i + 1]))
            if best is not None and np.exp(-best.fun) > vals[i] * (1 + 1e-14):
                ys[i], vals[i] = best.x, np.exp(-best.fun)
                changed = True
        if not changed:
            break
    states = [sl.state(yy, e) for yy, e in zip(ys, grid)]
    return Envelope(grid, vals, states)


def nextorder_dynamic_threshold(spec: ProblemSpec, gamma_c: float, tol: float = 1e-5,
                                n: int = 300) -> float | None:
    return envelope_threshold(lambda g: nextorder_envelope(spec, g, n), gamma_c, tol)


def nextorder_thresholds(spec: ProblemSpec, n: int = 300) -> dict:
    """Base and next-order thresholds with relative shifts.

    Both pipelines share the same grids so the comparison isolates the
    closure.
    """
    from .entropy import static_threshold
    from .thresholds import dynamic_threshold
    base_c = static_threshold(spec, tol=1e-6)
    next_c = nextorder_static_threshold(spec)
    base_d = dynamic_threshold(spec, "full", base_c, tol=1e-5, n_eps=n)
    next_d = nextorder_dynamic_threshold(spec, next_c, 1e-5, n)
    out = {"gamma_c": base_c, "gamma_c_next": next_c,
           "rel_delta_c": abs(next_c - base_c) / base_c,
           "gamma_d": base_d, "gamma_d_next": next_d, "rel_delta_d": None}
    if base_d is not None and next_d is not None:
        out["rel_delta_d"] = abs(next_d - base_d) / base_d
    return out
