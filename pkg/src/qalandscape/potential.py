"""Landscape factor, effective potential and its local minima."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .entropy import max_entropy_state
from .errors import ConvergenceError, DomainError
from .problem import MacroState, ProblemSpec, energy_of_box

_QMAX = 1.0 - 1e-9


class LandscapeSet(str, enum.Enum):
    FULL = "full"
    CLAUSE_COUNTS = "clause-counts"
    ENERGY_ONLY = "energy-only"

    @classmethod
    def parse(cls, value) -> "LandscapeSet":
        if isinstance(value, LandscapeSet):
            return value
        v = str(value).strip().lower().replace("_", "-")
        return {"clausecounts": cls.CLAUSE_COUNTS, "mm": cls.CLAUSE_COUNTS,
                "energyonly": cls.ENERGY_ONLY, "energy": cls.ENERGY_ONLY}.get(v) or cls(v)


@dataclass(frozen=True)
class PotentialPoint:
    state: MacroState
    Gamma: float
    f: float
    ell: float
    is_minimum: bool = True
    hessian_definite: bool = True

    @property
    def energy(self) -> float:
        return float(self.f + self.Gamma * self.ell)


def _pair_sum(M: np.ndarray) -> tuple[float, np.ndarray]:
    """Hopping sum over adjacent clause types and its gradient."""
    K = len(M) - 1
    j = np.arange(K)
    pr = np.sqrt((j + 1) * (K - j) * M[:-1] * M[1:])
    d = np.zeros(K + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        d[:-1] += np.where(M[:-1] > 0, 0.5 * pr / M[:-1], 0.0)
        d[1:] += np.where(M[1:] > 0, 0.5 * pr / M[1:], 0.0)
    return float(pr.sum()), d


def log_ell_grad(q: float, M: np.ndarray, gamma: float):
    """``ln ell`` with partial derivatives in ``q`` and ``M``."""
    K = len(M) - 1
    r = 1.0 - q * q
    sr = np.sqrt(r)
    P, dP = _pair_sum(M)
    Km = K - 2.0 * np.arange(K + 1)
    D = Km @ M
    L = 0.5 * np.log(r) + 2.0 * P / sr - (K * gamma - q * D) / r
    dq = -q / r + 2.0 * P * q / r**1.5 + D / r - 2.0 * q * (K * gamma - q * D) / r**2
    dM = 2.0 * dP / sr + q * Km / r
    return float(L), float(dq), dM


def ell(state: MacroState) -> float:
    """Landscape factor of a box, in ``(0, 1]``.

    Equals one only at the uniform state. At ``|q| -> 1`` the analytic limit
    zero is returned.
    """
    q = state.q
    if abs(q) >= _QMAX:
        return 0.0
    L = log_ell_grad(q, state.Mm, state.gamma)[0]
    if L > 1e-9:
        raise DomainError(f"landscape factor exponent {L} is positive; infeasible state")
    return float(np.exp(min(L, 0.0)))


def effective_potential(spec: ProblemSpec, state: MacroState, Gamma: float) -> float:
    return energy_of_box(spec, state) - Gamma * ell(state)


# ---------------------------------------------------------------------------
# clause-count landscape: q follows its entropy maximum


def q_star(M: np.ndarray, gamma: float) -> float:
    """Most likely total spin for given clause-type densities."""
    K = len(M) - 1
    D = (K - 2.0 * np.arange(K + 1)) @ M

    def ds(v):
        q = np.tanh(v)
        return -v + (D - K * gamma * q) * np.cosh(v) ** 2

    lo, hi = -1.0, 1.0
    while ds(lo) < 0:
        lo *= 2
    while ds(hi) > 0:
        hi *= 2
    return float(np.tanh(brentq(ds, lo, hi, xtol=1e-15, rtol=1e-15)))


def _q_star_grad(q: float, M: np.ndarray, gamma: float) -> np.ndarray:
    K = len(M) - 1
    r = 1.0 - q * q
    D = (K - 2.0 * np.arange(K + 1)) @ M
    s_qq = -1.0 / r + (-K * gamma * r + 2.0 * q * (D - K * gamma * q)) / r**2
    s_qM = (K - 2.0 * np.arange(K + 1)) / r
    return -s_qM / s_qq


def log_ell_cc_grad(M: np.ndarray, gamma: float):
    q = q_star(M, gamma)
    L, dq, dM = log_ell_grad(q, M, gamma)
    return L, dM + dq * _q_star_grad(q, M, gamma), q


# ---------------------------------------------------------------------------
# restricted landscapes


def restricted_ell(spec: ProblemSpec, gamma: float, lset, coords) -> float:
    """Landscape factor with the unretained coordinates at their entropy maximum.

    ``coords`` is a MacroState for the full set, a density vector for
    clause counts, or an energy density for the energy-only set.
    """
    lset = LandscapeSet.parse(lset)
    if lset is LandscapeSet.FULL:
        return ell(coords)
    if lset is LandscapeSet.CLAUSE_COUNTS:
        M = np.asarray(coords, dtype=float)
        if np.any(M < 0) or abs(M.sum() - gamma) > 1e-10:
            raise DomainError("clause densities must be nonnegative and sum to gamma")
        return ell(MacroState(q_star(M, gamma), M, gamma))
    state = energy_only_state(spec, gamma, float(coords))
    return ell(state)


def energy_only_state(spec: ProblemSpec, gamma: float, eps: float) -> MacroState:
    state, s = max_entropy_state(spec, gamma, energy=eps)
    if state is None:
        raise DomainError(f"energy {eps} infeasible at gamma={gamma}")
    return state


# ---------------------------------------------------------------------------
# coordinates for optimization


class _Coords:
    """Unconstrained coordinates: ``q = tanh v`` and softmax logits for ``M``."""

    def __init__(self, spec: ProblemSpec, gamma: float, lset: LandscapeSet):
        self.spec, self.gamma, self.lset = spec, gamma, lset
        self.zeta = spec.zeta_array
        self.with_q = lset is LandscapeSet.FULL

    def unpack(self, x):
        w = x[1:] if self.with_q else x
        e = np.exp(w - w.max())
        M = self.gamma * e / e.sum()
        q = float(np.tanh(x[0])) if self.with_q else None
        return q, M

    def pack(self, state: MacroState, floor: float = 1e-30):
        w = np.log(np.maximum(state.Mm / self.gamma, floor))
        if self.with_q:
            return np.concatenate([[np.arctanh(np.clip(state.q, -_QMAX, _QMAX))], w])
        return w

    def state(self, x) -> MacroState:
        q, M = self.unpack(x)
        if q is None:
            q = q_star(M, self.gamma)
        return MacroState(q, M, self.gamma)

    def f_grad(self, x, Gamma):
        q, M = self.unpack(x)
        if self.with_q and abs(q) >= _QMAX:
            # landscape factor vanishes on the spin boundary
            gM = -self.zeta
            gw = M * (gM - (M @ gM) / self.gamma)
            return self.gamma - self.zeta @ M, np.concatenate([[0.0], gw])
        if self.with_q:
            L, dq, dM = log_ell_grad(q, M, self.gamma)
        else:
            L, dM, q = log_ell_cc_grad(M, self.gamma)
        el = np.exp(L)
        val = self.gamma - self.zeta @ M - Gamma * el
        gM = -self.zeta - Gamma * el * dM
        gw = M * (gM - (M @ gM) / self.gamma)
        if self.with_q:
            return val, np.concatenate([[-Gamma * el * dq * (1.0 - q * q)], gw])
        return val, gw


def _local_min(co: _Coords, x0, Gamma):
    res = minimize(co.f_grad, x0, args=(Gamma,), jac=True, method="L-BFGS-B",
                   options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 5000})
    return res


def _point(spec, state, Gamma, definite=True) -> PotentialPoint:
    el = ell(state)
    return PotentialPoint(state, Gamma, energy_of_box(spec, state) - Gamma * el, el,
                          True, definite)


def _hessian_definite(co: _Coords, x, Gamma, h=1e-5) -> bool:
    # directional curvature along the reduced coordinates; softmax has one
    # flat direction which is removed by projecting out the all-ones vector
    n = len(x)
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        H[:, i] = (co.f_grad(x + e, Gamma)[1] - co.f_grad(x - e, Gamma)[1]) / (2 * h)
    H = 0.5 * (H + H.T)
    off = 1 if co.with_q else 0
    P = np.eye(n)
    u = np.zeros(n)
    u[off:] = 1.0
    u /= np.linalg.norm(u)
    P -= np.outer(u, u)
    ev = np.linalg.eigvalsh(P @ H @ P)
    scale = max(1.0, np.abs(ev).max())
    nz = ev[np.abs(ev) > 1e-8 * scale]
    return bool(np.all(nz > 0))


def _starts(co: _Coords, seed: int, n_random: int = 14):
    spec, gamma = co.spec, co.gamma
    uni = MacroState(0.0, spec.uniform_M(gamma), gamma)
    starts = [co.pack(uni)]
    floor, _ = max_entropy_state(spec, gamma, energy=0.0)
    if floor is not None:
        # keep every logit finite so no softmax direction starts frozen
        starts.append(co.pack(floor, 1e-4))
    rng = np.random.default_rng([seed, 0x5eed])
    K = spec.K
    for i in range(n_random):
        # stratify the spin coordinate, randomize the logits
        w = rng.normal(0.0, 2.0, K + 1) + np.log(spec.binom)
        if co.with_q:
            v = np.arctanh(-0.95 + 1.9 * (i + rng.random()) / n_random)
            starts.append(np.concatenate([[v], w]))
        else:
            starts.append(w)
    return starts


def find_minima(spec: ProblemSpec, gamma: float, Gamma: float, lset="full",
                seed: int = 0, dedup: float = 1e-4) -> list[PotentialPoint]:
    """Distinct local minima of ``f = eps - Gamma ell``, sorted by value.

    Multi-start quasi-Newton descent from the uniform state, the
    zero-energy entropy maximum and 14 stratified random points. Descents
    that end on the spin boundary, where the landscape factor underflows to
    a flat plateau, are dropped unless nothing else is found.
    """
    if Gamma < 0:
        raise DomainError("Gamma must be nonnegative")
    lset = LandscapeSet.parse(lset)
    if lset is LandscapeSet.ENERGY_ONLY:
        return _energy_only_minima(spec, gamma, Gamma, dedup)
    co = _Coords(spec, gamma, lset)
    found: list[tuple[np.ndarray, PotentialPoint]] = []
    boundary = []
    any_ok = False
    for x0 in _starts(co, seed):
        res = _local_min(co, x0, Gamma)
        if not np.isfinite(res.fun):
            continue
        any_ok = True
        st = co.state(res.x)
        if abs(st.q) > 1.0 - 1e-6 or (Gamma > 0 and ell(st) < 1e-10):
            # plateau where the landscape factor has underflowed
            boundary.append(res.x)
            continue
        key = np.concatenate([[st.q], st.Mm / gamma])
        if any(np.max(np.abs(key - k)) < dedup for k, _ in found):
            continue
        pt = _point(spec, st, Gamma, _hessian_definite(co, res.x, Gamma))
        found.append((key, pt))
    if not any_ok:
        raise ConvergenceError("no start converged", {"gamma": gamma, "Gamma": Gamma})
    if not found:
        st = co.state(boundary[0])
        found.append((None, _point(spec, st, Gamma, False)))
    pts = [p for _, p in found]
    pts.sort(key=lambda p: (p.f, p.state.q, tuple(p.state.Mm)))
    return pts


def _energy_only_minima(spec, gamma, Gamma, dedup):
    eu = gamma - spec.zeta_array @ spec.uniform_M(gamma)
    grid = np.linspace(0.0, gamma, 401)
    grid = np.union1d(grid, [eu])

    def f(e):
        return e - Gamma * restricted_ell(spec, gamma, LandscapeSet.ENERGY_ONLY, e)

    vals = np.array([f(e) for e in grid])
    out = []
    for i in range(len(grid)):
        left = vals[i - 1] if i > 0 else np.inf
        right = vals[i + 1] if i < len(grid) - 1 else np.inf
        if vals[i] <= left and vals[i] <= right:
            lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
            if hi > lo:
                r = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                    options={"xatol": 1e-12})
                e = r.x if r.fun <= vals[i] else grid[i]
            else:
                e = grid[i]
            if any(abs(e - p.energy) < dedup * gamma for p in out):
                continue
            st = energy_only_state(spec, gamma, e)
            el = ell(st)
            out.append(PotentialPoint(st, Gamma, e - Gamma * el, el, True, True))
    out.sort(key=lambda p: p.f)
    return out
