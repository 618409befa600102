"""Global bifurcation of the effective potential and the dynamic threshold.

The global minimum of ``f = eps - Gamma ell`` over all boxes equals
``min_eps [eps - Gamma ell*(eps)]`` where ``ell*`` is the largest landscape
factor on the energy slice. Two degenerate global minima exist at some
``Gamma`` exactly when ``ell*`` fails to be concave, so the bifurcation is
located on the concave hull of ``ell*`` and then polished by local descent
on ``f`` itself.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .entropy import static_threshold
from .errors import ConvergenceError
from .potential import (LandscapeSet, PotentialPoint, _Coords, _local_min, _point,
                        ell, energy_only_state, log_ell_cc_grad, log_ell_grad)
from .problem import MacroState, ProblemSpec, make_problem

GAMMA_MAX = 50.0
GAMMA_MIN = 1e-3
N_GAMMA = 200
SEPARATION = 1e-3


@dataclass
class Bifurcation:
    Gamma_star: float
    tau_star: float
    low: PotentialPoint
    high: PotentialPoint
    branch_low: list = field(default_factory=list)
    branch_high: list = field(default_factory=list)

    @property
    def separation(self) -> float:
        return _distance(self.low.state, self.high.state)


@dataclass
class ThresholdReport:
    spec: ProblemSpec
    landscape: LandscapeSet
    gamma_d: float | None
    gamma_c: float
    Gamma_star: float | None = None
    tau_star: float | None = None
    bifurcation: Bifurcation | None = None
    error: str | None = None

    def row(self) -> dict:
        return {
            "problem": self.spec.kind.value,
            "K": self.spec.K,
            "landscape_set": self.landscape.value,
            "gamma_d": "" if self.gamma_d is None else f"{self.gamma_d:.6f}",
            "gamma_c": f"{self.gamma_c:.6f}" if self.gamma_c is not None else "",
            "Gamma_star": "" if self.Gamma_star is None else f"{self.Gamma_star:.6f}",
            "tau_star": "" if self.tau_star is None else f"{self.tau_star:.6f}",
        }


CSV_COLUMNS = ["problem", "K", "landscape_set", "gamma_d", "gamma_c", "Gamma_star", "tau_star"]


def _distance(a: MacroState, b: MacroState) -> float:
    return float(max(abs(a.q - b.q), np.max(np.abs(a.Mm - b.Mm)) / a.gamma))


def uniform_energy(spec: ProblemSpec, gamma: float) -> float:
    return float(gamma - spec.zeta_array @ spec.uniform_M(gamma))


# ---------------------------------------------------------------------------
# energy-slice envelope


class _Slice:
    """Coordinates on a fixed-energy slice.

    The violated and satisfied clause types carry separate softmax logits
    whose totals are ``eps`` and ``gamma - eps``.
    """

    def __init__(self, spec: ProblemSpec, gamma: float, lset: LandscapeSet):
        self.spec, self.gamma, self.lset = spec, gamma, lset
        z = spec.zeta_array
        self.A = np.where(z == 0)[0]
        self.B = np.where(z > 0)[0]
        self.with_q = lset is LandscapeSet.FULL
        self.off = 1 if self.with_q else 0

    def unpack(self, y, eps):
        a = y[self.off:self.off + len(self.A)]
        b = y[self.off + len(self.A):]
        ea = np.exp(a - a.max())
        eb = np.exp(b - b.max())
        M = np.zeros(self.spec.K + 1)
        M[self.A] = eps * ea / ea.sum()
        M[self.B] = (self.gamma - eps) * eb / eb.sum()
        q = float(np.tanh(y[0])) if self.with_q else None
        return q, M

    def neg_log_ell(self, y, eps):
        q, M = self.unpack(y, eps)
        if self.with_q:
            L, dq, dM = log_ell_grad(q, M, self.gamma)
        else:
            L, dM, q = log_ell_cc_grad(M, self.gamma)
        parts = []
        if self.with_q:
            parts.append([dq * (1.0 - q * q)])
        for idx in (self.A, self.B):
            Mi, di = M[idx], dM[idx]
            s = Mi.sum()
            parts.append(Mi * (di - (Mi @ di) / s) if s > 0 else np.zeros(len(idx)))
        return -L, -np.concatenate(parts)

    def pack(self, state: MacroState):
        w = np.log(np.maximum(state.Mm, 1e-300))
        y = np.concatenate([w[self.A], w[self.B]])
        if self.with_q:
            return np.concatenate([[np.arctanh(np.clip(state.q, -0.999999, 0.999999))], y])
        return y

    def start(self):
        w = np.log(self.spec.binom)
        y = np.concatenate([w[self.A], w[self.B]])
        return np.concatenate([[0.0], y]) if self.with_q else y

    def state(self, y, eps) -> MacroState:
        q, M = self.unpack(y, eps)
        if q is None:
            from .potential import q_star
            q = q_star(M, self.gamma)
        return MacroState(q, M, self.gamma)


@dataclass
class Envelope:
    eps: np.ndarray
    ell: np.ndarray
    states: list

    def second_difference(self) -> np.ndarray:
        h = self.eps[1] - self.eps[0]
        return np.diff(self.ell, 2) / h**2

    def indicator(self, window: tuple | None = None) -> float:
        """Largest second difference; positive means a non-concave envelope.

        ``window`` restricts the search to ``eps / eps_max`` in ``[lo, hi]``.
        """
        d = self.second_difference()
        if window is not None:
            frac = self.eps[1:-1] / self.eps[-1]
            d = d[(frac >= window[0]) & (frac <= window[1])]
            if d.size == 0:
                return -math.inf
        return float(d.max())


def envelope(spec: ProblemSpec, gamma: float, lset="full", n: int = 300,
             eps_min: float | None = None) -> Envelope:
    """Largest landscape factor on each energy slice below the uniform energy.

    Slices are visited from the uniform energy downward, each maximization
    warm-started from the previous one.
    """
    lset = LandscapeSet.parse(lset)
    eu = uniform_energy(spec, gamma)
    lo = 1e-6 * gamma if eps_min is None else eps_min
    grid = np.linspace(lo, eu, n)
    vals = np.empty(n)
    states: list = [None] * n
    if lset is LandscapeSet.ENERGY_ONLY:
        for i, e in enumerate(grid):
            st = energy_only_state(spec, gamma, e)
            states[i] = st
            vals[i] = ell(st)
        return Envelope(grid, vals, states)
    sl = _Slice(spec, gamma, lset)
    y = sl.start()
    for i in range(n - 1, -1, -1):
        e = grid[i]
        res = minimize(sl.neg_log_ell, y, args=(e,), jac=True, method="L-BFGS-B",
                       options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 5000})
        y = res.x
        vals[i] = math.exp(-res.fun)
        states[i] = sl.state(y, e)
    return Envelope(grid, vals, states)


def _upper_hull(x, y):
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (x[i1] - x[i0]) * (y[i] - y[i0]) - (y[i1] - y[i0]) * (x[i] - x[i0])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def bridging_segments(env: Envelope, tol: float = 1e-10) -> list:
    """Hull segments skipping at least one grid point, as ``(a, b, gap)``."""
    hull = _upper_hull(env.eps, env.ell)
    out = []
    for a, b in zip(hull[:-1], hull[1:]):
        if b - a < 2:
            continue
        t = (env.eps[a + 1:b] - env.eps[a]) / (env.eps[b] - env.eps[a])
        chord = env.ell[a] + t * (env.ell[b] - env.ell[a])
        gap = float(np.max(chord - env.ell[a + 1:b]))
        if gap > tol:
            out.append((a, b, gap))
    return out


def bridging_segment(env: Envelope, tol: float = 1e-10):
    """Widest-gap hull segment skipping at least one grid point, or None."""
    segs = bridging_segments(env, tol)
    return max(segs, key=lambda s: s[2]) if segs else None


def dominant_window(env: Envelope) -> tuple | None:
    """Energy window (as ``eps / eps_max``) around the widest bridging segment.

    None when there is at most one segment. Otherwise the window extends
    halfway to the neighbouring segments, so a weaker non-concavity
    elsewhere on the slice axis is not mistaken for the main bifurcation.
    """
    segs = bridging_segments(env)
    if len(segs) < 2:
        return None
    a, b, _ = max(segs, key=lambda s: s[2])
    frac = env.eps / env.eps[-1]
    lo, hi = 0.0, 1.0
    for a2, b2, _g in segs:
        if b2 <= a:
            lo = max(lo, 0.5 * (frac[b2] + frac[a]))
        elif a2 >= b:
            hi = min(hi, 0.5 * (frac[b] + frac[a2]))
    return lo, hi


def envelope_threshold(make_env, gamma_c: float, tol: float):
    """Dynamic threshold from a family of envelopes ``make_env(gamma)``.

    The bifurcation present at ``gamma_c`` is followed downward; when the
    envelope there has several bridging segments only the window of the
    widest one is watched.
    """
    window = dominant_window(make_env(gamma_c))
    return threshold_from_indicator(lambda g: make_env(g).indicator(window), gamma_c, tol)


# ---------------------------------------------------------------------------
# bifurcation


def _polish(spec, gamma, lset, state, Gamma):
    """Local minimum of f started from ``state``."""
    if lset is LandscapeSet.ENERGY_ONLY:
        e0 = state.gamma - spec.zeta_array @ state.Mm
        width = 0.05 * gamma

        def f(e):
            return e - Gamma * ell(energy_only_state(spec, gamma, e))

        r = minimize_scalar(f, bounds=(max(e0 - width, 0.0), min(e0 + width, gamma)),
                            method="bounded", options={"xatol": 1e-12})
        e = r.x if r.fun <= f(e0) else e0
        st = energy_only_state(spec, gamma, e)
        return _point(spec, st, Gamma), None
    co = _Coords(spec, gamma, lset)
    res = _local_min(co, co.pack(state), Gamma)
    return _point(spec, co.state(res.x), Gamma), res.x


def _global_on_envelope(env: Envelope, Gamma: float) -> int:
    return int(np.argmin(env.eps - Gamma * env.ell))


def find_bifurcation(spec: ProblemSpec, gamma: float, lset="full", n_eps: int = 300,
                     branches: bool = True, env: Envelope | None = None
                     ) -> Bifurcation | None:
    """Locate ``Gamma*`` where two distinct minima of ``f`` are degenerate.

    Returns None when the slice envelope is concave or the two candidate
    minima merge under polishing.
    """
    lset = LandscapeSet.parse(lset)
    env = env or envelope(spec, gamma, lset, n_eps)
    seg = bridging_segment(env)
    if seg is None:
        return None
    a, b, _ = seg
    sa, sb = env.states[a], env.states[b]
    ea = gamma - spec.zeta_array @ sa.Mm
    eb = gamma - spec.zeta_array @ sb.Mm
    G = (eb - ea) / (env.ell[b] - env.ell[a])
    pa = pb = None
    for _ in range(60):
        pa, _x = _polish(spec, gamma, lset, sa, G)
        pb, _x = _polish(spec, gamma, lset, sb, G)
        if pb.ell == pa.ell:
            break
        G_new = (pb.energy - pa.energy) / (pb.ell - pa.ell)
        sa, sb = pa.state, pb.state
        if not np.isfinite(G_new) or G_new <= 0:
            break
        done = abs(G_new - G) < 1e-11 * max(1.0, G)
        G = G_new
        if done:
            break
    pa, _x = _polish(spec, gamma, lset, sa, G)
    pb, _x = _polish(spec, gamma, lset, sb, G)
    if _distance(pa.state, pb.state) <= SEPARATION:
        return None
    bif = Bifurcation(G, 1.0 / (1.0 + G), pa, pb)
    if branches:
        bif.branch_low, bif.branch_high = track_branches(spec, gamma, lset, pa, pb, G)
    return bif


def gamma_grid(extra: float | None = None) -> np.ndarray:
    g = np.geomspace(GAMMA_MAX, GAMMA_MIN, N_GAMMA)
    if extra is not None:
        g = np.sort(np.append(g, extra))[::-1]
    return g


def track_branches(spec, gamma, lset, low: PotentialPoint, high: PotentialPoint,
                   Gamma_star: float):
    """Follow both minima away from ``Gamma*`` by warm-started descent."""
    grid = gamma_grid(Gamma_star)
    up = grid[grid >= Gamma_star][::-1]
    down = grid[grid <= Gamma_star]
    out = []
    for start, direction in ((low, down), (high, up)):
        st = start.state
        pts = []
        for G in direction:
            p, _x = _polish(spec, gamma, lset, st, G)
            st = p.state
            pts.append(p)
        out.append(pts)
    # the low-energy minimum lives at small Gamma and vice versa; also follow
    # each one a little into the other side to expose the coexistence window
    for k, (start, direction) in enumerate(((low, up), (high, down))):
        st = start.state
        for G in direction[1:20]:
            p, _x = _polish(spec, gamma, lset, st, G)
            st = p.state
            out[k].append(p)
        out[k].sort(key=lambda p: -p.Gamma)
    return out[0], out[1]


# ---------------------------------------------------------------------------
# thresholds


def dynamic_threshold(spec: ProblemSpec, lset="full", gamma_c: float | None = None,
                      tol: float = 1e-4, n_eps: int = 300) -> float | None:
    """Smallest clause density with a global bifurcation, searched below ``gamma_c``.

    The convexity indicator of the slice envelope changes sign at the
    threshold; it is bracketed downward from ``gamma_c`` and refined with
    Brent's method.
    """
    lset = LandscapeSet.parse(lset)
    if gamma_c is None:
        gamma_c = static_threshold(spec)
    return envelope_threshold(lambda g: envelope(spec, g, lset, n_eps), gamma_c, tol)


def threshold_from_indicator(ind, gamma_c: float, tol: float, floor: float = 0.01):
    hi = gamma_c
    if ind(hi) <= 0:
        return None
    step = 0.05 * gamma_c
    lo = hi - step
    while ind(lo) > 0:
        hi = lo
        lo -= step
        if lo < floor:
            raise ConvergenceError("bifurcation persists down to the bracket floor",
                                   {"floor": floor})
    return float(brentq(ind, lo, hi, xtol=tol))


def threshold_report(spec: ProblemSpec, lset="full", n_eps: int = 300,
                     branches: bool = False) -> ThresholdReport:
    lset = LandscapeSet.parse(lset)
    gc = static_threshold(spec)
    gd = dynamic_threshold(spec, lset, gc, n_eps=n_eps)
    rep = ThresholdReport(spec, lset, gd, gc)
    if gd is not None:
        # the bifurcation field just above the threshold
        for g in (gd * 1.01, gd * 1.03, gc):
            bif = find_bifurcation(spec, min(g, gc), lset, n_eps, branches=branches)
            if bif is not None:
                rep.Gamma_star, rep.tau_star, rep.bifurcation = bif.Gamma_star, bif.tau_star, bif
                break
    return rep


def scan_table(kind, K_range, lset="full", n_eps: int = 300) -> list[ThresholdReport]:
    """One report per clause width; row failures are recorded, not raised."""
    out = []
    for K in K_range:
        spec = make_problem(kind, K)
        try:
            out.append(threshold_report(spec, lset, n_eps))
        except Exception as exc:  # noqa: BLE001 - recorded per row
            out.append(ThresholdReport(spec, LandscapeSet.parse(lset), None, None,
                                       error=f"{type(exc).__name__}: {exc}"))
    return out


def to_csv(reports, extra: dict | None = None) -> str:
    buf = io.StringIO()
    cols = CSV_COLUMNS + list(extra or {})
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = r.row()
        row.update(extra or {})
        w.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# trajectories over the interpolation time


@dataclass
class Trajectory:
    tau: np.ndarray
    Gamma: np.ndarray
    g: np.ndarray
    q: np.ndarray
    Mm: np.ndarray

    def jump_ratio(self, series: np.ndarray) -> tuple[float, int]:
        """Largest step over the median step, and its index."""
        d = np.abs(np.diff(series, axis=0))
        if d.ndim > 1:
            d = d.max(axis=1)
        i = int(np.argmax(d))
        rest = np.delete(d, i)
        med = float(np.median(rest)) if len(rest) else 0.0
        return (float(d[i] / med) if med > 0 else math.inf), i


def minimizer_trajectory(spec: ProblemSpec, gamma: float, lset="full",
                         taus=None, n_eps: int = 300) -> Trajectory:
    """Global minimizer of ``f`` along ``tau`` with ``Gamma = (1 - tau)/tau``."""
    lset = LandscapeSet.parse(lset)
    taus = np.linspace(0.02, 0.98, 241) if taus is None else np.asarray(taus, float)
    env = envelope(spec, gamma, lset, n_eps)
    G = (1.0 - taus) / taus
    g = np.empty(len(taus))
    q = np.empty(len(taus))
    Ms = np.empty((len(taus), spec.K + 1))
    for i, Gi in enumerate(G):
        j = _global_on_envelope(env, Gi)
        p, _x = _polish(spec, gamma, lset, env.states[j], Gi)
        g[i], q[i], Ms[i] = p.f, p.state.q, p.state.Mm
    return Trajectory(taus, G, g, q, Ms)


@dataclass
class Jump:
    tau: float
    width: float
    left: PotentialPoint
    right: PotentialPoint

    @property
    def dM(self) -> np.ndarray:
        return np.abs(self.right.state.Mm - self.left.state.Mm)

    @property
    def d_ell(self) -> float:
        return abs(self.right.ell - self.left.ell)

    @property
    def dg_dtau(self) -> float:
        """Jump of ``dg/dtau``; ``dg/dGamma = -ell`` at the minimizer."""
        return self.d_ell / self.tau**2


def locate_jump(spec: ProblemSpec, gamma: float, tau_a: float, tau_b: float, lset="full",
                n_eps: int = 300, width: float = 1e-10, env: Envelope | None = None) -> Jump:
    """Bisect ``[tau_a, tau_b]`` for the largest change of the global minimizer.

    A discontinuous trajectory keeps a finite jump between the two bracket
    ends however narrow the bracket gets; a continuous one closes up.
    """
    lset = LandscapeSet.parse(lset)
    env = env or envelope(spec, gamma, lset, n_eps)

    def at(tau):
        G = (1.0 - tau) / tau
        p, _x = _polish(spec, gamma, lset, env.states[_global_on_envelope(env, G)], G)
        return p

    a, b = at(tau_a), at(tau_b)
    lo, hi = tau_a, tau_b
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        m = at(mid)
        if _distance(m.state, a.state) <= _distance(m.state, b.state):
            lo, a = mid, m
        else:
            hi, b = mid, m
    return Jump(0.5 * (lo + hi), hi - lo, a, b)
