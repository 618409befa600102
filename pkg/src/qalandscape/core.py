"""Core reduction: peeling, analytic core statistics, improved entropy and
landscape factor on the core, and the core thresholds.

Densities on the core are per core variable (``N'``) unless a name says
``_frac``, which means per original variable (``N``).
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.special import comb, xlogy

from . import _kernels
from .errors import ConvergenceError, DomainError, MalformedInstanceError
from .potential import LandscapeSet
from .problem import Instance, Kind, ProblemSpec
from .thresholds import ThresholdReport, _upper_hull, threshold_from_indicator


# ---------------------------------------------------------------------------
# generating functions of the allowed core degree patterns


class GeneratingFunction:
    """Exponential series over allowed degree patterns, one argument per clause length."""

    lengths: tuple

    def val(self, mu):
        raise NotImplementedError

    def grad(self, mu):
        raise NotImplementedError

    def hess(self, mu):
        raise NotImplementedError


class NAEGenerating(GeneratingFunction):
    """Degree at least two: ``G = e^mu - 1 - mu``."""

    def __init__(self, K):
        self.lengths = (K,)

    def val(self, mu):
        return np.expm1(mu[0]) - mu[0]

    def grad(self, mu):
        return np.array([np.expm1(mu[0])])

    def hess(self, mu):
        return np.array([[np.exp(mu[0])]])


class OneInKGenerating(GeneratingFunction):
    """Excludes pure short-clause patterns and a lone long clause.

    ``G = exp(sum mu) - exp(mu_2) - sum_{k>=3} mu_k`` over lengths 2..K.
    """

    def __init__(self, K):
        self.lengths = tuple(range(2, K + 1))

    def val(self, mu):
        return np.exp(mu.sum()) - np.exp(mu[0]) - mu[1:].sum()

    def grad(self, mu):
        d = np.full(len(mu), np.exp(mu.sum()))
        d[0] -= np.exp(mu[0])
        d[1:] -= 1.0
        return d

    def hess(self, mu):
        H = np.full((len(mu), len(mu)), np.exp(mu.sum()))
        H[0, 0] -= np.exp(mu[0])
        return H


class ExpGenerating(GeneratingFunction):
    """No degree restriction, ``G = exp(sum mu)``."""

    def __init__(self, lengths):
        self.lengths = tuple(lengths)

    def val(self, mu):
        return np.exp(mu.sum())

    def grad(self, mu):
        return np.full(len(mu), np.exp(mu.sum()))

    def hess(self, mu):
        return np.full((len(mu), len(mu)), np.exp(mu.sum()))


def generating_function(spec: ProblemSpec) -> GeneratingFunction:
    if spec.kind is Kind.KNAE:
        return NAEGenerating(spec.K)
    return OneInKGenerating(spec.K)


def core_zeta(spec: ProblemSpec) -> list:
    """Satisfaction indicators on the core, one array per clause length.

    A shortened 1-in-K clause only requires at most one 1-bit.
    """
    out = []
    for k in generating_function(spec).lengths:
        m = np.arange(k + 1)
        if spec.kind is Kind.KNAE:
            out.append(((m != 0) & (m != k)).astype(float))
        elif k == spec.K:
            out.append((m == 1).astype(float))
        else:
            out.append((m <= 1).astype(float))
    return out


# ---------------------------------------------------------------------------
# analytic core statistics


@dataclass
class CoreStats:
    q: float
    q_prime: float | None
    n_frac: float
    m_frac: np.ndarray
    mu: np.ndarray
    lengths: tuple = ()

    @property
    def empty(self) -> bool:
        return self.n_frac <= 0.0

    def core_densities(self) -> np.ndarray:
        """Clause densities per core variable."""
        return self.m_frac / self.n_frac

    def as_dict(self) -> dict:
        return {"q": self.q, "q_prime": self.q_prime, "n_frac": self.n_frac,
                "m_frac": {int(k): float(v) for k, v in zip(self.lengths, self.m_frac)},
                "mu": {int(k): float(v) for k, v in zip(self.lengths, self.mu)}}


def _largest_root(h, n: int = 20001) -> float:
    qs = np.linspace(1.0, 0.0, n)[1:-1]
    hv = np.array([h(x) for x in qs])
    idx = np.nonzero(hv > 0)[0]
    if len(idx) == 0:
        return 0.0
    i = idx[0]
    if i == 0:
        return float(brentq(h, qs[0], 1.0, xtol=1e-15, rtol=1e-15))
    return float(brentq(h, qs[i], qs[i - 1], xtol=1e-15, rtol=1e-15))


def core_stats_analytic(spec: ProblemSpec, gamma: float) -> CoreStats:
    """Large-N core size and clause densities from the peeling fixed point.

    The largest root of the self-consistency equation is selected by a
    descending scan from ``q = 1`` followed by Brent refinement.
    """
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    K = spec.K
    gf = generating_function(spec)
    if spec.kind is Kind.KNAE:
        q = _largest_root(lambda x: 1.0 - x - np.exp(-K * gamma * x ** (K - 1)))
        mu = K * gamma * q ** (K - 1)
        n = float(-np.expm1(-mu) - mu * np.exp(-mu)) if q > 0 else 0.0
        m = gamma * q**K if q > 0 else 0.0
        return CoreStats(q, None, n, np.array([m]), np.array([mu]), gf.lengths)

    def q_prime(x):
        phi = 1.0 - (1.0 - x) ** (K - 1) - (K - 1) * x * (1.0 - x) ** (K - 2)
        return -np.expm1(-K * gamma * phi)

    def h(x):
        p = q_prime(x)
        return 1.0 - x - (1.0 - p) * np.exp(-K * (K - 1) * gamma * p * (1.0 - x) ** (K - 2))

    q = _largest_root(h)
    L = len(gf.lengths)
    if q <= 0:
        return CoreStats(0.0, 0.0, 0.0, np.zeros(L), np.zeros(L), gf.lengths)
    p = float(q_prime(q))
    mu = np.zeros(L)
    mu[0] = K * (K - 1) * gamma * p * (1.0 - q) ** (K - 2)
    for i, k in enumerate(gf.lengths[1:], start=1):
        mu[i] = k * comb(K, k) * gamma * q ** (k - 1) * (1.0 - q) ** (K - k)
    S = mu.sum()
    n = float(np.exp(-S) * gf.val(mu))
    ks = np.array(gf.lengths, dtype=float)
    m = mu * np.exp(-S) * gf.grad(mu) / ks
    return CoreStats(q, p, n, m, mu, gf.lengths)


# ---------------------------------------------------------------------------
# improved entropy


def _solve_log_partition(gf: GeneratingFunction, a: np.ndarray, two_sided: bool,
                         u0=None, tol: float = 1e-13, maxiter: int = 200):
    """Minimize ``-a.u + ln Z(u)`` by damped Newton.

    ``Z = G(e^u)`` or, two-sided, ``G(e^{u+}) + G(e^{u-})`` with ``a`` the
    concatenation ``(a+, a-)``. Returns ``(u, value, hessian, Z)``.
    """
    n = len(gf.lengths)
    blocks = 2 if two_sided else 1
    if np.any(a <= 0):
        raise DomainError("degree sums must be positive")
    u = np.log(a + 1e-3) if u0 is None else np.array(u0, dtype=float)

    def parts(u):
        Z = 0.0
        g = np.zeros(blocks * n)
        Hz = np.zeros((blocks * n, blocks * n))
        for b in range(blocks):
            mu = np.exp(u[b * n:(b + 1) * n])
            gd = gf.grad(mu)
            Z += gf.val(mu)
            sl = slice(b * n, (b + 1) * n)
            g[sl] = mu * gd
            Hz[sl, sl] = np.diag(mu * gd) + np.outer(mu, mu) * gf.hess(mu)
        return Z, g, Hz

    def F(u):
        with np.errstate(over="ignore", invalid="ignore"):
            Z = sum(gf.val(np.exp(u[b * n:(b + 1) * n])) for b in range(blocks))
        return -(a @ u) + np.log(Z) if Z > 0 and np.isfinite(Z) else np.inf

    fval = F(u)
    for _ in range(maxiter):
        Z, gz, Hz = parts(u)
        grad = -a + gz / Z
        H = Hz / Z - np.outer(gz, gz) / Z**2
        if np.max(np.abs(grad)) < tol:
            return u, fval, H, Z
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = grad
        if np.max(np.abs(step)) < 1e-7:
            # near the optimum the value decrease is below round-off
            u = u - step
            fval = F(u)
            continue
        t = 1.0
        while True:
            un = u - t * step
            fn = F(un)
            if fn <= fval + 1e-15 or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10:
            # damped gradient fallback
            un = u - 1e-2 * grad
            fn = F(un)
        u, fval = un, fn
    Z, gz, Hz = parts(u)
    grad = -a + gz / Z
    if np.max(np.abs(grad)) < 1e-9:
        return u, fval, Hz / Z - np.outer(gz, gz) / Z**2, Z
    raise ConvergenceError("inner Newton solve did not converge",
                           {"residual": float(np.max(np.abs(grad)))})


def _as_list(spec, Mkm):
    gf = generating_function(spec)
    if isinstance(Mkm, dict):
        Mkm = [Mkm[k] for k in gf.lengths]
    Mkm = [np.asarray(M, dtype=float) for M in Mkm]
    if len(Mkm) != len(gf.lengths) or any(len(M) != k + 1 for M, k in zip(Mkm, gf.lengths)):
        raise DomainError("clause-type densities do not match the clause lengths")
    if any(np.any(M < 0) for M in Mkm):
        raise DomainError("clause-type densities must be nonnegative")
    return gf, Mkm


def _degree_sums(gf, Mkm):
    ap = np.array([(k - np.arange(k + 1)) @ M for k, M in zip(gf.lengths, Mkm)])
    am = np.array([np.arange(k + 1) @ M for k, M in zip(gf.lengths, Mkm)])
    return ap, am


def core_entropy_parts(spec: ProblemSpec, m_core, Mkm=None, gf=None):
    """``(s0, s1)`` per core variable; ``s1`` is omitted when ``Mkm`` is None."""
    gf = gf or generating_function(spec)
    ks = np.array(gf.lengths, dtype=float)
    m_core = np.asarray(m_core, dtype=float)
    a = ks * m_core
    _u, v0, _H, _Z = _solve_log_partition(gf, a, False)
    s0 = float(v0 + xlogy(a, a).sum())
    if Mkm is None:
        return s0, None
    _gf, Mkm = _as_list(spec, Mkm)
    ap, am = _degree_sums(gf, Mkm)
    _u, v1, _H, _Z = _solve_log_partition(gf, np.concatenate([ap, am]), True)
    t = 0.0
    for k, M, m in zip(gf.lengths, Mkm, m_core):
        t += xlogy(m, m) - xlogy(M, M / comb(k, np.arange(k + 1))).sum()
    s1 = float(v1 + xlogy(ap, ap).sum() + xlogy(am, am).sum() + t)
    return s0, s1


def core_entropy(spec: ProblemSpec, m_core, Mkm) -> float:
    """Annealed entropy of a core box per core variable.

    Parameters
    ----------
    spec : ProblemSpec
    m_core : array_like
        Clause densities per core variable, one per clause length.
    Mkm : sequence of arrays
        Clause-type densities per core variable; entry ``k`` has length
        ``k + 1``. Must sum to ``m_core`` per length.
    """
    gf, Mkm = _as_list(spec, Mkm)
    m_core = np.asarray(m_core, dtype=float)
    if not np.allclose([M.sum() for M in Mkm], m_core, rtol=1e-10, atol=1e-14):
        raise DomainError("type densities must sum to the clause densities")
    s0, s1 = core_entropy_parts(spec, m_core, Mkm, gf)
    return s1 - s0


def _s1_grad(gf, Mkm, m_core):
    """``s1`` and its gradient in the clause-type densities."""
    ap, am = _degree_sums(gf, Mkm)
    u, v1, _H, _Z = _solve_log_partition(gf, np.concatenate([ap, am]), True)
    n = len(gf.lengths)
    grads = []
    t = 0.0
    for i, (k, M, m) in enumerate(zip(gf.lengths, Mkm, m_core)):
        j = np.arange(k + 1)
        C = comb(k, j)
        t += xlogy(m, m) - xlogy(M, M / C).sum()
        lp = np.log(ap[i]) + 1.0 - u[i]
        lm = np.log(am[i]) + 1.0 - u[n + i] if am[i] > 0 else 0.0
        grads.append((k - j) * lp + j * lm - np.log(np.maximum(M, 1e-300) / C) - 1.0)
    s1 = float(v1 + xlogy(ap, ap).sum() + xlogy(am, am).sum() + t)
    return s1, grads


def _softmax_blocks(x, masses, masks):
    """Split ``x`` into per-length logits over allowed entries."""
    out = []
    pos = 0
    for mass, mask in zip(masses, masks):
        n = int(mask.sum())
        w = x[pos:pos + n]
        pos += n
        e = np.exp(w - w.max())
        M = np.zeros(len(mask))
        M[mask] = mass * e / e.sum()
        out.append(M)
    return out


def _softmax_chain(Ms, grads, masks):
    parts = []
    for M, g, mask in zip(Ms, grads, masks):
        Mi, gi = M[mask], g[mask]
        s = Mi.sum()
        parts.append(Mi * (gi - (Mi @ gi) / s) if s > 0 else np.zeros(len(Mi)))
    return np.concatenate(parts)


def zero_energy_core_entropy(spec: ProblemSpec, gamma: float,
                             stats: CoreStats | None = None) -> float:
    """Largest core entropy over zero-energy core boxes.

    Returns ``ln 2`` when the core is empty (no constraint left).
    """
    stats = stats or core_stats_analytic(spec, gamma)
    if stats.empty:
        return float(np.log(2.0))
    gf = generating_function(spec)
    m_core = stats.core_densities()
    s0, _ = core_entropy_parts(spec, m_core, None, gf)
    masks = [z > 0 for z in core_zeta(spec)]
    x0 = np.concatenate([np.log(comb(k, np.arange(k + 1)))[mk]
                         for k, mk in zip(gf.lengths, masks)])

    def neg(x):
        Ms = _softmax_blocks(x, m_core, masks)
        s1, g = _s1_grad(gf, Ms, m_core)
        return -s1, -_softmax_chain(Ms, g, masks)

    res = minimize(neg, x0, jac=True, method="L-BFGS-B",
                   options={"ftol": 1e-15, "gtol": 1e-11, "maxiter": 2000})
    return float(-res.fun - s0)


# ---------------------------------------------------------------------------
# landscape factor on the core


def core_ell_grad(spec: ProblemSpec, Mkm, u0=None, gf: GeneratingFunction | None = None):
    """``ln ell'`` and its gradient in the clause-type densities.

    The multipliers solve the two-sided inner problem; their dependence on
    the densities enters through the inverse Hessian of ``ln Z``.
    Returns ``(L, grads, u)``.
    """
    if gf is None:
        gf, Mkm = _as_list(spec, Mkm)
    n = len(gf.lengths)
    ap, am = _degree_sums(gf, Mkm)
    u, _v, H, Z = _solve_log_partition(gf, np.concatenate([ap, am]), True, u0)
    mp, mm = np.exp(u[:n]), np.exp(u[n:])
    gp, gm = gf.grad(mp), gf.grad(mm)
    lnrho = np.log(Z) - 0.5 * np.log(gp) - 0.5 * np.log(gm)
    S = np.empty(n)
    dS = []
    for i, (k, M) in enumerate(zip(gf.lengths, Mkm)):
        j = np.arange(k)
        pr = np.sqrt((j + 1) * (k - j) * M[:-1] * M[1:])
        S[i] = pr.sum()
        d = np.zeros(k + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            d[:-1] += np.where(M[:-1] > 0, 0.5 * pr / M[:-1], 0.0)
            d[1:] += np.where(M[1:] > 0, 0.5 * pr / M[1:], 0.0)
        dS.append(d)
    rho = np.exp(lnrho)
    x = rho * S
    Gx = gf.val(x)
    if Gx <= 0:
        return -np.inf, [np.zeros(k + 1) for k in gf.lengths], u
    gx = gf.grad(x)
    L = float(np.log(2.0) + np.log(Gx) - np.log(Z))
    dLdS = gx * rho / Gx
    dlnZ = np.concatenate([mp * gp, mm * gm]) / Z
    c = gx * x / Gx
    du = c.sum() * dlnZ - dlnZ
    du[:n] -= 0.5 * c @ ((gf.hess(mp) * mp[None, :]) / gp[:, None])
    du[n:] -= 0.5 * c @ ((gf.hess(mm) * mm[None, :]) / gm[:, None])
    da = np.linalg.solve(H, du)
    grads = []
    for i, k in enumerate(gf.lengths):
        j = np.arange(k + 1)
        grads.append(dLdS[i] * dS[i] + da[i] * (k - j) + da[n + i] * j)
    return L, grads, u


def core_ell(spec: ProblemSpec, Mkm, mu=None, gf: GeneratingFunction | None = None) -> float:
    """Landscape factor on the core.

    ``mu`` may pass the two-sided multipliers ``(mu+, mu-)``; they are
    solved for when omitted.
    """
    if gf is None:
        gf, Mkm = _as_list(spec, Mkm)
    else:
        Mkm = [np.asarray(M, dtype=float) for M in Mkm]
    if mu is not None:
        n = len(gf.lengths)
        mu = np.asarray(mu, dtype=float)
        mp, mm = mu[:n], mu[n:]
        Z = gf.val(mp) + gf.val(mm)
        rho = Z / np.sqrt(gf.grad(mp) * gf.grad(mm))
        S = np.array([np.sqrt((np.arange(k) + 1) * (k - np.arange(k)) * M[:-1] * M[1:]).sum()
                      for k, M in zip(gf.lengths, Mkm)])
        return float(2.0 * gf.val(rho * S) / Z)
    L, _g, _u = core_ell_grad(spec, Mkm, gf=gf)
    return float(np.exp(L))


@dataclass
class CoreEnvelope:
    eps: np.ndarray
    ell: np.ndarray
    states: list = field(default_factory=list)

    def indicator(self) -> float:
        h = self.eps[1] - self.eps[0]
        return float((np.diff(self.ell, 2) / h**2).max())


def core_envelope(spec: ProblemSpec, gamma: float, n: int = 80,
                  stats: CoreStats | None = None) -> CoreEnvelope:
    """Largest core landscape factor on each core-energy slice.

    Slices span 1% to 100% of the uniform core energy and are visited from
    the top down with warm starts; the energy equality is handled by SLSQP.
    """
    stats = stats or core_stats_analytic(spec, gamma)
    if stats.empty:
        raise DomainError(f"no core at gamma={gamma}")
    gf = generating_function(spec)
    m_core = stats.core_densities()
    viol = [1.0 - z for z in core_zeta(spec)]
    sizes = [k + 1 for k in gf.lengths]
    masks = [np.ones(s, dtype=bool) for s in sizes]

    def unpack(x):
        return _softmax_blocks(x, m_core, masks)

    cache = {"u": None}

    def obj(x):
        Ms = unpack(x)
        L, g, u = core_ell_grad(spec, Ms, cache["u"], gf)
        cache["u"] = u
        return -L, -_softmax_chain(Ms, g, masks)

    def energy(x):
        return sum(v @ M for v, M in zip(viol, unpack(x)))

    def denergy(x):
        return _softmax_chain(unpack(x), viol, masks)

    x = np.concatenate([np.log(comb(k, np.arange(k + 1))) for k in gf.lengths])
    eu = energy(x)
    grid = np.linspace(0.01 * eu, eu, n)
    vals = np.empty(n)
    states = [None] * n
    for i in range(n - 1, -1, -1):
        e = grid[i]
        res = minimize(obj, x, jac=True, method="SLSQP",
                       constraints=[{"type": "eq", "fun": lambda y, e=e: energy(y) - e,
                                     "jac": denergy}],
                       options={"ftol": 1e-14, "maxiter": 1000})
        x = res.x
        vals[i] = np.exp(-res.fun)
        states[i] = unpack(x)
    return CoreEnvelope(grid, vals, states)


def core_static_threshold(spec: ProblemSpec, tol: float = 1e-4, step: float | None = None
                          ) -> float:
    """Clause density where the zero-energy core entropy vanishes."""
    step = step or (0.01 if spec.kind is Kind.ONE_IN_K else 0.05)
    prev_g, prev_s, have_core = 0.0, np.log(2.0), False
    g = step
    while g < 1e3:
        st = core_stats_analytic(spec, g)
        s = zero_energy_core_entropy(spec, g, st)
        if not st.empty:
            if have_core and s > prev_s + 1e-9:
                raise ConvergenceError("zero-energy core entropy not decreasing",
                                       {"gamma": g, "s": s, "previous": prev_s})
            have_core = True
        if s < 0:
            lo, hi = prev_g, g
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if zero_energy_core_entropy(spec, mid) > 0:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        prev_g, prev_s = g, s
        g = round(g + step, 12)
    raise ConvergenceError("no zero crossing of the core entropy", {"range": [step, 1e3]})


def core_dynamic_threshold(spec: ProblemSpec, gamma_c: float, tol: float = 2e-4,
                           n: int = 80) -> float | None:
    def ind(g):
        st = core_stats_analytic(spec, g)
        if st.empty:
            return -1.0
        return core_envelope(spec, g, n, st).indicator()

    return threshold_from_indicator(ind, gamma_c, tol)


def core_bifurcation_field(spec: ProblemSpec, gamma: float, n: int = 80):
    """``Gamma*`` from the bridging hull segment of the core envelope, or None."""
    env = core_envelope(spec, gamma, n)
    hull = _upper_hull(env.eps, env.ell)
    best = None
    for a, b in zip(hull[:-1], hull[1:]):
        if b - a >= 2:
            t = (env.eps[a + 1:b] - env.eps[a]) / (env.eps[b] - env.eps[a])
            gap = np.max(env.ell[a] + t * (env.ell[b] - env.ell[a]) - env.ell[a + 1:b])
            if gap > 1e-10 and (best is None or gap > best[2]):
                best = (a, b, gap)
    if best is None:
        return None
    a, b, _ = best
    return float((env.eps[b] - env.eps[a]) / (env.ell[b] - env.ell[a]))


def core_thresholds(spec: ProblemSpec, n: int = 80) -> ThresholdReport:
    """Improved static and dynamic thresholds, in the original clause density."""
    gc = core_static_threshold(spec)
    gd = core_dynamic_threshold(spec, gc, n=n)
    rep = ThresholdReport(spec, LandscapeSet.CLAUSE_COUNTS, gd, gc)
    rep.landscape_label = "core"
    if gd is not None:
        G = core_bifurcation_field(spec, min(gd * 1.01, gc), n)
        if G is not None:
            rep.Gamma_star, rep.tau_star = G, 1.0 / (1.0 + G)
    return rep


# ---------------------------------------------------------------------------
# instance-level peeling


@dataclass
class CoreInstance:
    N: int
    K: int
    seed: int
    N_core: int
    clauses_by_length: dict
    core_vars: np.ndarray

    @property
    def M_core(self) -> int:
        return sum(len(v) for v in self.clauses_by_length.values())

    def stats(self) -> dict:
        return {"n_frac": self.N_core / self.N,
                "m_frac": {int(k): len(v) / self.N for k, v in sorted(self.clauses_by_length.items())}}

    def canonical(self) -> tuple:
        """Order-free description used to compare cores."""
        return (self.N_core, tuple(np.flatnonzero(self.core_vars)),
                tuple((k, tuple(sorted(tuple(c) for c in v)))
                      for k, v in sorted(self.clauses_by_length.items())))

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"{self.N} {self.N_core} {self.M_core} {self.K} {self.seed}\n")
        for k in sorted(self.clauses_by_length):
            for row in self.clauses_by_length[k]:
                out.write(f"{k} " + " ".join(map(str, row)) + "\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "CoreInstance":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        try:
            N, Nc, Mc, K, seed = (int(x) for x in lines[0].split())
            by = {}
            for ln in lines[1:]:
                vals = [int(x) for x in ln.split()]
                if len(vals) != vals[0] + 1:
                    raise ValueError("length prefix mismatch")
                by.setdefault(vals[0], []).append(vals[1:])
        except (ValueError, IndexError) as exc:
            raise MalformedInstanceError(f"bad core text: {exc}") from exc
        if sum(len(v) for v in by.values()) != Mc:
            raise MalformedInstanceError("clause count does not match header")
        by = {k: np.array(v, dtype=np.int64).reshape(-1, k) for k, v in by.items()}
        mask = np.zeros(N, dtype=bool)
        for v in by.values():
            mask[v.ravel() - 1] = True
        return cls(N, K, seed, Nc, by, mask)


def trim(spec: ProblemSpec, inst: Instance) -> CoreInstance:
    """Peel an instance down to its core.

    K-NAE drops variables of degree at most one together with their clause.
    1-in-K removes a degree-one variable from its clause (shortening it),
    removes variables that only sit in 2-clauses together with those
    clauses, and drops degree-zero variables. Clause indices keep the
    original 1-based numbering.
    """
    inc = inst.incidence()
    c0 = inst.clauses0
    M, K = c0.shape
    if spec.kind is Kind.KNAE:
        c_alive, v_core = _kernels.peel_nae(inc)
        rows = inst.clauses[np.asarray(c_alive, dtype=bool)]
        by = {K: rows} if len(rows) else {}
        return CoreInstance(inst.N, K, inst.seed, int(np.count_nonzero(v_core)), by,
                            np.asarray(v_core, dtype=bool))
    if K < 3:
        raise DomainError("1-in-K peeling needs K >= 3")
    c_alive, p_alive, v_core = _kernels.peel_1ink(inc, K)
    c_alive = np.asarray(c_alive, dtype=bool)
    keys = inc.pv * max(M, 1) + inc.pc
    pos_key = c0 * max(M, 1) + np.arange(M)[:, None]
    pos_alive = np.asarray(p_alive, dtype=bool)[np.searchsorted(keys, pos_key)]
    by: dict = {}
    for c in np.flatnonzero(c_alive):
        row = inst.clauses[c][pos_alive[c]]
        by.setdefault(len(row), []).append(row)
    by = {k: np.array(v, dtype=np.int64).reshape(-1, k) for k, v in by.items()}
    return CoreInstance(inst.N, K, inst.seed, int(np.count_nonzero(v_core)), by,
                        np.asarray(v_core, dtype=bool))


def core_energy(spec: ProblemSpec, core: CoreInstance, z) -> int:
    """Violated core clauses for a full-length string."""
    z = np.asarray(z, dtype=np.int64)
    zeta = {k: zz for k, zz in zip(generating_function(spec).lengths, core_zeta(spec))}
    e = 0
    for k, rows in core.clauses_by_length.items():
        if len(rows) == 0:
            continue
        ones = z[rows - 1].sum(axis=1)
        e += int(np.count_nonzero(zeta[k][ones] == 0))
    return e
