"""Hot loops with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time. Set ``QALANDSCAPE_NO_NUMBA=1`` to
force the numpy path (useful for debugging and for the benchmark). Both
backends return identical results for identical inputs.
"""
from __future__ import annotations

import os
import warnings

import numpy as np


class PerformanceWarning(UserWarning):
    pass


_DISABLED = os.environ.get("QALANDSCAPE_NO_NUMBA", "").strip() not in ("", "0")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    if not _DISABLED:
        warnings.warn(
            "numba is not available, falling back to numpy kernels",
            PerformanceWarning,
            stacklevel=2,
        )

BACKEND = "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# incidence structure


class Incidence:
    """Distinct (variable, clause) pairs with multiplicities.

    Pairs are sorted by variable; ``cptr``/``cidx`` index the same pairs
    grouped by clause.
    """

    def __init__(self, clauses0: np.ndarray, N: int):
        clauses0 = np.asarray(clauses0, dtype=np.int64)
        M, K = clauses0.shape if clauses0.size else (clauses0.shape[0], 0)
        self.N, self.M = N, M
        var = clauses0.ravel()
        cl = np.repeat(np.arange(M, dtype=np.int64), K)
        key = var * max(M, 1) + cl
        ukey, mult = np.unique(key, return_counts=True)
        self.pv = (ukey // max(M, 1)).astype(np.int64)
        self.pc = (ukey % max(M, 1)).astype(np.int64)
        self.pm = mult.astype(np.int64)
        self.vptr = np.zeros(N + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.pv, minlength=N), out=self.vptr[1:])
        order = np.argsort(self.pc, kind="stable")
        self.cidx = order.astype(np.int64)
        self.cptr = np.zeros(M + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.pc, minlength=M), out=self.cptr[1:])


# ---------------------------------------------------------------------------
# clause one-counts and single-flip deltas


@njit(cache=True)
def _ones_nb(clauses0, z):
    M, K = clauses0.shape
    out = np.zeros(M, dtype=np.int64)
    for c in range(M):
        s = 0
        for j in range(K):
            s += z[clauses0[c, j]]
        out[c] = s
    return out


def _ones_np(clauses0, z):
    if clauses0.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return z[clauses0].sum(axis=1).astype(np.int64)


def clause_ones(clauses0: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Number of 1-bits in each clause, counted with multiplicity."""
    z = np.ascontiguousarray(z, dtype=np.int64)
    c = np.ascontiguousarray(clauses0, dtype=np.int64)
    if HAS_NUMBA and c.shape[0] > 0:
        return _ones_nb(c, z)
    return _ones_np(c, z)


@njit(cache=True)
def _flip_deltas_nb(ones, vptr, pc, pm, z, K):
    N = vptr.shape[0] - 1
    out = np.zeros((N, K + 1), dtype=np.int64)
    for v in range(N):
        s = 1 - 2 * z[v]
        for p in range(vptr[v], vptr[v + 1]):
            m = ones[pc[p]]
            out[v, m] -= 1
            out[v, m + s * pm[p]] += 1
    return out


def _flip_deltas_np(ones, vptr, pc, pm, z, K):
    N = vptr.shape[0] - 1
    out = np.zeros((N, K + 1), dtype=np.int64)
    vv = np.repeat(np.arange(N), np.diff(vptr))
    m = ones[pc]
    s = 1 - 2 * z[vv]
    np.add.at(out, (vv, m), -1)
    np.add.at(out, (vv, m + s * pm), 1)
    return out


def flip_deltas(inc: Incidence, ones: np.ndarray, z: np.ndarray, K: int) -> np.ndarray:
    """Integer change of every clause-type count under each single flip.

    Returns an ``(N, K+1)`` array whose row ``v`` holds the change in the
    number of clauses with ``m`` 1-bits when bit ``v`` is flipped.
    """
    z = np.ascontiguousarray(z, dtype=np.int64)
    f = _flip_deltas_nb if HAS_NUMBA else _flip_deltas_np
    return f(ones, inc.vptr, inc.pc, inc.pm, z, K)


# ---------------------------------------------------------------------------
# Metropolis walk towards a target box


def _walk_py(z, ones, dev, vptr, pc, pm, props, unifs, T0, T1, tol, N):
    n = props.shape[0]
    K1 = dev.shape[0] - 1
    dm = np.zeros(K1, dtype=np.int64)
    best = np.inf
    for step in range(n):
        worst = 0.0
        for i in range(K1 + 1):
            a = abs(dev[i])
            if a > worst:
                worst = a
        if worst < best:
            best = worst
        if worst <= tol:
            return step, best
        v = props[step]
        s = 1 - 2 * z[v]
        for p in range(vptr[v], vptr[v + 1]):
            m = ones[pc[p]]
            dm[m] -= 1
            dm[m + s * pm[p]] += 1
        dq = -2.0 * s
        dU = (dev[0] + dq) ** 2 - dev[0] ** 2
        for i in range(K1):
            if dm[i] != 0:
                dU += (dev[i + 1] + dm[i]) ** 2 - dev[i + 1] ** 2
        dU /= N
        T = T0 * (T1 / T0) ** (step / n)
        if dU <= 0.0 or unifs[step] < np.exp(-dU / T):
            z[v] = 1 - z[v]
            dev[0] += dq
            for i in range(K1):
                dev[i + 1] += dm[i]
            for p in range(vptr[v], vptr[v + 1]):
                ones[pc[p]] += s * pm[p]
        for i in range(K1):
            dm[i] = 0
    worst = 0.0
    for i in range(K1 + 1):
        a = abs(dev[i])
        if a > worst:
            worst = a
    if worst < best:
        best = worst
    if worst <= tol:
        return n, best
    return -1, best


_walk_nb = njit(cache=True)(_walk_py) if HAS_NUMBA else None


def metropolis_walk(z, ones, dev, inc: Incidence, props, unifs, T0, T1, tol):
    """Run the box-seeking walk in place.

    ``dev`` holds the current deviation from the target in count units
    (``[Q, M_0..M_K]``); ``z``, ``ones`` and ``dev`` are updated in place.
    Returns ``(steps, best_max_dev)`` with ``steps == -1`` on failure.
    """
    f = _walk_nb if HAS_NUMBA else _walk_py
    steps, best = f(z, ones, dev, inc.vptr, inc.pc, inc.pm, props, unifs,
                    float(T0), float(T1), float(tol), float(inc.N))
    return int(steps), float(best)


# ---------------------------------------------------------------------------
# peeling


@njit(cache=True)
def _peel_nae_nb(vptr, pv, pc, cptr, cidx, N, M):
    c_alive = np.ones(M, dtype=np.bool_)
    v_gone = np.zeros(N, dtype=np.bool_)
    deg = np.zeros(N, dtype=np.int64)
    for v in range(N):
        deg[v] = vptr[v + 1] - vptr[v]
    stack = np.empty(N + cidx.shape[0], dtype=np.int64)
    top = 0
    for v in range(N):
        if deg[v] <= 1:
            stack[top] = v
            top += 1
    while top > 0:
        top -= 1
        v = stack[top]
        if v_gone[v] or deg[v] >= 2:
            continue
        v_gone[v] = True
        if deg[v] == 1:
            for p in range(vptr[v], vptr[v + 1]):
                c = pc[p]
                if c_alive[c]:
                    c_alive[c] = False
                    for jj in range(cptr[c], cptr[c + 1]):
                        u = pv[cidx[jj]]
                        if u != v:
                            deg[u] -= 1
                            if deg[u] <= 1 and not v_gone[u]:
                                stack[top] = u
                                top += 1
                    break
            deg[v] = 0
    return c_alive, ~v_gone


def _peel_nae_np(vptr, pv, pc, cptr, cidx, N, M):
    c_alive = np.ones(M, dtype=bool)
    while True:
        pa = c_alive[pc]
        deg = np.bincount(pv[pa], minlength=N)
        kill = np.zeros(M, dtype=bool)
        kill[pc[pa & (deg[pv] == 1)]] = True
        if not kill.any():
            break
        c_alive &= ~kill
    return c_alive, deg >= 2


def peel_nae(inc: Incidence):
    """Two-core of the hypergraph: (alive clause mask, core variable mask)."""
    f = _peel_nae_nb if HAS_NUMBA else _peel_nae_np
    return f(inc.vptr, inc.pv, inc.pc, inc.cptr, inc.cidx, inc.N, inc.M)


@njit(cache=True)
def _kill_clause(c, c_alive, p_alive, clen, cptr, cidx, pv, deg, ldeg, v_gone, stack, top):
    c_alive[c] = False
    longc = clen[c] > 2
    for jj in range(cptr[c], cptr[c + 1]):
        q = cidx[jj]
        if p_alive[q]:
            p_alive[q] = False
            u = pv[q]
            deg[u] -= 1
            if longc:
                ldeg[u] -= 1
            if not v_gone[u]:
                stack[top] = u
                top += 1
    return top


@njit(cache=True)
def _peel_1ink_nb(vptr, pv, pc, pm, cptr, cidx, N, M, K):
    P = pv.shape[0]
    c_alive = np.ones(M, dtype=np.bool_)
    p_alive = np.ones(P, dtype=np.bool_)
    v_gone = np.zeros(N, dtype=np.bool_)
    clen = np.zeros(M, dtype=np.int64)
    for p in range(P):
        clen[pc[p]] += pm[p]
    deg = np.zeros(N, dtype=np.int64)
    ldeg = np.zeros(N, dtype=np.int64)
    for p in range(P):
        deg[pv[p]] += 1
        if clen[pc[p]] > 2:
            ldeg[pv[p]] += 1
    stack = np.empty(N + 4 * P + 1, dtype=np.int64)
    top = 0
    for v in range(N):
        stack[top] = v
        top += 1
    while top > 0:
        top -= 1
        v = stack[top]
        if v_gone[v]:
            continue
        d = deg[v]
        if d == 0:
            v_gone[v] = True
        elif d == 1:
            v_gone[v] = True
            for p in range(vptr[v], vptr[v + 1]):
                if p_alive[p]:
                    c = pc[p]
                    p_alive[p] = False
                    deg[v] = 0
                    old = clen[c]
                    if old > 2:
                        ldeg[v] -= 1
                    clen[c] -= pm[p]
                    new = clen[c]
                    if new <= 1:
                        # a leftover of length <= 1 is vacuous; keep the old
                        # length so the long-degree bookkeeping unwinds
                        clen[c] = old
                        top = _kill_clause(c, c_alive, p_alive, clen, cptr, cidx,
                                           pv, deg, ldeg, v_gone, stack, top)
                    elif old > 2 and new <= 2:
                        for jj in range(cptr[c], cptr[c + 1]):
                            q = cidx[jj]
                            if p_alive[q]:
                                u = pv[q]
                                ldeg[u] -= 1
                                if not v_gone[u]:
                                    stack[top] = u
                                    top += 1
                    break
        elif ldeg[v] == 0:
            v_gone[v] = True
            for p in range(vptr[v], vptr[v + 1]):
                if p_alive[p]:
                    top = _kill_clause(pc[p], c_alive, p_alive, clen, cptr, cidx,
                                       pv, deg, ldeg, v_gone, stack, top)
    return c_alive, p_alive, ~v_gone


def _peel_1ink_np(vptr, pv, pc, pm, cptr, cidx, N, M, K):
    c_alive = np.ones(M, dtype=bool)
    p_alive = np.ones(pv.shape[0], dtype=bool)
    while True:
        pa = p_alive & c_alive[pc]
        clen = np.bincount(pc[pa], weights=pm[pa], minlength=M).astype(np.int64)
        deg = np.bincount(pv[pa], minlength=N)
        ldeg = np.bincount(pv[pa & (clen[pc] > 2)], minlength=N)
        rule_a = deg == 1
        rule_b = (deg >= 2) & (ldeg == 0)
        kill = np.zeros(M, dtype=bool)
        kill[pc[pa & rule_b[pv]]] = True
        drop = pa & rule_a[pv]
        new_alive = p_alive & ~drop
        pa2 = new_alive & c_alive[pc] & ~kill[pc]
        clen2 = np.bincount(pc[pa2], weights=pm[pa2], minlength=M).astype(np.int64)
        kill |= c_alive & (clen2 <= 1)
        if not kill.any() and not drop.any():
            break
        p_alive = new_alive
        c_alive &= ~kill
    pa = p_alive & c_alive[pc]
    p_alive = pa
    deg = np.bincount(pv[pa], minlength=N)
    return c_alive, p_alive, deg >= 1


def peel_1ink(inc: Incidence, K: int):
    """Reduced 1-in-K core: (alive clause mask, alive pair mask, core variable mask)."""
    f = _peel_1ink_nb if HAS_NUMBA else _peel_1ink_np
    c_alive, p_alive, v_core = f(inc.vptr, inc.pv, inc.pc, inc.pm, inc.cptr,
                                 inc.cidx, inc.N, inc.M, K)
    return c_alive, p_alive & c_alive[inc.pc], v_core
