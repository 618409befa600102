"""Slow, independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools
from math import comb, lgamma, log

import numpy as np


def brute_ones(clauses, z):
    """1-bit count per clause, by explicit loops (1-based clauses)."""
    return [sum(z[v - 1] for v in c) for c in clauses]


def brute_energy(kind, K, clauses, z):
    e = 0
    for m in brute_ones(clauses, z):
        ok = (m == 1) if kind == "one-in-k" else (0 < m < K)
        e += not ok
    return e


def brute_counts(K, clauses, z):
    c = [0] * (K + 1)
    for m in brute_ones(clauses, z):
        c[m] += 1
    return c


def log_expected_box_count(N, K, M, n_ones, counts):
    """``ln E[#strings with n_ones 1-bits and clause-type counts]``.

    Clauses are K independent uniform picks, so a fixed string with a
    fraction x of 1-bits yields type m with probability
    ``C(K,m) x^m (1-x)^(K-m)`` independently per clause.
    """
    x = n_ones / N
    out = lgamma(N + 1) - lgamma(n_ones + 1) - lgamma(N - n_ones + 1) + lgamma(M + 1)
    for m, c in enumerate(counts):
        p = comb(K, m) * x**m * (1 - x) ** (K - m)
        if c == 0:
            continue
        if p == 0:
            return -np.inf
        out += c * log(p) - lgamma(c + 1)
    return out


def all_strings(N):
    return np.array(list(itertools.product((0, 1), repeat=N)), dtype=np.int64)


def box_keys(K, clauses0, Z):
    """Box label (n_ones, counts...) of every row of ``Z``."""
    ones = Z[:, clauses0].sum(axis=2)
    counts = np.stack([(ones == m).sum(axis=1) for m in range(K + 1)], axis=1)
    return np.concatenate([Z.sum(axis=1)[:, None], counts], axis=1)


def flip_set_average(K, clauses, z, r):
    """Mean clause-type densities over all C(N, r) flip sets."""
    N = len(z)
    acc = np.zeros(K + 1)
    n = 0
    for S in itertools.combinations(range(N), r):
        zz = list(z)
        for i in S:
            zz[i] ^= 1
        acc += brute_counts(K, clauses, zz)
        n += 1
    return acc / n / N


def flip_distribution(K, clauses, z, m):
    """Integer change of the type-m count for each single flip."""
    base = brute_counts(K, clauses, z)[m]
    out = []
    for i in range(len(z)):
        zz = list(z)
        zz[i] ^= 1
        out.append(brute_counts(K, clauses, zz)[m] - base)
    return out


def brute_core_nae(N, clauses):
    """Peel by repeatedly scanning for a variable of degree <= 1."""
    alive = [True] * len(clauses)
    gone = [False] * N
    changed = True
    while changed:
        changed = False
        deg = [0] * N
        where = [[] for _ in range(N)]
        for c, cl in enumerate(clauses):
            if alive[c]:
                for v in set(cl):
                    deg[v - 1] += 1
                    where[v - 1].append(c)
        for v in range(N):
            if not gone[v] and deg[v] <= 1:
                gone[v] = True
                for c in where[v]:
                    alive[c] = False
                changed = True
                break
    return alive, [not g for g in gone]


def brute_core_1ink(N, clauses):
    """Reduce one move at a time, always at the lowest-numbered eligible variable.

    A variable in a single clause leaves it; a variable whose clauses all
    have length two takes them out. Clauses shorter than two are dropped.
    Returns the surviving clauses (sorted member lists, repeats kept) and
    the set of variables still in some clause.
    """
    live = {c: list(cl) for c, cl in enumerate(clauses)}
    while True:
        for c in [c for c, cl in live.items() if len(cl) <= 1]:
            del live[c]
        where = {}
        for c, cl in live.items():
            for v in set(cl):
                where.setdefault(v, []).append(c)
        move = None
        for v in sorted(where):
            cs = where[v]
            if len(cs) == 1 or all(len(live[c]) <= 2 for c in cs):
                move = v, cs
                break
        if move is None:
            break
        v, cs = move
        if len(cs) == 1:
            live[cs[0]] = [u for u in live[cs[0]] if u != v]
        else:
            for c in cs:
                del live[c]
    kept = [sorted(cl) for cl in live.values()]
    return kept, {v for cl in kept for v in cl}


def nae_core_root(K, gamma):
    """Largest root of ``1 - q = exp(-K gamma q^(K-1))`` by plain bisection."""
    f = lambda q: 1 - q - np.exp(-K * gamma * q ** (K - 1))  # noqa: E731
    grid = np.linspace(1.0, 1e-9, 200001)
    vals = f(grid)
    idx = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    if len(idx) == 0:
        return 0.0
    hi, lo = grid[idx[0]], grid[idx[0] + 1]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sign(f(mid)) == np.sign(f(lo)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def degree_projection_kl(q, Mplus, Mminus, gammaK, kmax=80):
    """KL cost of forcing the total degree law to Poisson(K gamma).

    Base ensemble: a bit is 0 with probability (1+q)/2 and its degree is
    Poisson(2 M+/(1+q)) (or Poisson(2 M-/(1-q)) for a 1-bit). The I-projection
    onto laws with the same spin marginal, the same per-spin mean degree and
    a Poisson total-degree marginal is found by Newton's method on its
    convex dual.
    """
    from scipy.special import xlogy
    from scipy.stats import poisson
    k = np.arange(kmax)
    c = poisson.pmf(k, gammaK)
    ps = np.array([(1 + q) / 2, (1 - q) / 2])
    p0 = np.vstack([ps[0] * poisson.pmf(k, 2 * Mplus / (1 + q)),
                    ps[1] * poisson.pmf(k, 2 * Mminus / (1 - q))])
    target = np.concatenate([ps, [Mplus, Mminus], c])
    # feature vector of cell (s, k): indicator of s, k times indicator of s, indicator of k
    F = np.zeros((2, kmax, 4 + kmax))
    for s_ in range(2):
        F[s_, :, s_] = 1.0
        F[s_, :, 2 + s_] = k
        F[s_, k, 4 + k] = 1.0
    F = F.reshape(2 * kmax, -1)
    w0 = p0.ravel()
    keep = w0 > 0
    F, w0 = F[keep], w0[keep]
    cols = target > 0
    F, target = F[:, cols], target[cols]

    def dual(x):
        E = w0 * np.exp(F @ x)
        return E.sum() - x @ target, F.T @ E - target, (F * E[:, None]).T @ F

    x = np.zeros(F.shape[1])
    for _ in range(200):
        v, g, H = dual(x)
        if np.abs(g).max() < 1e-14:
            break
        step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while dual(x - t * step)[0] > v and t > 1e-12:
            t *= 0.5
        x = x - t * step
    p = w0 * np.exp(F @ x)
    return float(xlogy(p, p / w0).sum())
