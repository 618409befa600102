"""Monte Carlo check that one-flip statistics depend only on the box.

Strings are drawn inside a target box on random instances; the Laplace
transform of the single-flip change in one clause-type count is compared
with its annealed prediction.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .errors import ConvergenceError, DomainError
from .problem import Instance, MacroState, ProblemSpec, make_problem, sample_instance


@dataclass
class LaplaceCurve:
    y_grid: np.ndarray
    values: np.ndarray
    n_samples: int
    instance_seed: int | None = None
    string_seed: int | None = None


def default_y_grid() -> np.ndarray:
    return np.linspace(-1.0, 1.0, 41)


def default_tol(N: int) -> float:
    return max(4.0 / np.sqrt(N), 1e-3)


def sample_string_in_box(inst: Instance, target: MacroState, tol: float | None = None,
                         seed: int = 0, sweeps: float = 50.0,
                         T0: float = 1.0, T1: float = 1e-3) -> np.ndarray:
    """Draw a string whose box coordinates lie within ``tol`` of ``target``.

    Metropolis walk on single flips with potential ``N * sum(dev**2)``
    over the deviations of ``q`` and every density, with temperature
    lowered geometrically from ``T0`` to ``T1`` over ``sweeps * N`` steps.
    The walk starts from independent bits at the target 1-bit fraction and
    stops at the first string inside the box.
    """
    N, K = inst.N, inst.K
    if target.K != K:
        raise DomainError("target and instance clause widths differ")
    tol = default_tol(N) if tol is None else tol
    rng = np.random.default_rng(seed)
    z = (rng.random(N) < target.ones_fraction).astype(np.int64)
    ones = _kernels.clause_ones(inst.clauses0, z)
    counts = np.bincount(ones, minlength=K + 1).astype(float)
    dev = np.empty(K + 2)
    dev[0] = (N - 2 * z.sum()) - N * target.q
    dev[1:] = counts - N * target.Mm
    n = int(sweeps * N)
    props = rng.integers(0, N, size=n, dtype=np.int64)
    unifs = rng.random(n)
    steps, best = _kernels.metropolis_walk(z, ones, dev, inst.incidence(), props, unifs,
                                           T0, T1, tol * N)
    if steps < 0:
        raise ConvergenceError("string sampling hit the iteration cap",
                               {"closest_max_deviation": best / N, "tol": tol})
    return z


def flip_increments(inst: Instance, z, component: int) -> np.ndarray:
    """Change in the count of clauses with ``component`` 1-bits, per flip."""
    z = np.asarray(z, dtype=np.int64)
    if inst.M == 0:
        return np.zeros(inst.N, dtype=np.int64)
    ones = _kernels.clause_ones(inst.clauses0, z)
    return _kernels.flip_deltas(inst.incidence(), ones, z, inst.K)[:, component]


def empirical_laplace(inst: Instance, z, component: int, y_grid=None) -> LaplaceCurve:
    """Average of ``exp(-y * dM)`` over all single flips of ``z``."""
    y = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    d = flip_increments(inst, z, component)
    vals, cnt = np.unique(d, return_counts=True)
    curve = (cnt[None, :] * np.exp(-np.outer(y, vals))).sum(axis=1) / inst.N
    return LaplaceCurve(y, curve, inst.N)


def laplace_transform(state: MacroState, theta: float, y: np.ndarray) -> float:
    """Annealed transform ``E[exp(-theta dQ - y.dM)]`` of a single flip.

    ``dQ`` is the change in the spin sum and ``dM`` the integer changes of
    all clause-type counts. Incidences of the flipped bit with each clause
    type are independent Poisson variables.
    """
    K, q, M = state.K, state.q, state.Mm
    y = np.asarray(y, dtype=float)
    j = np.arange(K + 1)
    a = 2.0 * (K - j) * M / (1.0 + q) if q > -1 else np.zeros(K + 1)
    b = 2.0 * j * M / (1.0 - q) if q < 1 else np.zeros(K + 1)
    up = sum(a[i] * np.expm1(-(y[i + 1] - y[i])) for i in range(K))
    down = sum(b[i] * np.expm1(-(y[i - 1] - y[i])) for i in range(1, K + 1))
    return float((1.0 + q) / 2.0 * np.exp(2.0 * theta + up)
                 + (1.0 - q) / 2.0 * np.exp(-2.0 * theta + down))


def pinned_laplace_transform(state: MacroState, theta: float, y: np.ndarray) -> float:
    """Single-flip transform with vertex degrees pinned to Poisson(K gamma).

    A flipped bit of total degree ``k`` meets the clause types through a
    multinomial split of its ``k`` incidences; the degree law per bit value
    is the closure-tilted Poisson weight.
    """
    from .entropy import spin_sums
    from .nextorder import poisson_closure
    K, q, M = state.K, state.q, state.Mm
    y = np.asarray(y, dtype=float)
    Mp, Mm = spin_sums(M)
    cl = poisson_closure(q, Mp, Mm, K * state.gamma)
    k = np.arange(len(cl.c_k))
    th = np.tanh(cl.lam + k * cl.h)
    g0 = sum((K - i) * M[i] / Mp * np.exp(y[i] - y[i + 1]) for i in range(K)) if Mp > 0 else 1.0
    g1 = sum(i * M[i] / Mm * np.exp(y[i] - y[i - 1]) for i in range(1, K + 1)) if Mm > 0 else 1.0
    return float(cl.c_k @ ((1 + th) / 2 * g0**k * np.exp(2 * theta)
                           + (1 - th) / 2 * g1**k * np.exp(-2 * theta)))


CLOSURES = ("annealed", "poisson-degree")


def analytic_laplace(state: MacroState, spec: ProblemSpec, component: int,
                     y_grid=None, closure: str = "annealed") -> LaplaceCurve:
    """Predicted transform of a single count component.

    ``closure="annealed"`` uses independent Poisson incidences per clause
    type; ``"poisson-degree"`` additionally pins the vertex-degree law.
    """
    if closure not in CLOSURES:
        raise DomainError(f"unknown closure {closure!r}")
    f = laplace_transform if closure == "annealed" else pinned_laplace_transform
    y = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    K = spec.K
    vals = np.empty(len(y))
    for i, yi in enumerate(y):
        vec = np.zeros(K + 1)
        vec[component] = yi
        vals[i] = f(state, 0.0, vec)
    return LaplaceCurve(y, vals, 0)


def _log_binom(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    ok = (k >= 0) & (k <= n) & (n >= 0)
    out = np.full(np.broadcast(n, k).shape, -np.inf)
    nn, kk = np.broadcast_arrays(n, k)
    out[ok] = gammaln(nn[ok] + 1) - gammaln(kk[ok] + 1) - gammaln(nn[ok] - kk[ok] + 1)
    return out


def r_flip_moments(state: MacroState, r: int, N: int) -> tuple[np.ndarray, float]:
    """Mean clause-type densities and spin after flipping ``r`` random bits.

    Returns ``(mu, q_mean)``. Clauses are taken to have distinct variables.
    """
    K = state.K
    if not 0 <= r <= N:
        raise DomainError("need 0 <= r <= N")
    M = state.Mm
    mu = np.zeros(K + 1)
    lnorm = _log_binom(N, r)
    for m in range(K + 1):
        tot = 0.0
        for mp in range(K + 1):
            if M[mp] == 0:
                continue
            for p in range(mp + 1):
                lt = (_log_binom(mp, p) + _log_binom(K - mp, m - mp + p)
                      + _log_binom(N - K, r - 2 * p - m + mp) - lnorm)
                if np.isfinite(lt):
                    tot += M[mp] * np.exp(lt)
        mu[m] = tot
    return mu, state.q * (1.0 - 2.0 * r / N)


# ---------------------------------------------------------------------------
# experiment


def cell_seeds(master: int, N: int, i_inst: int, i_str: int) -> tuple[int, int]:
    ss = np.random.SeedSequence([master, N, i_inst, i_str])
    a, b = ss.generate_state(2)
    return int(a), int(b)


def _run_cell(args):
    N, spec_kind, K, gamma, q, Mm, master, i_inst, i_str, component, y, tol = args
    spec = make_problem(spec_kind, K)
    inst_seed, _ = cell_seeds(master, N, i_inst, 0)
    _, str_seed = cell_seeds(master, N, i_inst, i_str + 1)
    inst = sample_instance(N, gamma, K, inst_seed)
    target = MacroState(q, np.asarray(Mm), gamma)
    out = {"N": N, "instance": i_inst, "string": i_str, "instance_seed": inst_seed,
           "string_seed": str_seed}
    try:
        z = sample_string_in_box(inst, target, tol, str_seed)
    except ConvergenceError as exc:
        out["error"] = str(exc)
        out["diagnostics"] = exc.diagnostics
        return out
    curve = empirical_laplace(inst, z, component, y)
    from .problem import measure_box
    box = measure_box(spec, inst, z)
    out["values"] = curve.values.tolist()
    out["box"] = {"q": box.q, "Mm": box.Mm.tolist()}
    return out


@dataclass
class UniversalityReport:
    y_grid: list
    analytic: list
    analytic_pinned: list
    cells: list = field(default_factory=list)
    spread: dict = field(default_factory=dict)
    max_dev: dict = field(default_factory=dict)
    max_dev_pinned: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


def universality_experiment(sizes, spec: ProblemSpec, gamma: float, target: MacroState,
                            n_instances: int = 3, n_strings: int = 3, master_seed: int = 0,
                            component: int = 1, y_grid=None, tol: float | None = None,
                            workers: int = 1, out_dir: str | None = None
                            ) -> UniversalityReport:
    """Sweep system sizes; per size draw instances and strings in the box.

    ``spread[N]`` is the largest pointwise range across all curves at that
    size and ``max_dev[N]`` the largest deviation from the annealed curve
    (``max_dev_pinned`` for the degree-pinned one).
    Per-cell seeds are derived from the master seed by ``SeedSequence``, so
    results do not depend on ``workers``.
    """
    y = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    ana = analytic_laplace(target, spec, component, y).values
    pin = analytic_laplace(target, spec, component, y, closure="poisson-degree").values
    jobs = [(int(N), spec.kind.value, spec.K, gamma, target.q, target.Mm.tolist(),
             master_seed, i, j, component, y, tol)
            for N in sizes for i in range(n_instances) for j in range(n_strings)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            cells = list(ex.map(_run_cell, jobs))
    else:
        cells = [_run_cell(j) for j in jobs]
    rep = UniversalityReport(y.tolist(), ana.tolist(), pin.tolist(), cells)
    for N in sizes:
        curves = np.array([c["values"] for c in cells if c["N"] == N and "values" in c])
        if len(curves):
            rep.spread[int(N)] = float((curves.max(axis=0) - curves.min(axis=0)).max())
            rep.max_dev[int(N)] = float(np.abs(curves - ana[None, :]).max())
            rep.max_dev_pinned[int(N)] = float(np.abs(curves - pin[None, :]).max())
    rep.params = {"sizes": [int(s) for s in sizes], "problem": spec.kind.value, "K": spec.K,
                  "gamma": gamma, "q": target.q, "Mm": target.Mm.tolist(),
                  "n_instances": n_instances, "n_strings": n_strings,
                  "master_seed": master_seed, "component": component, "tol": tol}
    if out_dir:
        write_report(rep, out_dir)
    return rep


def write_report(rep: UniversalityReport, out_dir: str) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    ana_path = os.path.join(out_dir, "analytic.csv")
    _write_curve(ana_path, rep.y_grid, rep.analytic)
    paths.append(ana_path)
    pin_path = os.path.join(out_dir, "analytic_pinned.csv")
    _write_curve(pin_path, rep.y_grid, rep.analytic_pinned)
    paths.append(pin_path)
    for c in rep.cells:
        if "values" not in c:
            continue
        p = os.path.join(out_dir, f"curve_N{c['N']}_i{c['instance']}_s{c['string']}.csv")
        _write_curve(p, rep.y_grid, c["values"])
        paths.append(p)
    summary = {"params": rep.params, "spread": {str(k): v for k, v in rep.spread.items()},
               "max_dev": {str(k): v for k, v in rep.max_dev.items()},
               "max_dev_pinned": {str(k): v for k, v in rep.max_dev_pinned.items()},
               "cells": [{k: v for k, v in c.items() if k != "values"} for c in rep.cells]}
    sp = os.path.join(out_dir, "summary.json")
    with open(sp, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    paths.append(sp)
    return paths


def _write_curve(path, y, v):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", "value"])
        for a, b in zip(y, v):
            w.writerow([f"{a:.10g}", f"{b:.12g}"])
