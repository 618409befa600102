"""Command line front end.

Every command writes its data file(s) plus a ``*.manifest.json`` into the
output directory (``--out``, else ``$QALANDSCAPE_OUT``, else
``./qalandscape-out``). Exit codes: 0 ok, 2 bad configuration, 3 numerical
failure (diagnostics JSON written next to the data), 4 I/O error.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import os
import sys
import time

import click
import numpy as np

from . import __version__, _kernels
from .errors import ConvergenceError, DomainError, MalformedInstanceError

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4
OUT_ENV = "QALANDSCAPE_OUT"


def _out_dir(out: str | None) -> str:
    return out or os.environ.get(OUT_ENV) or "qalandscape-out"


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _emit(ctx: click.Context, name: str, data: str, seeds=None):
    """Write a data artifact and its manifest."""
    out = _out_dir(ctx.obj["out"])
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w", newline="") as fh:
        fh.write(data)
    man = {"command": ctx.info_name, "config": ctx.params, "seeds": seeds or [],
           "version": __version__, "backend": _kernels.BACKEND,
           "wall_time_s": round(time.perf_counter() - ctx.obj["t0"], 3),
           "artifact": name}
    with open(path + ".manifest.json", "w") as fh:
        fh.write(_dump(man))
    click.echo(path)
    return path


def _guarded(fn):
    """Map library errors onto exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return fn(*args, **kwargs)
        except (DomainError, MalformedInstanceError) as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_CONFIG)
        except ConvergenceError as exc:
            diag = {"error": str(exc), "diagnostics": exc.diagnostics,
                    "command": ctx.info_name, "config": ctx.params}
            click.echo(_dump(diag), err=True)
            try:
                out = _out_dir(ctx.obj["out"])
                os.makedirs(out, exist_ok=True)
                with open(os.path.join(out, f"{ctx.info_name}.diagnostics.json"), "w") as fh:
                    fh.write(_dump(diag))
            except OSError:
                pass
            ctx.exit(EXIT_NUMERIC)
        except OSError as exc:
            click.echo(f"I/O error: {exc}", err=True)
            ctx.exit(EXIT_IO)
    return wrapper


def _k_list(value: str) -> list[int]:
    try:
        if "-" in value:
            a, b = value.split("-")
            ks = list(range(int(a), int(b) + 1))
        else:
            ks = [int(v) for v in value.split(",")]
    except ValueError:
        raise click.BadParameter(f"expected K, K1,K2 or K1-K2, got {value!r}")
    if not ks or min(ks) < 2:
        raise click.BadParameter("clause widths must be >= 2")
    return ks


def _floats(value: str) -> list[float]:
    try:
        return [float(v) for v in value.split(",")]
    except ValueError:
        raise click.BadParameter(f"expected comma separated numbers, got {value!r}")


PROBLEM = click.option("--problem", type=click.Choice(["one-in-k", "k-nae"]),
                       default="one-in-k", show_default=True)
LANDSCAPE = click.option("--landscape", type=click.Choice(["full", "clause-counts", "energy-only"]),
                         default="full", show_default=True)
FORMAT = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                      show_default=True)
POS_INT = click.IntRange(min=1)
POS = click.FloatRange(min=0.0, min_open=True)


@click.group()
@click.version_option(__version__)
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help=f"Output directory (default ${OUT_ENV} or ./qalandscape-out).")
@click.pass_context
def main(ctx, out):
    """Annealed landscape thresholds for 1-in-K and K-NAE satisfiability."""
    ctx.ensure_object(dict)
    ctx.obj["out"] = out
    ctx.obj["t0"] = time.perf_counter()


@main.command()
@PROBLEM
@click.option("--k", "k", default="3", show_default=True, help="K, K1,K2 or K1-K2.")
@LANDSCAPE
@click.option("--n-eps", type=click.IntRange(min=20), default=300, show_default=True)
@FORMAT
@click.pass_context
@_guarded
def thresholds(ctx, problem, k, landscape, n_eps, fmt):
    """Static and dynamic thresholds, one row per K."""
    from .thresholds import scan_table, to_csv
    ks = _k_list(k)
    reps = scan_table(problem, ks, landscape, n_eps)
    name = f"thresholds_{problem}_K{k}_{landscape}.{fmt}"
    if fmt == "csv":
        data = to_csv(reps)
    else:
        data = _dump([dict(r.row(), error=r.error) for r in reps])
    _emit(ctx, name, data)
    if all(r.error for r in reps):
        raise ConvergenceError("every row failed", {"errors": [r.error for r in reps]})


@main.command("potential-scan")
@PROBLEM
@click.option("--k", type=click.IntRange(min=3), default=4, show_default=True)
@click.option("--gamma", type=POS, required=True)
@LANDSCAPE
@click.option("--n-tau", type=click.IntRange(min=3), default=241, show_default=True)
@click.option("--tau-min", type=click.FloatRange(0, 1, min_open=True, max_open=True),
              default=0.02, show_default=True)
@click.option("--tau-max", type=click.FloatRange(0, 1, min_open=True, max_open=True),
              default=0.98, show_default=True)
@click.option("--n-eps", type=click.IntRange(min=20), default=300, show_default=True)
@FORMAT
@click.pass_context
@_guarded
def potential_scan(ctx, problem, k, gamma, landscape, n_tau, tau_min, tau_max, n_eps, fmt):
    """Global minimizer of the effective potential along tau."""
    from .problem import make_problem
    from .thresholds import minimizer_trajectory
    if tau_min >= tau_max:
        raise DomainError("need tau-min < tau-max")
    spec = make_problem(problem, k)
    tr = minimizer_trajectory(spec, gamma, landscape, np.linspace(tau_min, tau_max, n_tau), n_eps)
    cols = ["tau", "Gamma", "g", "q"] + [f"M{m}" for m in range(k + 1)]
    rows = [[tr.tau[i], tr.Gamma[i], tr.g[i], tr.q[i], *tr.Mm[i]] for i in range(len(tr.tau))]
    name = f"potential_{problem}_K{k}_g{gamma:g}_{landscape}.{fmt}"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([f"{v:.10g}" for v in r])
        data = buf.getvalue()
    else:
        data = _dump([dict(zip(cols, map(float, r))) for r in rows])
    _emit(ctx, name, data)


@main.command()
@PROBLEM
@click.option("--k", "k", default="3", show_default=True, help="K, K1,K2 or K1-K2.")
@click.option("--n-eps", type=click.IntRange(min=20), default=80, show_default=True)
@FORMAT
@click.pass_context
@_guarded
def core(ctx, problem, k, n_eps, fmt):
    """Improved thresholds from the core-reduced landscape."""
    from .core import core_thresholds
    from .problem import make_problem
    from .thresholds import to_csv
    reps = [core_thresholds(make_problem(problem, K), n_eps) for K in _k_list(k)]
    name = f"core_{problem}_K{k}.{fmt}"
    data = to_csv(reps) if fmt == "csv" else _dump([r.row() for r in reps])
    _emit(ctx, name, data.replace("clause-counts", "core"))


@main.command()
@PROBLEM
@click.option("--k", type=click.IntRange(min=3), default=3, show_default=True)
@click.option("--n", type=POS_INT, required=True)
@click.option("--gamma", type=POS, required=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--save-core", is_flag=True, help="Also write the trimmed instance.")
@click.pass_context
@_guarded
def trim(ctx, problem, k, n, gamma, seed, save_core):
    """Trim a random instance and compare with the analytic core."""
    from .core import core_stats_analytic, trim as do_trim
    from .problem import make_problem, sample_instance
    spec = make_problem(problem, k)
    inst = sample_instance(n, gamma, k, seed)
    c = do_trim(spec, inst)
    ana = core_stats_analytic(spec, gamma)
    emp = c.stats()
    data = _dump({"N": n, "M": inst.M, "gamma": gamma, "seed": seed,
                  "empirical": {"n_frac": emp["n_frac"],
                                "m_frac": {str(kk): v for kk, v in emp["m_frac"].items()}},
                  "analytic": {"n_frac": ana.n_frac,
                               "m_frac": {str(kk): float(v) for kk, v in
                                          zip(ana.lengths, ana.m_frac)}}})
    base = f"trim_{problem}_K{k}_N{n}_g{gamma:g}_s{seed}"
    _emit(ctx, base + ".json", data, [seed])
    if save_core:
        _emit(ctx, base + ".core.txt", c.to_text(), [seed])


@main.command()
@click.option("--k", type=click.IntRange(min=2), default=3, show_default=True)
@click.option("--gamma", type=POS, required=True)
@click.option("--q", type=click.FloatRange(-1, 1), required=True)
@click.option("--m", "m", required=True, help="Clause densities M_0,...,M_K.")
@click.option("--sizes", default="1000,10000,100000", show_default=True)
@click.option("--instances", type=POS_INT, default=3, show_default=True)
@click.option("--strings", type=POS_INT, default=3, show_default=True)
@click.option("--component", type=click.IntRange(min=0), default=1, show_default=True)
@click.option("--tol", type=POS, default=None, help="Box tolerance (default max(4/sqrt N, 1e-3)).")
@click.option("--y-min", type=float, default=-1.0, show_default=True)
@click.option("--y-max", type=float, default=1.0, show_default=True)
@click.option("--n-y", type=click.IntRange(min=2), default=41, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--workers", type=POS_INT, default=os.cpu_count() or 1, show_default=True)
@click.option("--large", is_flag=True, help="Allow N above 1e5.")
@click.pass_context
@_guarded
def simulate(ctx, k, gamma, q, m, sizes, instances, strings, component, tol, y_min, y_max,
             n_y, seed, workers, large):
    """Empirical one-flip Laplace curves in a box against the prediction."""
    from .problem import MacroState, make_problem
    from .universality import universality_experiment
    M = np.array(_floats(m))
    if len(M) != k + 1:
        raise DomainError(f"--m needs {k + 1} values")
    if component > k:
        raise DomainError("component out of range")
    Ns = [int(float(s)) for s in sizes.split(",")]
    if min(Ns) < 1:
        raise DomainError("sizes must be positive")
    if max(Ns) > 100000 and not large:
        raise DomainError("sizes above 1e5 need --large")
    target = MacroState(q, M, gamma)
    spec = make_problem("one-in-k", k)
    out = os.path.join(_out_dir(ctx.obj["out"]), f"simulate_K{k}_g{gamma:g}_s{seed}")
    rep = universality_experiment(Ns, spec, gamma, target, instances, strings, seed, component,
                                  np.linspace(y_min, y_max, n_y), tol, workers, out)
    seeds = [[c["instance_seed"], c["string_seed"]] for c in rep.cells]
    _emit(ctx, os.path.relpath(os.path.join(out, "summary.json"), _out_dir(ctx.obj["out"])),
          open(os.path.join(out, "summary.json")).read(), seeds)
    failed = [c for c in rep.cells if "error" in c]
    if len(failed) == len(rep.cells):
        raise ConvergenceError("no string reached the box", {"cells": failed})


@main.command("next-order")
@click.option("--k", "k", default="4", show_default=True, help="K, K1,K2 or K1-K2.")
@click.option("--n-eps", type=click.IntRange(min=20), default=300, show_default=True)
@click.pass_context
@_guarded
def next_order(ctx, k, n_eps):
    """Threshold shifts with Poisson-pinned vertex degrees (1-in-K)."""
    from .nextorder import nextorder_thresholds
    from .problem import make_problem
    rows = {str(K): nextorder_thresholds(make_problem("one-in-k", K), n_eps) for K in _k_list(k)}
    _emit(ctx, f"nextorder_K{k}.json", _dump(rows))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
