"""Time the numba kernels against the numpy fallback.

Each backend runs in its own interpreter because the choice is made at
import time. Outputs are hashed so both backends can be checked for
identical results.

    python3 benchmarks/bench_kernels.py --n 100000 --repeat 3
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import hashlib, json, sys, time
import numpy as np
from qalandscape import _kernels
from qalandscape.problem import MacroState, sample_instance

N, repeat = int(sys.argv[1]), int(sys.argv[2])
inst = sample_instance(N, 0.6, 3, 11)
inst_nae = sample_instance(N, 1.0, 3, 12)
rng = np.random.default_rng(0)
z = (rng.random(N) < 0.35).astype(np.int64)
inc, inc_nae = inst.incidence(), inst_nae.incidence()


def walk():
    zz = z.copy()
    ones = _kernels.clause_ones(inst.clauses0, zz)
    tgt = MacroState(0.422, np.array([0.048, 0.416, 0.123, 0.013]), 0.6)
    counts = np.bincount(ones, minlength=4).astype(float)
    dev = np.concatenate([[(N - 2 * zz.sum()) - N * tgt.q], counts - N * tgt.Mm])
    r = np.random.default_rng(1)
    n = 5 * N
    return _kernels.metropolis_walk(zz, ones, dev, inc, r.integers(0, N, n), r.random(n),
                                    1.0, 1e-3, -1.0), zz


cases = {
    "clause_ones": lambda: _kernels.clause_ones(inst.clauses0, z),
    "flip_deltas": lambda: _kernels.flip_deltas(inc, _kernels.clause_ones(inst.clauses0, z), z, 3),
    "metropolis_walk_5N": walk,
    "peel_nae": lambda: _kernels.peel_nae(inc_nae),
    "peel_1ink": lambda: _kernels.peel_1ink(inc, 3),
}


def digest(x):
    h = hashlib.sha256()
    for a in (x if isinstance(x, tuple) else (x,)):
        if isinstance(a, tuple):
            h.update(digest(a).encode())
        else:
            h.update(np.ascontiguousarray(np.asarray(a)).tobytes())
    return h.hexdigest()[:16]


out = {"backend": _kernels.BACKEND}
for name, f in cases.items():
    res = f()  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        f()
        times.append(time.perf_counter() - t)
    out[name] = {"best_s": min(times), "digest": digest(res)}
print(json.dumps(out))
"""


def run(backend: str, n: int, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("QALANDSCAPE_NO_NUMBA", None)
    if backend == "numpy":
        env["QALANDSCAPE_NO_NUMBA"] = "1"
    p = subprocess.run([sys.executable, "-c", CHILD, str(n), str(repeat)], env=env,
                       capture_output=True, text=True, check=True)
    return json.loads(p.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    nb = run("numba", args.n, args.repeat)
    py = run("numpy", args.n, args.repeat)
    print(f"N = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<22}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}  same")
    ok = True
    for name in nb:
        if name == "backend":
            continue
        a, b = nb[name], py[name]
        same = a["digest"] == b["digest"]
        ok &= same
        print(f"{name:<22}{a['best_s']:>12.4f}{b['best_s']:>12.4f}"
              f"{b['best_s'] / max(a['best_s'], 1e-12):>10.1f}  {'yes' if same else 'NO'}")
    if nb["backend"] != "numba":
        print("note: numba unavailable, both columns ran the numpy path")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
