from __future__ import annotations

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from qalandscape import _kernels
from qalandscape.problem import sample_instance

CHILD = r"""
import hashlib, json
import numpy as np
from qalandscape import _kernels
from qalandscape.core import trim
from qalandscape.problem import MacroState, make_problem, sample_instance
from qalandscape.universality import empirical_laplace, sample_string_in_box

out = {"backend": _kernels.BACKEND}
h = lambda a: hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()
for kind, K, g in (("k-nae", 3, 1.0), ("one-in-k", 3, 0.7), ("one-in-k", 5, 0.5)):
    inst = sample_instance(20000, g, K, 7)
    out[f"trim-{kind}-{K}"] = trim(make_problem(kind, K), inst).to_text()
inst = sample_instance(3000, 0.6, 3, 2)
tgt = MacroState(0.422, np.array([0.048, 0.416, 0.123, 0.013]), 0.6)
z = sample_string_in_box(inst, tgt, seed=3)
out["walk"] = h(z)
out["laplace"] = empirical_laplace(inst, z, 1).values.tolist()
print(json.dumps(out))
"""


def run_child(no_numba: bool) -> dict:
    env = dict(os.environ)
    env.pop("QALANDSCAPE_NO_NUMBA", None)
    if no_numba:
        env["QALANDSCAPE_NO_NUMBA"] = "1"
    p = subprocess.run([sys.executable, "-c", CHILD], env=env, capture_output=True, text=True,
                       check=True)
    return json.loads(p.stdout.strip().splitlines()[-1])


def test_backends_agree_end_to_end():
    a, b = run_child(False), run_child(True)
    assert b.pop("backend") == "numpy"
    a.pop("backend")
    assert a == b


@pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("K,gamma,seed", [(3, 0.7, 1), (4, 1.3, 2), (5, 0.4, 3), (2, 1.0, 4)])
def test_kernel_pairs_agree(K, gamma, seed):
    inst = sample_instance(3000, gamma, K, seed)
    inc = inst.incidence()
    z = np.random.default_rng(seed).integers(0, 2, inst.N).astype(np.int64)
    ones_nb = _kernels._ones_nb(inst.clauses0, z)
    assert np.array_equal(ones_nb, _kernels._ones_np(inst.clauses0, z))
    args = (ones_nb, inc.vptr, inc.pc, inc.pm, z, K)
    assert np.array_equal(_kernels._flip_deltas_nb(*args), _kernels._flip_deltas_np(*args))
    pa = (inc.vptr, inc.pv, inc.pc, inc.cptr, inc.cidx, inc.N, inc.M)
    for x, y in zip(_kernels._peel_nae_nb(*pa), _kernels._peel_nae_np(*pa)):
        assert np.array_equal(x, y)
    if K >= 3:
        pb = (inc.vptr, inc.pv, inc.pc, inc.pm, inc.cptr, inc.cidx, inc.N, inc.M, K)
        for x, y in zip(_kernels._peel_1ink_nb(*pb), _kernels._peel_1ink_np(*pb)):
            assert np.array_equal(x, y)


def test_flip_deltas_match_recount():
    inst = sample_instance(200, 0.9, 4, 5)
    inc = inst.incidence()
    z = np.random.default_rng(0).integers(0, 2, 200).astype(np.int64)
    ones = _kernels.clause_ones(inst.clauses0, z)
    d = _kernels.flip_deltas(inc, ones, z, 4)
    base = np.bincount(ones, minlength=5)
    for v in range(0, 200, 17):
        zz = z.copy()
        zz[v] ^= 1
        assert np.array_equal(np.bincount(_kernels.clause_ones(inst.clauses0, zz), minlength=5)
                              - base, d[v])


def test_incidence_multiplicity():
    inc = _kernels.Incidence(np.array([[0, 0, 1], [1, 2, 2]]), 3)
    assert inc.pv.tolist() == [0, 1, 1, 2]
    assert inc.pc.tolist() == [0, 0, 1, 1]
    assert inc.pm.tolist() == [2, 1, 1, 2]
    assert inc.vptr.tolist() == [0, 1, 3, 4]
