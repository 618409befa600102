from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import comb

from oracles import all_strings, box_keys
from qalandscape.entropy import entropy_gradient, max_entropy_state
from qalandscape.potential import (LandscapeSet, PotentialPoint, _Coords, effective_potential,
                                   ell, find_minima, restricted_ell)
from qalandscape.problem import MacroState, energy_of_box, make_problem, sample_instance
from qalandscape.universality import laplace_transform

FIG = MacroState(0.422, np.array([0.048, 0.416, 0.123, 0.013]), 0.6)


def uniform(K, gamma):
    return MacroState(0.0, gamma * comb(K, np.arange(K + 1)) / 2**K, gamma)


def test_ell_uniform_and_boundary():
    for K, g in [(3, 0.6), (4, 0.676), (6, 19.8)]:
        assert ell(uniform(K, g)) == pytest.approx(1.0, abs=1e-12)
    assert ell(MacroState(1.0, np.array([0.6, 0, 0, 0]), 0.6)) == 0.0
    q = 1 - 1e-7
    near = MacroState(q, np.array([0.6, 0, 0, 0]), 0.6)
    # vanishes like sqrt(1 - q^2)
    assert ell(near) == pytest.approx(np.sqrt(1 - q * q) * np.exp(-1.8 / (1 + q)), rel=1e-9)


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 7), st.floats(0.05, 6.0), st.integers(0, 10**6))
def test_ell_bounds_and_symmetry(K, gamma, seed):
    rng = np.random.default_rng(seed)
    s = MacroState(float(rng.uniform(-0.95, 0.95)), gamma * rng.dirichlet(np.ones(K + 1)), gamma)
    v = ell(s)
    assert 0.0 <= v <= 1.0
    assert v < 1.0 - 1e-8 or np.allclose(s.Mm, uniform(K, gamma).Mm, atol=1e-4)
    assert ell(s.complement()) == pytest.approx(v, rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("state", [
    FIG,
    MacroState(-0.3, np.array([0.1, 0.2, 0.5, 0.3, 0.1]), 1.2),
    MacroState(0.7, np.array([2.0, 1.0, 0.4]), 3.4),
])
def test_ell_is_transform_at_half_entropy_gradient(state):
    dq, dM = entropy_gradient(state)
    assert laplace_transform(state, dq / 2, dM / 2) == pytest.approx(ell(state), rel=1e-12)


@pytest.mark.parametrize("N,K,gamma,seed", [(12, 3, 0.5, 1), (14, 3, 0.6, 2), (13, 4, 0.8, 3)])
def test_detailed_balance_exhaustive(N, K, gamma, seed):
    inst = sample_instance(N, gamma, K, seed)
    Z = all_strings(N)
    keys = box_keys(K, inst.clauses0, Z)
    labels, idx = np.unique(keys, axis=0, return_inverse=True)
    idx = idx.ravel()
    omega = np.bincount(idx, minlength=len(labels))
    code = Z @ (1 << np.arange(N - 1, -1, -1))
    T = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for j in range(N):
        nb = code ^ (1 << (N - 1 - j))
        np.add.at(T, (idx, idx[nb]), 1)
    # P(X'|X) = T[X, X'] / (N Omega(X)); Bayes: P(X'|X) Omega(X) = P(X|X') Omega(X')
    for a, b in zip(*np.nonzero(T)):
        lhs = Fraction(int(T[a, b]), N * int(omega[a])) * int(omega[a])
        rhs = Fraction(int(T[b, a]), N * int(omega[b])) * int(omega[b])
        assert lhs == rhs


def test_effective_potential_identities():
    spec = make_problem("one-in-k", 3)
    u = uniform(3, 0.6)
    assert effective_potential(spec, FIG, 0.0) == energy_of_box(spec, FIG)
    assert effective_potential(spec, u, 2.5) == pytest.approx(energy_of_box(spec, u) - 2.5)


def test_restricted_ell():
    spec = make_problem("one-in-k", 3)
    u = uniform(3, 0.6)
    eu = energy_of_box(spec, u)
    assert restricted_ell(spec, 0.6, "energy-only", eu) == pytest.approx(1.0, abs=1e-9)
    assert restricted_ell(spec, 0.6, LandscapeSet.CLAUSE_COUNTS, u.Mm) == pytest.approx(1.0, abs=1e-9)
    direct = ell(max_entropy_state(spec, 0.6, energy=0.184)[0])
    assert restricted_ell(spec, 0.6, "energy-only", 0.184) == pytest.approx(direct, rel=1e-12)
    assert restricted_ell(spec, 0.6, "full", FIG) == ell(FIG)


def test_minima_large_field_single_uniformish():
    spec = make_problem("one-in-k", 4)
    pts = find_minima(spec, 0.6, 40.0)
    assert len(pts) == 1
    assert abs(pts[0].state.q) < 0.02 and pts[0].ell > 0.99


def test_minima_zero_field_on_energy_floor():
    spec = make_problem("one-in-k", 3)
    pts = find_minima(spec, 0.5, 0.0)
    assert pts[0].f == pytest.approx(0.0, abs=1e-9)
    assert pts[0].energy == pytest.approx(0.0, abs=1e-9)


def test_minima_invariants_and_determinism():
    spec = make_problem("one-in-k", 4)
    a = find_minima(spec, 0.676, 0.3, seed=3)
    b = find_minima(spec, 0.676, 0.3, seed=3)
    assert [p.f for p in a] == [p.f for p in b]
    for p in a:
        assert isinstance(p, PotentialPoint)
        assert p.f == pytest.approx(energy_of_box(spec, p.state) - p.Gamma * p.ell, abs=1e-12)
        assert 0 < p.ell <= 1
        co = _Coords(spec, 0.676, LandscapeSet.FULL)
        assert np.linalg.norm(co.f_grad(co.pack(p.state), 0.3)[1]) < 1e-7
    assert [p.f for p in a] == sorted(p.f for p in a)


def test_two_minima_coexist_near_transition():
    # K=4 at the printed gamma: two distinct minima at a field close to the jump
    spec = make_problem("one-in-k", 4)
    pts = find_minima(spec, 0.676, 0.3)
    assert len(pts) >= 2
    gap = max(abs(pts[0].state.q - pts[1].state.q), np.abs(pts[0].state.Mm - pts[1].state.Mm).max())
    assert gap > 1e-3


def test_ground_value_nonincreasing_in_field():
    spec = make_problem("one-in-k", 3)
    g = [find_minima(spec, 0.6, G)[0].f for G in np.linspace(0.0, 3.0, 13)]
    assert all(b <= a + 1e-12 for a, b in zip(g, g[1:]))


def test_energy_only_minima():
    spec = make_problem("one-in-k", 4)
    pts = find_minima(spec, 0.6, 1.0, "energy-only")
    assert pts and pts[0].f <= min(p.f for p in pts)
