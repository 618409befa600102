from __future__ import annotations

import numpy as np
import pytest
from scipy.special import comb

from oracles import degree_projection_kl
from qalandscape.entropy import annealed_entropy, spin_sums
from qalandscape.errors import ConvergenceError, DomainError
from qalandscape.nextorder import (log_ell_grad, nextorder_ell, nextorder_entropy, poisson_closure,
                                   poisson_weights)
from qalandscape.potential import ell
from qalandscape.problem import MacroState

FIG = MacroState(0.422, np.array([0.048, 0.416, 0.123, 0.013]), 0.6)


def binomial_box(K, gamma, q):
    """Box whose per-spin degree means already match: unaffected by pinning."""
    x = (1 - q) / 2
    m = np.arange(K + 1)
    return MacroState(q, gamma * comb(K, m) * x**m * (1 - x) ** (K - m), gamma)


def random_state(K, gamma, seed):
    # a binomial box mixed with a random one keeps the degree means reachable
    rng = np.random.default_rng(seed)
    q = float(rng.uniform(-0.8, 0.8))
    M = 0.8 * binomial_box(K, gamma, q).Mm + 0.2 * gamma * rng.dirichlet(np.ones(K + 1))
    return MacroState(q, M, gamma)


@pytest.mark.parametrize("mean", [0.0, 0.3, 2.4, 17.0, 90.0])
def test_poisson_weights(mean):
    c = poisson_weights(mean)
    assert c.sum() == pytest.approx(1.0, abs=1e-13)
    k = np.arange(len(c))
    assert k @ c == pytest.approx(mean, rel=1e-12, abs=1e-12)


def test_closure_zero_field():
    cl = poisson_closure(0.0, 1.2, 1.2, 2.4)
    assert cl.lam == 0.0 and cl.h == 0.0


def test_closure_small_field_linear():
    gk = 2.4
    q, D = 1e-7, 3e-7
    cl = poisson_closure(q, (gk + D) / 2, (gk - D) / 2, gk)
    J = np.array([[1.0, gk], [gk, gk + gk * gk]])
    lin = np.linalg.solve(J, [q, D])
    assert [cl.lam, cl.h] == pytest.approx(lin, rel=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_closure_residuals(seed):
    s = random_state(3 + seed % 3, 0.5 + 0.4 * seed, seed)
    Mp, Mm = spin_sums(s.Mm)
    cl = poisson_closure(s.q, Mp, Mm, s.K * s.gamma)
    k = np.arange(len(cl.c_k))
    th = np.tanh(cl.lam + k * cl.h)
    assert cl.c_k @ th == pytest.approx(s.q, abs=1e-12)
    assert (k * cl.c_k) @ th == pytest.approx(Mp - Mm, abs=1e-11)
    with pytest.raises(DomainError):
        poisson_closure(1.0, Mp, Mm, s.K * s.gamma)


def test_unreachable_degree_means():
    # q = -0.66 with Poisson(5.1) degrees forces M+ - M- below -2.18
    with pytest.raises(ConvergenceError):
        poisson_closure(-0.66, 2.42, 2.68, 5.1)


def test_uniform_values():
    for K, g in [(3, 0.6), (4, 0.7), (5, 2.0)]:
        u = binomial_box(K, g, 0.0)
        assert nextorder_entropy(u) == pytest.approx(np.log(2), abs=1e-12)
        assert nextorder_ell(u) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("q", [-0.5, 0.1, 0.6])
def test_matching_degrees_reduce_to_base(q):
    s = binomial_box(4, 0.7, q)
    assert nextorder_entropy(s) == pytest.approx(annealed_entropy(s), abs=1e-12)
    assert nextorder_ell(s) == pytest.approx(ell(s), rel=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_below_base_by_projection_cost(seed):
    s = FIG if seed == 0 else random_state(3 + seed % 3, 0.3 + 0.2 * seed, seed)
    Mp, Mm = spin_sums(s.Mm)
    kl = degree_projection_kl(s.q, Mp, Mm, s.K * s.gamma)
    base, nxt = annealed_entropy(s), nextorder_entropy(s)
    assert nxt <= base + 1e-12
    assert base - nxt == pytest.approx(kl, abs=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_log_ell_gradient(seed):
    s = FIG if seed == 0 else random_state(3 + seed % 2, 0.4 + 0.3 * seed, seed)
    L, dq, dM = log_ell_grad(s.q, s.Mm, s.gamma)
    assert L == pytest.approx(np.log(nextorder_ell(s)))
    h = 1e-6
    fq = (log_ell_grad(s.q + h, s.Mm, s.gamma)[0] - log_ell_grad(s.q - h, s.Mm, s.gamma)[0]) / (2 * h)
    assert dq == pytest.approx(fq, rel=1e-5, abs=1e-8)
    for i in range(s.K + 1):
        e = np.zeros(s.K + 1)
        e[i] = h
        fd = (log_ell_grad(s.q, s.Mm + e, s.gamma)[0]
              - log_ell_grad(s.q, s.Mm - e, s.gamma)[0]) / (2 * h)
        assert dM[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_next_ell_bounded():
    for seed in range(20):
        s = random_state(4, 0.7, seed)
        v = nextorder_ell(s)
        assert 0.0 <= v <= 1.0 + 1e-12
