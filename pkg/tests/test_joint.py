import math

import numpy as np
import pytest

from glwb_ltc.grid import AccountGrid
from glwb_ltc.joint import (
    ProbabilityError, account_up_probability, decoupling_threshold, joint_probabilities,
    solve_joint, tabulate, zero_account_transition,
)
from glwb_ltc.params import BS, MarketParams
from glwb_ltc.rates import build
from oracles import dense_joint

MKT = MarketParams()


def test_product_form_example():
    # a zero-mean rate move makes the raw cross moment vanish at rho = 0
    *p, st = solve_joint(0.6, 0.5, -0.02, 0.02, -0.003, 0.003, 0.0, False)
    assert np.allclose(p, (0.2, 0.2, 0.3, 0.3), atol=1e-15) and st == 0
    *p, _ = solve_joint(0.6, 0.5, -0.02, 0.02, -0.001, 0.004, 0.0, True)
    assert np.allclose(p, (0.2, 0.2, 0.3, 0.3), atol=1e-15)


@pytest.mark.parametrize("target", [-1e-4, 0.0, 3e-5])
def test_certain_account_up(target):
    *p, _ = solve_joint(1.0, 0.4, -0.02, 0.02, -0.003, 0.003, target, False)
    assert p[0] == 0.0 and p[1] == 0.0
    assert p[2] + p[3] == pytest.approx(1.0, abs=1e-15)


def _lattice(N=100, market=MKT, T=2):
    return build(market, T, N), AccountGrid.build(100.0, market.sigma_F, 1.0 / N, 100.0)


def test_account_up_probability_recomputed():
    lat, grid = _lattice()
    j = grid.j_min + 3
    a = grid.values
    expected = (a[j] * (1 + 0.05 * 0.01) - a[j - 1]) / (a[j + 1] - a[j - 1])
    assert account_up_probability(grid, j, 0.05, 0.01) == pytest.approx(expected, abs=1e-15)


def test_matches_dense_solve():
    lat, grid = _lattice()
    for (i, k) in [(1, 1), (1, 0), (5, 3), (40, 25)]:
        for j in (grid.j_min - 7, grid.j_min, grid.j_min + 30):
            n = lat.node(i, k)
            R = lat.R[n]
            nxt = lat.band(i + 1).start - lat.k_min[i + 1]
            Rd, Ru = lat.R[nxt + lat.kd[n]], lat.R[nxt + lat.ku[n]]
            a = grid.values
            pA = account_up_probability(grid, j, R, lat.dt)
            target = MKT.rho * MKT.sigma_r * MKT.sigma_F * math.sqrt(R) * a[j] * lat.dt
            ref = dense_joint(pA, lat.p_up[n], a[j], a[j - 1], a[j + 1], R, Rd, Ru, target)
            got = joint_probabilities(grid, lat, MKT, j, i, k).as_tuple()
            assert np.abs(np.array(got) - ref).max() < 1e-10


def test_rho_to_zero_limit_at_zero_drift_node():
    # root with r0 = theta has no rate drift, so the product law solves the system
    lat, grid = _lattice()
    tiny = MarketParams(rho=1e-8)
    j = grid.j_min
    full = joint_probabilities(grid, lat, tiny, j, 0, 0).as_tuple()
    pA = account_up_probability(grid, j, 0.05, lat.dt)
    pR = lat.p_up[0]
    prod = ((1 - pA) * (1 - pR), (1 - pA) * pR, pA * (1 - pR), pA * pR)
    assert np.abs(np.array(full) - prod).max() < 1e-8
    exact = joint_probabilities(grid, lat, MarketParams(rho=0.0), j, 0, 0).as_tuple()
    assert np.abs(np.array(exact) - prod).max() < 1e-14


def test_decoupled_below_threshold():
    assert decoupling_threshold(MKT) == 0.025
    assert decoupling_threshold(MarketParams(r0=0.02)) == 0.01


def test_zero_account():
    lat, _ = _lattice()
    (a0, kd, pd), (a1, ku, pu) = zero_account_transition(lat, 3, 1)
    n = lat.node(3, 1)
    assert a0 == a1 == 0
    assert (kd, ku) == (lat.kd[n], lat.ku[n])
    assert pu == lat.p_up[n] and pd + pu == 1.0


@pytest.fixture(scope="module")
def full_table():
    lat, grid = _lattice(N=25, T=62)
    return lat, grid, tabulate(lat, grid, MKT)


def _table_moments(lat, grid, tab):
    inner = int(lat.offset[lat.steps])
    R = lat.R[:inner]
    base = np.repeat(lat.offset[1:] - lat.k_min[1:], lat.k_max[:-1] - lat.k_min[:-1] + 1)
    Rd = lat.R[base + lat.kd[:inner]] - R
    Ru = lat.R[base + lat.ku[:inner]] - R
    ed = math.exp(-grid.step) - 1
    eu = np.exp(tab.jump * grid.step) - 1
    pA = np.clip((R * lat.dt - ed) / (eu - ed), 0, 1)
    return R, Rd, Ru, ed, eu, pA, lat.p_up[:inner]


def test_table_marginals_everywhere(full_table):
    lat, grid, tab = full_table
    R, Rd, Ru, ed, eu, pA, pR = _table_moments(lat, grid, tab)
    p = tab.probs
    assert p.min() >= 0 and p.max() <= 1
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-12
    assert np.abs(p[:, 0] + p[:, 1] - (1 - pA)).max() < 1e-12
    assert np.abs(p[:, 0] + p[:, 2] - (1 - pR)).max() < 1e-12


def test_table_cross_moment_where_solved(full_table):
    lat, grid, tab = full_table
    R, Rd, Ru, ed, eu, pA, pR = _table_moments(lat, grid, tab)
    p = tab.probs
    target = MKT.rho * MKT.sigma_r * MKT.sigma_F * np.sqrt(R) * lat.dt
    got = p[:, 0] * ed * Rd + p[:, 1] * ed * Ru + p[:, 2] * eu * Rd + p[:, 3] * eu * Ru
    lo = np.maximum(0, (1 - pA) + (1 - pR) - 1)
    hi = np.minimum(1 - pA, 1 - pR)
    interior = (p[:, 0] > lo + 1e-9) & (p[:, 0] < hi - 1e-9) & (R >= 0.025 * math.sqrt(lat.dt))
    assert interior.sum() > 0.5 * R.size
    err = np.abs(got - target)[interior] / np.abs(target[interior])
    assert err.max() < 1e-9


def test_projection_counted_and_strict(full_table):
    lat, grid, tab = full_table
    assert tab.projected > 0
    with pytest.raises(ProbabilityError):
        tabulate(lat, grid, MKT, strict=True)
    far = int(np.argmax(lat.R[: int(lat.offset[lat.steps])]))
    i = int(np.searchsorted(lat.offset, far, side="right") - 1)
    k = far - lat.offset[i] + lat.k_min[i]
    with pytest.raises(ProbabilityError) as err:
        joint_probabilities(grid, lat, MKT, grid.j_min, i, k, strict=True)
    assert err.value.node == (i, grid.j_min, k)


def test_constant_rate_table_is_product():
    grid = AccountGrid.build(100.0, 0.2, 0.1, 100.0)
    bs = MarketParams(mode=BS)
    from glwb_ltc.rates import RateLattice
    flat = RateLattice.constant(0.05, 2, 10)
    tab = tabulate(flat, grid, bs)
    assert tab.projected == 0
    p = tab.probs
    a, r = p[:, 0] + p[:, 1], p[:, 0] + p[:, 2]
    assert np.abs(p[:, 0] - a * r).max() < 1e-15
    assert np.abs(p[:, 3] - (1 - a) * (1 - r)).max() < 1e-15
