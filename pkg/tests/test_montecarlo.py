import math

import numpy as np
import pytest

from glwb_ltc.health import DEAD, HealthModel
from glwb_ltc.montecarlo import (
    BATCH, McEstimate, control_expectations, evaluate, fair_fee_mc, simulate,
    simulate_price_static, simulate_price_static_cv,
)
from glwb_ltc.params import BS, ContractParams, MarketParams
from oracles import deterministic_annuity

BSM = MarketParams(mode=BS)


def _sure_death(T, year):
    stay, die = np.eye(7), np.zeros((7, 7))
    die[:, DEAD - 1] = 1.0
    return [stay if n < year - 1 else die for n in range(T)]


def test_same_seed_same_paths():
    c = ContractParams()
    a = simulate(c, BSM, 1000, seed=3)
    b = simulate(c, BSM, 1000, seed=3)
    d = simulate(c, BSM, 1000, seed=4)
    assert np.array_equal(a.health, b.health) and np.array_equal(a.growth, b.growth)
    assert not np.array_equal(a.growth, d.growth)


def test_batches_are_prefix_stable():
    c = ContractParams()
    small = simulate(c, BSM, BATCH, seed=9)
    large = simulate(c, BSM, BATCH + 50, seed=9)
    assert np.array_equal(small.growth, large.growth[:BATCH])


def test_cir_determinism():
    c = ContractParams()
    a = simulate_price_static(c, MarketParams(), 2000, steps_per_year=4, seed=11)
    b = simulate_price_static(c, MarketParams(), 2000, steps_per_year=4, seed=11)
    assert a.mean == b.mean and a.half_width == b.half_width


@pytest.mark.parametrize("year", [1, 7, 30])
@pytest.mark.parametrize("alpha", [0.0, 0.015])
def test_riskless_fund_known_death(year, alpha):
    c = ContractParams(alpha=alpha)
    m = MarketParams(mode=BS, sigma_F=1e-12)
    mats = _sure_death(c.horizon, year)
    est = simulate_price_static(c, m, 50, seed=1, matrices=mats)
    ref = deterministic_annuity(100.0, 0.05, c.g, c.pi, alpha, c.beta, year)
    assert est.mean == pytest.approx(ref, rel=2e-6)
    assert est.half_width < 1e-4


def test_health_paths_follow_matrices():
    c = ContractParams()
    sc = simulate(c, BSM, 200_000, seed=5)
    dist = HealthModel().state_distribution(60, 10, 1)
    freq = np.bincount(sc.health[:, 10], minlength=8)[1:] / sc.n_paths
    se = np.sqrt(dist * (1 - dist) / sc.n_paths)
    assert np.all(np.abs(freq - dist) <= 5 * se + 1e-12)
    assert np.all(sc.health[:, -1] == DEAD)


def test_control_means_are_exact():
    c = ContractParams(alpha=0.015)
    mats = HealthModel().transition_sequence(60)
    sc = simulate(c, BSM, 200_000, seed=21, matrices=mats)
    _, C1, C2, C3, tau = evaluate(sc, c)
    means = control_expectations(c, 0.05, mats)
    for sample, mu in zip((C1, C2, C3, tau), means):
        se = sample.std(ddof=1) / math.sqrt(sample.size)
        assert abs(sample.mean() - mu) < 5 * se


def test_control_variates_shrink_interval():
    c = ContractParams(alpha=0.0155)
    est = simulate_price_static_cv(c, BSM, 100_000, seed=2)
    assert est.half_width < 0.6 * est.plain.half_width
    assert abs(est.mean - est.plain.mean) < est.plain.half_width


def test_cv_rejected_under_cir():
    with pytest.raises(ValueError):
        simulate_price_static_cv(ContractParams(), MarketParams(), 100)
    with pytest.raises(ValueError):
        fair_fee_mc(ContractParams(), MarketParams(), 100, cv=True)


def test_fair_fee_interval():
    ff = fair_fee_mc(ContractParams(), BSM, 50_000, seed=8)
    assert abs(ff.price.mean - 100.0) < 1e-3
    assert 0 < ff.half_width_bps < 20
    assert ff.contains(ff.alpha)
    assert 120 < ff.bps < 190


def test_csv_row():
    e = McEstimate(100.5, 0.25, 1000, 1, 7, 1.23456)
    assert e.csv_row("abc") == "abc,100.5,0.25,1000,1,7,1.235"
    assert e.contains(100.7) and not e.contains(100.8)
    assert len(McEstimate.CSV_HEADER.split(",")) == len(e.csv_row("x").split(","))


def test_rejects_single_path():
    with pytest.raises(ValueError):
        simulate(ContractParams(), BSM, 1)
