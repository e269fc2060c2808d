import random

import pytest

from biokm.queueing import (
    NonPositiveServiceRate,
    UnstableQueue,
    mm1_stats,
    simulate_mm1,
    steady_state_table,
    write_steady_csv,
)

# recorded steady-state figures for arrival 42.8/s, service 61.4/s
FIG_REFERENCE = dict(
    rho=0.697068404,
    L=2.301075269,
    Lq=1.604006865,
    Ls=0.697068404,
    W=0.053763441,
    Wq=0.037476796,
    Ws=0.016286645,
    idle=0.302931596,
)

PI_REFERENCE = [
    0.302931596, 0.211164044, 0.147195783, 0.10260553, 0.071523073,
    0.049856474, 0.034753373, 0.024225478, 0.016886815, 0.011771265,
    0.008205377,
]


def test_reference_point_all_nine_quantities():
    stats = mm1_stats(42.8, 61.4)
    for name, expected in FIG_REFERENCE.items():
        assert getattr(stats, name) == pytest.approx(expected, abs=1e-9), name


def test_reference_utilization_per_run():
    # recorded cells carry four truncated decimals, so errors reach 1e-4
    for lam, mu, printed in ((57.8, 87.9, 0.6575), (26.7, 36.3, 0.7355), (43.9, 60.1, 0.7304)):
        rho = mm1_stats(lam, mu).rho
        assert rho == pytest.approx(printed, abs=1e-4)
        assert int(rho * 10_000) / 10_000 == printed


def test_empty_system():
    stats = mm1_stats(0.0, 10.0)
    assert stats.rho == 0.0
    assert stats.L == 0.0
    assert stats.idle == 1.0
    assert stats.W == stats.Wq == stats.Ws == 0.0


def test_unstable_and_invalid_inputs():
    with pytest.raises(UnstableQueue):
        mm1_stats(10.0, 10.0)
    with pytest.raises(UnstableQueue):
        mm1_stats(11.0, 10.0)
    with pytest.raises(NonPositiveServiceRate):
        mm1_stats(1.0, 0.0)
    with pytest.raises(ValueError):
        mm1_stats(-1.0, 10.0)


def test_identity_suite_1000_random_rate_pairs():
    rng = random.Random(42)
    for _ in range(1000):
        mu = rng.uniform(0.1, 1000.0)
        lam = mu * rng.uniform(0.001, 0.999)
        s = mm1_stats(lam, mu)
        assert s.L == pytest.approx(s.Lq + s.Ls, rel=1e-12)
        assert s.W == pytest.approx(s.Wq + s.Ws, rel=1e-12)
        assert s.L == pytest.approx(lam * s.W, rel=1e-12)
        assert s.Lq == pytest.approx(lam * s.Wq, rel=1e-12)
        assert s.Ls == pytest.approx(lam * s.Ws, rel=1e-12)
        assert s.idle == pytest.approx(1.0 - s.rho, rel=1e-12)


def test_steady_state_reference_rows():
    rows = steady_state_table(42.8, 61.4, epsilon=1e-6, j_max=10)
    assert len(rows) == 11
    for row, expected in zip(rows, PI_REFERENCE):
        assert row.probability == pytest.approx(expected, abs=1e-9)


def test_in_queue_rule():
    rows = steady_state_table(42.8, 61.4, j_max=5)
    assert [r.in_queue for r in rows] == [0, 0, 1, 2, 3, 4]


def test_idle_server_single_row():
    rows = steady_state_table(0.0, 5.0)
    assert len(rows) == 1
    assert rows[0].j == 0
    assert rows[0].probability == 1.0
    assert rows[0].in_queue == 0


def test_epsilon_stops_emission():
    rows = steady_state_table(1.0, 2.0, epsilon=0.2)
    # pi = 0.5, 0.25, 0.125: stops before the first value below 0.2
    assert [r.j for r in rows] == [0, 1]


def test_probabilities_decrease_and_normalize():
    rng = random.Random(5)
    for _ in range(20):
        mu = rng.uniform(1.0, 100.0)
        lam = mu * rng.uniform(0.05, 0.95)
        epsilon = 1e-9
        rows = steady_state_table(lam, mu, epsilon=epsilon, j_max=10_000)
        probs = [r.probability for r in rows]
        assert all(a > b for a, b in zip(probs, probs[1:]))
        rho = lam / mu
        assert sum(probs) >= 1.0 - epsilon / (1.0 - rho) - 1e-12


def test_steady_csv_layout(tmp_path):
    rows = steady_state_table(42.8, 61.4, j_max=10)
    out = write_steady_csv(tmp_path / "steady.csv", rows, idle=rows[0].probability)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "Messages,Steady-State Probability,Expected Idle Time"
    assert len(lines) == 12
    # the idle column repeats the same figure on every row
    idles = {line.rsplit(",", 1)[1] for line in lines[1:]}
    assert len(idles) == 1


def test_simulator_matches_analytics():
    stats = mm1_stats(42.8, 61.4)
    sim = simulate_mm1(42.8, 61.4, horizon_s=3600.0, seed=1)
    assert sim.arrivals >= 100_000
    assert sim.n_in_system == pytest.approx(stats.L, rel=0.05)
    assert sim.sojourn_s == pytest.approx(stats.W, rel=0.05)
    assert sim.utilization == pytest.approx(stats.rho, rel=0.05)


def test_simulator_satisfies_littles_identity():
    sim = simulate_mm1(42.8, 61.4, horizon_s=3600.0, seed=1)
    assert sim.n_in_system / sim.arrival_rate == pytest.approx(sim.sojourn_s, rel=0.02)


def test_simulator_deterministic_per_seed():
    a = simulate_mm1(10.0, 15.0, horizon_s=100.0, seed=7)
    b = simulate_mm1(10.0, 15.0, horizon_s=100.0, seed=7)
    c = simulate_mm1(10.0, 15.0, horizon_s=100.0, seed=8)
    assert a == b
    assert a != c


def test_simulator_no_arrivals():
    sim = simulate_mm1(0.0, 5.0, horizon_s=10.0, seed=1)
    assert sim.n_in_system == 0.0
    assert sim.utilization == 0.0
    assert sim.arrivals == 0


def test_simulator_oracle_agreement_ten_seeded_pairs():
    rng = random.Random(2026)
    for seed in range(10):
        mu = rng.uniform(5.0, 50.0)
        rho = rng.uniform(0.2, 0.9)
        lam = mu * rho
        stats = mm1_stats(lam, mu)
        horizon = 120_000.0 / lam  # >= 1e5 expected arrivals
        sim = simulate_mm1(lam, mu, horizon_s=horizon, seed=seed)
        assert sim.n_in_system == pytest.approx(stats.L, rel=0.05)
        assert sim.sojourn_s == pytest.approx(stats.W, rel=0.05)
