"""Panels, weekly log returns, scenario generators, PD repair, sparsity."""

import math

import numpy as np
import pytest

from dynggm.datasim import (
    DataError,
    ReturnsPanel,
    ScenarioSpec,
    empirical_omega,
    load_returns_csv,
    log_returns,
    nearest_pd,
    read_truth,
    simulate_scenario,
    write_panel_csv,
    write_truth,
)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(
        "date,A,B\n2020-01-01,0.5,-1.25\n2020-01-02,0.125,2.0\n2020-01-03,3.5,0.0\n"
    )
    panel = load_returns_csv(path)
    assert panel.labels == ("A", "B")
    assert panel.values.tolist() == [[0.5, -1.25], [0.125, 2.0], [3.5, 0.0]]
    out = tmp_path / "out.csv"
    write_panel_csv(panel, out)
    again = load_returns_csv(out)
    assert np.array_equal(again.values, panel.values)


def test_csv_standardization(tmp_path):
    path = tmp_path / "m.csv"
    rows = "\n".join(f"2020-01-{d:02d},{d * 0.3},{d * d}" for d in range(1, 9))
    path.write_text("date,A,B\n" + rows + "\n")
    panel = load_returns_csv(path, standardize=True)
    assert np.allclose(panel.values.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(panel.values.std(axis=0, ddof=1), 1.0, atol=1e-12)
    assert panel.standardized


def test_csv_ragged_row_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("date,A,B\n2020-01-01,1.0,2.0\n2020-01-02,1.0\n")
    with pytest.raises(DataError, match="line 3"):
        load_returns_csv(path)


def test_csv_non_numeric_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("date,A\n2020-01-01,1.0\n2020-01-02,zzz\n")
    with pytest.raises(DataError, match="line 3"):
        load_returns_csv(path)


def test_csv_duplicate_dates(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("date,A\n2020-01-01,1.0\n2020-01-01,2.0\n")
    with pytest.raises(DataError, match="duplicate date"):
        load_returns_csv(path)


# ---------------------------------------------------------------------------
# weekly log returns
# ---------------------------------------------------------------------------


def daily_panel(dates, values):
    return ReturnsPanel(
        values=np.asarray(values, dtype=float).reshape(len(dates), -1),
        labels=("A",),
        dates=tuple(dates),
    )


def test_weekly_zero_daily_returns():
    dates = [f"2021-03-{d:02d}" for d in range(1, 6)]  # Mon..Fri one week
    weekly = log_returns(daily_panel(dates, [0.0] * 5))
    assert weekly.T == 1
    assert weekly.values[0, 0] == 0.0


def test_weekly_single_day_week():
    weekly = log_returns(daily_panel(["2021-03-01"], [0.01]))
    assert weekly.values[0, 0] == pytest.approx(math.log(1.01), abs=1e-15)


def test_weekly_five_days_one_percent():
    dates = [f"2021-03-{d:02d}" for d in range(1, 6)]
    weekly = log_returns(daily_panel(dates, [0.01] * 5))
    assert weekly.values[0, 0] == pytest.approx(5 * math.log(1.01), abs=1e-12)


def test_weekly_additivity_matches_compounding(rng):
    # three full weeks (Mon-Fri), random small daily returns
    dates = []
    base = np.datetime64("2021-03-01")  # a Monday
    for w in range(3):
        for d in range(5):
            dates.append(str(base + np.timedelta64(w * 7 + d, "D")))
    r = rng.uniform(-0.03, 0.03, size=len(dates))
    weekly = log_returns(daily_panel(dates, r))
    assert weekly.T == 3
    total = weekly.values.sum()
    assert total == pytest.approx(math.log(np.prod(1 + r)), abs=1e-12)


def test_weekly_partial_boundary_weeks_dropped():
    # Friday-only first week, two full weeks, Monday-only last week
    dates = (
        ["2021-02-26"]
        + [f"2021-03-{d:02d}" for d in range(1, 6)]
        + [f"2021-03-{d:02d}" for d in range(8, 13)]
        + ["2021-03-15"]
    )
    weekly = log_returns(daily_panel(dates, [0.01] * len(dates)))
    assert weekly.T == 2


def test_weekly_rejects_total_loss():
    with pytest.raises(DataError):
        log_returns(daily_panel(["2021-03-01"], [-1.0]))


# ---------------------------------------------------------------------------
# nearest positive definite
# ---------------------------------------------------------------------------


def test_nearest_pd_identity_unchanged():
    eye = np.eye(3)
    assert nearest_pd(eye) is eye


def test_nearest_pd_clips_diagonal():
    out = nearest_pd(np.diag([1.0, -0.5]))
    assert out[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert out[1, 1] == pytest.approx(1e-8, abs=1e-12)


def test_nearest_pd_idempotent_on_random_pd(rng):
    A = rng.standard_normal((4, 4))
    M = A @ A.T + 0.5 * np.eye(4)
    assert nearest_pd(M) is M


def test_nearest_pd_output_is_pd(rng):
    for _ in range(10):
        A = rng.standard_normal((5, 5))
        M = 0.5 * (A + A.T)
        out = nearest_pd(M)
        np.linalg.cholesky(out)


def test_nearest_pd_requires_symmetry():
    with pytest.raises(ValueError):
        nearest_pd(np.array([[1.0, 2.0], [0.0, 1.0]]))


# ---------------------------------------------------------------------------
# empirical omega
# ---------------------------------------------------------------------------


def test_empirical_omega_independent_near_zero():
    vals = []
    for seed in range(5):
        Y = np.random.default_rng(seed).standard_normal((500, 5))
        vals.append(empirical_omega(Y))
    assert np.median(vals) <= 0.4


def test_empirical_omega_recovers_tridiagonal():
    p = 10
    om = np.eye(p) + np.diag(np.full(p - 1, 0.5), 1) + np.diag(np.full(p - 1, 0.5), -1)
    rng = np.random.default_rng(3)
    Y = rng.multivariate_normal(np.zeros(p), np.linalg.inv(om), size=10_000)
    assert empirical_omega(Y) == pytest.approx((p - 1) / p, abs=0.15)


def test_empirical_omega_needs_tall_panel():
    with pytest.raises(DataError):
        empirical_omega(np.zeros((3, 5)))


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(scenario=7)


def test_scenario_1_lln_identity_covariance():
    panel, truth = simulate_scenario(ScenarioSpec(1, seed=1, T=10_000))
    S = panel.values.T @ panel.values / panel.T
    assert np.allclose(S, np.eye(panel.p), atol=0.08)
    assert truth.points == ()
    assert truth.graphs[0].n_edges == 0


def test_scenario_2_structure():
    panel, truth = simulate_scenario(ScenarioSpec(2, seed=4))
    assert truth.graphs[0].n_edges == 9
    om = truth.precisions[0]
    np.linalg.cholesky(om)
    a = truth.graphs[0].adjacency()
    assert np.all((om != 0) == (a + np.eye(10) != 0))


def test_scenario_3_truth():
    panel, truth = simulate_scenario(ScenarioSpec(3, seed=5))
    assert truth.points == (70,)
    om0 = truth.precisions[0]
    assert np.all(np.diag(om0) == 1.0)
    assert np.all(np.diag(om0, 1) == 0.5)
    assert truth.graphs[0].n_edges == 9
    assert truth.graphs[1].n_edges == 9
    # five removals and five additions
    flips = truth.graphs[0].edge_mask ^ truth.graphs[1].edge_mask
    assert bin(flips).count("1") == 10
    np.linalg.cholesky(truth.precisions[1])
    assert panel.T == 200 and panel.p == 10


def test_scenario_4_structure():
    panel, truth = simulate_scenario(ScenarioSpec(4, seed=6))
    assert truth.points == (60, 100, 150)
    assert panel.p == 20
    assert len(truth.graphs) == 4
    assert truth.graphs[0].n_edges == 11
    for g, om in zip(truth.graphs, truth.precisions):
        np.linalg.cholesky(om)
        a = g.adjacency().astype(bool)
        off = ~np.eye(20, dtype=bool)
        assert np.all(om[off & ~a] == 0.0)
        assert np.all(om[a] != 0.0)


def test_scenario_5_covariance_path():
    panel, truth = simulate_scenario(ScenarioSpec(5, seed=7))
    path = truth.covariance_path
    assert truth.points == (60,)
    assert truth.smooth_from == 100
    # constant covariance within each pre-GARCH segment
    assert np.all(path[:59] == path[0])
    assert np.all(path[59:99] == path[59])
    assert np.allclose(path[59], 4.0 * path[0])
    # GARCH recursion holds exactly
    Y = panel.values
    for t in (100, 150, 200):
        expect = 0.21 * np.outer(Y[t - 2], Y[t - 2]) + 0.80 * path[t - 2]
        assert np.allclose(path[t - 1], expect, atol=1e-12)
    assert truth.graphs[0].n_edges == 21


def test_scenarios_deterministic_per_seed():
    for scen, T in ((1, 60), (2, 60), (3, 200), (4, 200), (5, 200)):
        a, _ = simulate_scenario(ScenarioSpec(scen, seed=11, T=T))
        b, _ = simulate_scenario(ScenarioSpec(scen, seed=11, T=T))
        assert np.array_equal(a.values, b.values)
        c, _ = simulate_scenario(ScenarioSpec(scen, seed=12, T=T))
        assert not np.array_equal(a.values, c.values)


def test_scenario_T_validation():
    with pytest.raises(ValueError, match="T must be"):
        ScenarioSpec(3, T=60)


def test_truth_round_trip(tmp_path):
    _, truth = simulate_scenario(ScenarioSpec(3, seed=8))
    path = tmp_path / "truth.json"
    write_truth(truth, path)
    back = read_truth(path)
    assert back.points == truth.points
    assert back.graphs == truth.graphs
    for a, b in zip(back.precisions, truth.precisions):
        assert np.allclose(a, b)
