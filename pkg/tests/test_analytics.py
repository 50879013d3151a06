from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lemsim.analytics import (
    STAT_COLUMNS,
    AnalyticsError,
    displacement,
    expected_points,
    match_stats,
    points_distribution,
    project_league,
    write_distribution_csv,
    write_distribution_summary_csv,
    write_projection_csv,
    write_stats_csv,
)
from lemsim.sim import SimulationResult


def result(home, away, home_counts=None, away_counts=None):
    z = np.zeros(33, dtype=np.int64)
    hc = z if home_counts is None else np.asarray(home_counts)
    ac = z if away_counts is None else np.asarray(away_counts)
    return SimulationResult(0, home, away, hc, ac, int(hc.sum() + ac.sum()))


class TestDisplacement:
    def test_two_swapped(self):
        assert displacement([1, 2, 3], [2, 1, 3]) == pytest.approx(2 / 3)

    def test_identity(self):
        assert displacement([1, 2, 3, 4], [1, 2, 3, 4]) == 0.0

    @given(st.permutations(list(range(1, 9))), st.permutations(list(range(1, 9))), st.randoms())
    def test_joint_permutation_invariant(self, a, b, rnd):
        idx = list(range(8))
        rnd.shuffle(idx)
        assert displacement(a, b) == pytest.approx(displacement([a[i] for i in idx], [b[i] for i in idx]))

    @given(st.permutations(list(range(1, 11))))
    def test_bounded_and_symmetric(self, perm):
        ref = list(range(1, 11))
        d = displacement(perm, ref)
        assert 0 <= d <= 5 and d == displacement(ref, perm)

    def test_length_mismatch(self):
        with pytest.raises(AnalyticsError):
            displacement([1, 2], [1])


class TestProjectLeague:
    def test_ranking_and_season_points(self):
        proj = project_league({"a": 1.2, "b": 2.0, "c": [3, 1, 0]}, {"a": 3, "b": 1, "c": 2}, top_k=2)
        assert [r.team for r in proj.rows] == ["b", "c", "a"]
        assert proj.rows[0].season_home_points == pytest.approx(38.0)
        assert proj.avg_displacement == 0.0 and proj.top_k == 2

    def test_home_ranks(self):
        proj = project_league({"a": 2.0, "b": 1.0}, {"a": (2, 1), "b": (1, 2)})
        assert proj.avg_displacement == 1.0 and proj.avg_home_displacement == 0.0

    def test_ties_broken_by_name(self):
        proj = project_league({"y": 1.0, "x": 1.0}, {"x": 1, "y": 2})
        assert [r.team for r in proj.rows] == ["x", "y"]

    def test_team_mismatch(self):
        with pytest.raises(AnalyticsError, match="teams differ"):
            project_league({"a": 1.0}, {"b": 1})

    def test_expected_points_inputs(self):
        assert expected_points({"expected_points": 1.5}) == 1.5
        assert expected_points([result(1, 0), result(0, 0)]) == 2.0
        with pytest.raises(AnalyticsError):
            expected_points([])

    def test_csv(self, tmp_path):
        proj = project_league({"a": 2.0, "b": 1.0}, {"a": 2, "b": 1})
        write_projection_csv(proj, tmp_path / "p.csv")
        rows = list(csv.reader(open(tmp_path / "p.csv")))
        assert rows[0][:5] == ["team", "exp_points", "exp_rank", "ref_rank", "displacement"]
        assert rows[-2][0] == "avg_displacement" and float(rows[-2][4]) == 1.0


class TestMatchStats:
    def test_group_averages(self, vocab):
        hc = np.zeros(33, np.int64)
        hc[vocab.id_of("simple pass")] = 10
        hc[vocab.id_of("cross")] = 2
        hc[vocab.id_of("shot")] = 3
        ac = np.zeros(33, np.int64)
        ac[vocab.id_of("air duel")] = 4
        ac[vocab.id_of("penalty")] = 1
        s = match_stats([result(2, 1, hc, ac), result(0, 1)])
        assert s["passes_home"] == 6.0 and s["shots_home"] == 1.5
        assert s["aerial_duels_away"] == 2.0 and s["shots_away"] == 0.5
        assert (s["goals_home"], s["goals_away"]) == (1.0, 1.0)
        assert set(s) == set(STAT_COLUMNS)

    def test_empty(self):
        with pytest.raises(AnalyticsError):
            match_stats([])

    def test_csv(self, tmp_path):
        write_stats_csv({"t": match_stats([result(1, 0)])}, tmp_path / "s.csv")
        rows = list(csv.reader(open(tmp_path / "s.csv")))
        assert rows[0] == ["team", *STAT_COLUMNS] and rows[1][0] == "t"


class TestPointsDistribution:
    def test_ten_loss_to_win_swaps_add_exactly_hundredth(self):
        base = np.array([0] * 1000 + [1] * 1000 + [3] * 1000)
        alt = base.copy()
        alt[:10] = 3
        _, d = points_distribution(base, {"alt": alt}, n_bootstrap=10)
        assert d.delta_mean == 0.01

    def test_half_point_delta(self):
        base = np.array([1, 1, 1, 1])
        # one draw becomes a win, another a loss: +2 -1 over 4 matches
        _, d = points_distribution(base, {"alt": np.array([3, 1, 1, 0])}, n_bootstrap=10)
        assert d.delta_mean == 0.25
        _, d = points_distribution(base, {"alt": np.array([3, 1, 1, 1])}, n_bootstrap=10)
        assert d.delta_mean == 0.5

    def test_all_draws(self):
        (d,) = points_distribution(np.ones(50, int), {}, n_bootstrap=100)
        assert d.variance == 0.0 and d.season_sd == 0.0 and d.season_mean == 19.0
        assert d.share == {0: 0.0, 1: 1.0, 3: 0.0}

    def test_identical_batches_zero_deltas(self):
        pts = np.random.default_rng(0).choice([0, 1, 3], 500)
        _, d = points_distribution(pts, {"same": pts.copy()}, n_bootstrap=50)
        assert d.delta_mean == 0.0 and d.delta_variance == 0.0

    def test_season_is_nineteen_times_mean(self):
        pts = np.random.default_rng(1).choice([0, 1, 3], 2000, p=[0.3, 0.3, 0.4])
        (d,) = points_distribution(pts, {}, n_bootstrap=4000, seed=3)
        se = np.sqrt(19 * d.variance / 4000)
        assert abs(d.season_mean - 19 * d.mean) < 4 * se

    def test_population_variance(self):
        (d,) = points_distribution(np.array([0, 3]), {}, n_bootstrap=2)
        assert d.mean == 1.5 and d.variance == 2.25

    def test_rejects_bad_points(self):
        with pytest.raises(AnalyticsError):
            points_distribution(np.array([0, 2]), {})
        with pytest.raises(AnalyticsError):
            points_distribution(np.array([], int), {})

    def test_deterministic_bootstrap(self):
        pts = np.array([0, 1, 3, 3, 1])
        a = points_distribution(pts, {}, seed=5)[0].season_quantiles
        b = points_distribution(pts, {}, seed=5)[0].season_quantiles
        assert a == b

    def test_csv(self, tmp_path):
        dists = points_distribution(np.array([0, 1]), {"x": np.array([3, 3])}, n_bootstrap=5)
        write_distribution_csv(dists, tmp_path / "d.csv")
        write_distribution_summary_csv(dists, tmp_path / "s.csv")
        long = list(csv.reader(open(tmp_path / "d.csv")))
        assert long[0] == ["scenario", "simulation_index", "points"] and len(long) == 5
        summary = list(csv.DictReader(open(tmp_path / "s.csv")))
        assert [r["scenario"] for r in summary] == ["baseline", "x"]
        assert float(summary[1]["delta_mean"]) == 2.5
